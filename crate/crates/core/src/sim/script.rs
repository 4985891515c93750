use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::orientation::{FusedAngles, Hemisphere, RotationQuat};
use crate::{Error, Result};

/// Fused trunk attitude at a point in time, rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttitudeKey {
    pub t: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
}

/// Sinusoidal trunk sway, rad amplitude at `freq` Hz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sway {
    pub pitch: f64,
    pub roll: f64,
    pub freq: f64,
}

/// Raised-cosine tilt pulse peaking at `pitch`/`roll` halfway through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub t: f64,
    pub duration: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
}

/// Scripted trunk truth: smoothstep-blended keyframes plus sway, a constant
/// yaw rate and disturbance pulses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct TrunkScript {
    pub keys: Vec<AttitudeKey>,
    pub sway: Sway,
    pub yaw_rate: f64,
    pub disturbances: Vec<Disturbance>,
}

impl TrunkScript {
    pub fn validate(&self) -> Result<()> {
        for (i, k) in self.keys.iter().enumerate() {
            if ![k.t, k.yaw, k.pitch, k.roll].iter().all(|v| v.is_finite()) {
                return Err(Error::schema(format!("trunk.keys[{i}]"), "must be finite"));
            }
            if i > 0 && k.t <= self.keys[i - 1].t {
                return Err(Error::schema(format!("trunk.keys[{i}].t"), "times must increase"));
            }
        }
        for (i, d) in self.disturbances.iter().enumerate() {
            if !(d.duration > 0.0 && d.t.is_finite() && d.pitch.is_finite() && d.roll.is_finite()) {
                return Err(Error::schema(
                    format!("trunk.disturbances[{i}]"),
                    "needs finite values and duration > 0",
                ));
            }
        }
        let s = &self.sway;
        if !(s.freq >= 0.0 && s.freq.is_finite() && s.pitch.is_finite() && s.roll.is_finite()) {
            return Err(Error::schema("trunk.sway", "needs finite values and freq >= 0"));
        }
        if !self.yaw_rate.is_finite() {
            return Err(Error::schema("trunk.yawRate", "must be finite"));
        }
        Ok(())
    }

    pub fn fused_at(&self, t: f64) -> FusedAngles {
        let (mut yaw, mut pitch, mut roll) = match self.keys.as_slice() {
            [] => (0.0, 0.0, 0.0),
            [only] => (only.yaw, only.pitch, only.roll),
            keys => {
                let i = keys.partition_point(|k| k.t <= t);
                if i == 0 {
                    (keys[0].yaw, keys[0].pitch, keys[0].roll)
                } else if i == keys.len() {
                    let k = keys[i - 1];
                    (k.yaw, k.pitch, k.roll)
                } else {
                    let (a, b) = (keys[i - 1], keys[i]);
                    let s = (t - a.t) / (b.t - a.t);
                    let w = s * s * (3.0 - 2.0 * s);
                    (
                        a.yaw + w * (b.yaw - a.yaw),
                        a.pitch + w * (b.pitch - a.pitch),
                        a.roll + w * (b.roll - a.roll),
                    )
                }
            }
        };
        yaw += self.yaw_rate * t;
        let phase = TAU * self.sway.freq * t;
        pitch += self.sway.pitch * phase.sin();
        roll += self.sway.roll * phase.sin();
        for d in &self.disturbances {
            if t > d.t && t < d.t + d.duration {
                let w = 0.5 * (1.0 - (TAU * (t - d.t) / d.duration).cos());
                pitch += w * d.pitch;
                roll += w * d.roll;
            }
        }
        FusedAngles::new(
            crate::orientation::wrap_angle(yaw),
            pitch.clamp(-0.5 * PI, 0.5 * PI),
            roll.clamp(-0.5 * PI, 0.5 * PI),
            Hemisphere::Upper,
        )
    }

    pub fn attitude_at(&self, t: f64) -> Result<RotationQuat> {
        self.fused_at(t).to_quat().map_err(|e| {
            Error::invalid(format!("scripted trunk attitude infeasible at t = {t}: {e}"))
        })
    }
}
