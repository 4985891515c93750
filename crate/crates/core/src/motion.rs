//! Keyframe motions: file format, interpolation and the closed-loop player.

use serde::{Deserialize, Serialize};

use crate::canonical::to_canonical_string;
use crate::model::NUM_JOINTS;
use crate::orientation::FusedAngles;
use crate::{Error, Result};

/// Foot support weights, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Support {
    pub l: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    pub pos: [f64; NUM_JOINTS],
    pub vel: [f64; NUM_JOINTS],
    pub eff: [f64; NUM_JOINTS],
    pub sup: Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub p: f64,
    pub i: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisFlags {
    pub pitch: bool,
    pub roll: bool,
}

/// Per-joint weights of the pitch and roll corrections, each in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointMap {
    pub pitch: [f64; NUM_JOINTS],
    pub roll: [f64; NUM_JOINTS],
}

impl Default for JointMap {
    fn default() -> Self {
        JointMap {
            pitch: [0.0; NUM_JOINTS],
            roll: [0.0; NUM_JOINTS],
        }
    }
}

/// Stabilising feedback on fused pitch and roll.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidConfig {
    pub enabled: AxisFlags,
    pub pitch: PidGains,
    pub roll: PidGains,
    /// Bound on the magnitude of the integral contribution, rad.
    pub integral_limit: f64,
    pub map: JointMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    pub name: String,
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub pid: PidConfig,
}

/// Interpolated command at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub pos: [f64; NUM_JOINTS],
    pub vel: [f64; NUM_JOINTS],
    pub eff: [f64; NUM_JOINTS],
    pub sup: Support,
}

pub fn valid_motion_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Motion {
    pub fn from_json(text: &str) -> Result<Motion> {
        let m: Motion = serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_canonical_json(&self) -> String {
        to_canonical_string(self).expect("motion serialises")
    }

    pub fn duration(&self) -> f64 {
        self.keyframes.last().map(|k| k.t).unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !valid_motion_name(&self.name) {
            return Err(Error::schema(
                "name",
                "must be 1-64 characters of [A-Za-z0-9_-]",
            ));
        }
        if self.keyframes.len() < 2 {
            return Err(Error::schema("keyframes", "at least two keyframes are required"));
        }
        let mut prev_t = None;
        for (i, k) in self.keyframes.iter().enumerate() {
            let at = |field: &str| format!("keyframes[{i}].{field}");
            if !(k.t.is_finite() && k.t >= 0.0) {
                return Err(Error::schema(at("t"), "must be finite and >= 0"));
            }
            if i == 0 && k.t != 0.0 {
                return Err(Error::schema(at("t"), "first keyframe must be at t = 0"));
            }
            if let Some(p) = prev_t {
                if k.t <= p {
                    return Err(Error::schema(at("t"), "times must be strictly increasing"));
                }
            }
            prev_t = Some(k.t);
            for (field, arr) in [("pos", &k.pos), ("vel", &k.vel)] {
                if let Some(j) = arr.iter().position(|v| !v.is_finite()) {
                    return Err(Error::schema(format!("{}[{j}]", at(field)), "must be finite"));
                }
            }
            if let Some(j) = k.eff.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::schema(format!("{}[{j}]", at("eff")), "must lie in [0, 1]"));
            }
            for (field, v) in [("sup.l", k.sup.l), ("sup.r", k.sup.r)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::schema(at(field), "must lie in [0, 1]"));
                }
            }
        }
        let pid = &self.pid;
        for (path, g) in [("pid.pitch", pid.pitch), ("pid.roll", pid.roll)] {
            if !(g.p.is_finite() && g.i.is_finite() && g.d.is_finite()) {
                return Err(Error::schema(path, "gains must be finite"));
            }
        }
        if !(pid.integral_limit.is_finite() && pid.integral_limit >= 0.0) {
            return Err(Error::schema("pid.integral_limit", "must be finite and >= 0"));
        }
        for (axis, w) in [("pitch", &pid.map.pitch), ("roll", &pid.map.roll)] {
            if let Some(j) = w.iter().position(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::schema(
                    format!("pid.map.{axis}[{j}]"),
                    "weights must lie in [-1, 1]",
                ));
            }
        }
        Ok(())
    }
}

/// Cubic Hermite interpolation of positions (with analytic velocity) and
/// linear interpolation of efforts and support weights.
pub fn interpolate(motion: &Motion, t: f64) -> Result<Frame> {
    let kf = &motion.keyframes;
    let duration = motion.duration();
    if kf.len() < 2 {
        return Err(Error::invalid("motion needs at least two keyframes"));
    }
    if !t.is_finite() || t < -1e-6 || t > duration + 1e-6 {
        return Err(Error::invalid(format!(
            "time {t} outside motion range [0, {duration}]"
        )));
    }
    let t = t.clamp(0.0, duration);
    if let Some(k) = kf.iter().find(|k| k.t == t) {
        return Ok(Frame {
            pos: k.pos,
            vel: k.vel,
            eff: k.eff,
            sup: k.sup,
        });
    }

    // Segment [a, b] with a.t < t < b.t.
    let seg = kf.partition_point(|k| k.t <= t) - 1;
    let (a, b) = (&kf[seg], &kf[seg + 1]);
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;

    let mut f = Frame {
        pos: [0.0; NUM_JOINTS],
        vel: [0.0; NUM_JOINTS],
        eff: [0.0; NUM_JOINTS],
        sup: Support {
            l: a.sup.l + s * (b.sup.l - a.sup.l),
            r: a.sup.r + s * (b.sup.r - a.sup.r),
        },
    };
    for j in 0..NUM_JOINTS {
        f.pos[j] = h00 * a.pos[j] + h10 * h * a.vel[j] + h01 * b.pos[j] + h11 * h * b.vel[j];
        f.vel[j] = d00 * a.pos[j] + d10 * a.vel[j] + d01 * b.pos[j] + d11 * b.vel[j];
        f.eff[j] = a.eff[j] + s * (b.eff[j] - a.eff[j]);
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlayState {
    pub t: f64,
    /// Integrated pitch and roll error, rad·s.
    pub integral: [f64; 2],
    pub last_error: Option<[f64; 2]>,
    pub finished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayOutput {
    pub frame: Frame,
    /// PID correction applied per axis (pitch, roll), rad.
    pub correction: [f64; 2],
    pub finished: bool,
}

/// Emits the command for `state.t`, then advances time by `dt`.
/// After the end of the motion the last keyframe is held and `finished`
/// is set.
pub fn play_tick(
    motion: &Motion,
    state: &PlayState,
    fused: &FusedAngles,
    dt: f64,
) -> Result<(PlayState, PlayOutput)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let duration = motion.duration();
    let finished = state.t >= duration - 1e-9;
    let t = if finished { duration } else { state.t };
    let mut frame = interpolate(motion, t)?;
    let pid = &motion.pid;

    let error = [fused.pitch, fused.roll];
    let enabled = [pid.enabled.pitch, pid.enabled.roll];
    let gains = [pid.pitch, pid.roll];
    let mut integral = state.integral;
    let mut correction = [0.0; 2];
    for axis in 0..2 {
        if !enabled[axis] {
            integral[axis] = 0.0;
            continue;
        }
        let g = gains[axis];
        let e = error[axis];
        integral[axis] += e * dt;
        if g.i != 0.0 {
            let bound = pid.integral_limit / g.i.abs();
            integral[axis] = integral[axis].clamp(-bound, bound);
        }
        let de = state.last_error.map(|p| (e - p[axis]) / dt).unwrap_or(0.0);
        correction[axis] = g.p * e + g.i * integral[axis] + g.d * de;
    }
    if enabled.iter().any(|&e| e) {
        for j in 0..NUM_JOINTS {
            frame.pos[j] += pid.map.pitch[j] * correction[0] + pid.map.roll[j] * correction[1];
        }
    }

    let next = PlayState {
        t: if finished { duration } else { state.t + dt },
        integral,
        last_error: Some(error),
        finished,
    };
    Ok((
        next,
        PlayOutput {
            frame,
            correction,
            finished,
        },
    ))
}
