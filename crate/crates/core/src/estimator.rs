//! Nonlinear passive complementary attitude filter.
//!
//! Gyro rates are integrated on SO(3) and corrected by the cross product of
//! measured and estimated gravity direction. The magnetometer only ever
//! corrects heading: its error is applied as a rotation about the global
//! z-axis, so fused pitch and roll evolve identically with or without it.
//! Gyro bias is learned from the gravity error.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::orientation::{fused_from_quat, FusedAngles, RotationQuat};
use crate::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;
/// Updates with a longer step are treated as a stalled stream.
pub const MAX_STEP: f64 = 0.1;

/// One 9-axis reading. Gyro in rad/s, accel in m/s², magnetometer in
/// arbitrary units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub timestamp: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub mag: Vector3<f64>,
}

/// Hard/soft-iron correction `m' = matrix * (m - offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagCalibration {
    pub matrix: Matrix3<f64>,
    pub offset: Vector3<f64>,
}

impl Default for MagCalibration {
    fn default() -> Self {
        MagCalibration {
            matrix: Matrix3::identity(),
            offset: Vector3::zeros(),
        }
    }
}

impl MagCalibration {
    pub fn apply(&self, m: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * (m - self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Proportional gain on the gravity error, 1/s.
    pub kp: f64,
    /// Bias integration time constant, s.
    pub ti: f64,
    /// Heading correction gain, 1/s.
    pub km: f64,
    /// Accelerometer trust band around 1 g, m/s².
    pub accel_band: f64,
    /// Proportional gain at start-up, blended linearly into `kp` over
    /// `quick_learning_time` seconds while bias learning ramps in from zero.
    /// Zero disables the start-up phase.
    pub kp_quick: f64,
    pub quick_learning_time: f64,
    pub mag_calibration: MagCalibration,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            kp: 2.2,
            ti: 2.65,
            km: 0.2,
            accel_band: 4.0,
            kp_quick: 10.0,
            quick_learning_time: 3.0,
            mag_calibration: MagCalibration::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.kp) && self.kp > 0.0) {
            return Err(Error::invalid(format!("kp must be > 0, got {}", self.kp)));
        }
        if !(ok(self.ti) && self.ti > 0.0) {
            return Err(Error::invalid(format!("ti must be > 0, got {}", self.ti)));
        }
        if !(ok(self.km) && self.km >= 0.0) {
            return Err(Error::invalid(format!("km must be >= 0, got {}", self.km)));
        }
        if !(ok(self.accel_band) && self.accel_band > 0.0) {
            return Err(Error::invalid("accel_band must be > 0"));
        }
        if !(ok(self.quick_learning_time) && self.quick_learning_time >= 0.0) {
            return Err(Error::invalid("quick_learning_time must be >= 0"));
        }
        if self.quick_learning_time > 0.0 && !(ok(self.kp_quick) && self.kp_quick > 0.0) {
            return Err(Error::invalid("kp_quick must be > 0"));
        }
        let m = &self.mag_calibration;
        if m.matrix.iter().chain(m.offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("magnetometer calibration must be finite"));
        }
        Ok(())
    }

    /// Effective `(kp, ki)` after `elapsed` seconds of filtering. Holding
    /// the bias integrator back while a large start-up error is removed
    /// keeps it from winding up.
    fn gains_at(&self, elapsed: f64) -> (f64, f64) {
        if self.quick_learning_time <= 0.0 || elapsed >= self.quick_learning_time {
            return (self.kp, self.kp / self.ti);
        }
        let lambda = elapsed / self.quick_learning_time;
        (
            self.kp_quick + lambda * (self.kp - self.kp_quick),
            lambda * self.kp / self.ti,
        )
    }

    /// Weight in `[0, 1]` given to the accelerometer: full trust within half
    /// the band, linear taper across the second half, none beyond.
    pub fn accel_trust(&self, accel_norm: f64) -> f64 {
        let dev = (accel_norm - STANDARD_GRAVITY).abs();
        let half = 0.5 * self.accel_band;
        if dev <= half {
            1.0
        } else if dev >= self.accel_band {
            0.0
        } else {
            1.0 - (dev - half) / half
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub attitude: RotationQuat,
    pub gyro_bias: Vector3<f64>,
    /// Time integrated so far, used to schedule the start-up gains.
    pub elapsed: f64,
    pub config: FilterConfig,
}

impl FilterState {
    pub fn new(config: FilterConfig, initial: Option<RotationQuat>) -> Result<Self> {
        config.validate()?;
        Ok(FilterState {
            attitude: initial.unwrap_or_default(),
            gyro_bias: Vector3::zeros(),
            elapsed: 0.0,
            config,
        })
    }

    pub fn update(&self, sample: &ImuSample, dt: f64) -> Result<FilterState> {
        if !(dt > 0.0 && dt <= MAX_STEP) {
            return Err(Error::invalid(format!(
                "dt must be in (0, {MAX_STEP}] s, got {dt}"
            )));
        }
        let cfg = &self.config;
        let (kp, ki) = cfg.gains_at(self.elapsed);

        let up_est = self.attitude.gravity_axis_in_body();
        let accel_norm = sample.accel.norm();
        let correcting = accel_norm > 1e-9 && accel_norm.is_finite();

        let mut grav_err = Vector3::zeros();
        let mut heading_err = 0.0;
        if correcting {
            let trust = cfg.accel_trust(accel_norm);
            grav_err = trust * (sample.accel / accel_norm).cross(&up_est);

            if cfg.km > 0.0 {
                let m_world = self.attitude.rotate(&cfg.mag_calibration.apply(&sample.mag));
                if m_world.x.hypot(m_world.y) > 1e-9 {
                    heading_err = -m_world.y.atan2(m_world.x);
                }
            }
        }

        let rate = sample.gyro - self.gyro_bias + kp * grav_err;
        let bias = self.gyro_bias - ki * grav_err * dt;

        let mut attitude = self.attitude * RotationQuat::from_rotation_vector(rate * dt);
        if heading_err != 0.0 {
            attitude = RotationQuat::from_yaw(cfg.km * heading_err * dt) * attitude;
        }

        Ok(FilterState {
            attitude,
            gyro_bias: bias,
            elapsed: self.elapsed + dt,
            config: self.config,
        })
    }

    pub fn fused(&self) -> FusedAngles {
        fused_from_quat(&self.attitude)
    }
}

pub fn filter_init(config: FilterConfig, initial: Option<RotationQuat>) -> Result<FilterState> {
    FilterState::new(config, initial)
}

pub fn filter_update(state: &FilterState, sample: &ImuSample, dt: f64) -> Result<FilterState> {
    state.update(sample, dt)
}

pub fn estimate_fused(state: &FilterState) -> FusedAngles {
    state.fused()
}

/// Parses a replay stream with header `t,gx,gy,gz,ax,ay,az,mx,my,mz`.
pub fn parse_replay_csv(text: &str) -> Result<Vec<ImuSample>> {
    const HEADER: [&str; 10] = ["t", "gx", "gy", "gz", "ax", "ay", "az", "mx", "my", "mz"];
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::schema("line 1", "empty replay file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != HEADER {
        return Err(Error::schema(
            "line 1",
            format!("expected header `{}`", HEADER.join(",")),
        ));
    }
    let mut out: Vec<ImuSample> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::schema(format!("line {lineno}"), e.to_string()))?;
        if vals.len() != 10 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::schema(
                format!("line {lineno}"),
                "expected 10 finite values",
            ));
        }
        if let Some(prev) = out.last() {
            if vals[0] <= prev.timestamp {
                return Err(Error::schema(
                    format!("line {lineno}"),
                    "timestamps must be strictly increasing",
                ));
            }
        }
        out.push(ImuSample {
            timestamp: vals[0],
            gyro: Vector3::new(vals[1], vals[2], vals[3]),
            accel: Vector3::new(vals[4], vals[5], vals[6]),
            mag: Vector3::new(vals[7], vals[8], vals[9]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn stationary(t: f64) -> ImuSample {
        ImuSample {
            timestamp: t,
            gyro: Vector3::zeros(),
            accel: Vector3::new(0.0, 0.0, STANDARD_GRAVITY),
            mag: Vector3::new(1.0, 0.0, 0.0),
        }
    }

    #[test]
    fn default_init_is_identity() {
        let s = FilterState::new(FilterConfig::default(), None).unwrap();
        assert_eq!(s.attitude, RotationQuat::IDENTITY);
        assert_eq!(s.gyro_bias, Vector3::zeros());
    }

    #[test]
    fn negative_kp_rejected() {
        let cfg = FilterConfig {
            kp: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            FilterState::new(cfg, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = FilterConfig {
            km: 0.35,
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: FilterConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_dt_rejected() {
        let s = FilterState::new(FilterConfig::default(), None).unwrap();
        assert!(s.update(&stationary(0.0), 0.0).is_err());
        assert!(s.update(&stationary(0.0), -0.01).is_err());
        assert!(s.update(&stationary(0.0), 0.2).is_err());
    }

    #[test]
    fn stationary_identity_is_fixed_point() {
        let mut s = FilterState::new(FilterConfig::default(), None).unwrap();
        for k in 0..1000 {
            s = s.update(&stationary(k as f64 * 0.01), 0.01).unwrap();
        }
        assert!(s.attitude.angle_to(&RotationQuat::IDENTITY) < 1e-6);
    }

    #[test]
    fn zero_accel_is_pure_gyro_integration() {
        let s = FilterState::new(FilterConfig::default(), None).unwrap();
        let sample = ImuSample {
            timestamp: 0.0,
            gyro: Vector3::new(0.0, 0.3, 0.0),
            accel: Vector3::zeros(),
            mag: Vector3::new(0.0, 1.0, 0.0),
        };
        let next = s.update(&sample, 0.01).unwrap();
        assert_abs_diff_eq!(next.fused().pitch, 0.003, epsilon = 1e-12);
        assert_eq!(next.gyro_bias, Vector3::zeros());
    }

    #[test]
    fn accel_trust_taper() {
        let cfg = FilterConfig::default();
        assert_eq!(cfg.accel_trust(9.81), 1.0);
        assert_eq!(cfg.accel_trust(9.81 + 2.0), 1.0);
        assert_abs_diff_eq!(cfg.accel_trust(9.81 + 3.0), 0.5, epsilon = 1e-12);
        assert_eq!(cfg.accel_trust(9.81 + 4.5), 0.0);
    }

    #[test]
    fn replay_parser_checks_header_and_order() {
        let good = "t,gx,gy,gz,ax,ay,az,mx,my,mz\n0,0,0,0,0,0,9.81,1,0,0\n0.01,0,0,0,0,0,9.81,1,0,0\n";
        assert_eq!(parse_replay_csv(good).unwrap().len(), 2);
        let bad = "t,gx\n0,0\n";
        assert!(parse_replay_csv(bad).is_err());
        let unordered = "t,gx,gy,gz,ax,ay,az,mx,my,mz\n0.01,0,0,0,0,0,9.81,1,0,0\n0.01,0,0,0,0,0,9.81,1,0,0\n";
        assert!(parse_replay_csv(unordered).is_err());
    }
}
