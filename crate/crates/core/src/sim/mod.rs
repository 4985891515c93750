//! Deterministic desk-scale simulator.
//!
//! There is no contact or balance physics. Joints follow a first-order lag
//! towards their commanded targets and the trunk attitude is scripted. This
//! is enough to exercise the estimator, the controllers and the servo layer
//! as input/output systems and to replay runs bit for bit.

mod scenario;
mod script;

pub use scenario::{
    run_metadata, run_scenario, run_scenario_to, ControllerSpec, Resources, RunSummary, Scenario,
    TiltError, LOG_HEADER,
};
pub use script::{AttitudeKey, Disturbance, Sway, TrunkScript};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::estimator::{ImuSample, STANDARD_GRAVITY};
use crate::model::{JointPose, NUM_JOINTS};
use crate::orientation::RotationQuat;
use crate::servo::{ticks_to_angle, CommandSet, ServoCalibration};
use crate::{Error, Result};

/// Identifier of the noise generator, recorded next to every log.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng/rand_chacha-0.9/seed_from_u64";
/// Servo time constant at full effort, s.
pub const SERVO_TIME_CONSTANT: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct ImuNoiseConfig {
    /// Gyro white noise density, rad/s/sqrt(Hz).
    pub gyro_noise_density: f64,
    /// Constant gyro bias, rad/s.
    pub gyro_bias: [f64; 3],
    /// Accelerometer noise standard deviation, m/s².
    pub accel_noise: f64,
    /// Magnetometer noise standard deviation, field units.
    pub mag_noise: f64,
}

impl Default for ImuNoiseConfig {
    fn default() -> Self {
        ImuNoiseConfig {
            gyro_noise_density: 0.003,
            gyro_bias: [0.004, -0.003, 0.002],
            accel_noise: 0.08,
            mag_noise: 0.02,
        }
    }
}

impl ImuNoiseConfig {
    pub fn none() -> Self {
        ImuNoiseConfig {
            gyro_noise_density: 0.0,
            gyro_bias: [0.0; 3],
            accel_noise: 0.0,
            mag_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.gyro_noise_density, self.accel_noise, self.mag_noise];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::schema("noise", "noise levels must be finite and >= 0"));
        }
        if self.gyro_bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::schema("noise.gyroBias", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub q: JointPose,
    pub qd: JointPose,
    pub attitude: RotationQuat,
    /// Trunk angular velocity in the body frame, rad/s.
    pub rate: Vector3<f64>,
    pub time: f64,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl SimState {
    pub fn new(seed: u64, q: JointPose, attitude: RotationQuat) -> Self {
        SimState {
            q,
            qd: JointPose::zeros(),
            attitude,
            rate: Vector3::zeros(),
            time: 0.0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn gaussian(&mut self, sigma: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        sigma * z
    }
}

/// Advances joints, trunk truth and time by `dt`.
pub fn sim_step(
    state: &SimState,
    commands: &CommandSet,
    cal: &ServoCalibration,
    dt: f64,
    script: &TrunkScript,
) -> Result<SimState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let mut next = state.clone();
    let mut seen = [false; NUM_JOINTS];
    for c in &commands.commands {
        let j = c.joint;
        seen[j] = true;
        let q = state.q[j];
        if c.effort <= 0.0 {
            next.q[j] = q;
            next.qd[j] = 0.0;
            continue;
        }
        let target = ticks_to_angle(c.target_ticks, &cal.joints[j]);
        let tau = SERVO_TIME_CONSTANT / c.effort.min(1.0);
        let moved = target + (q - target) * (-dt / tau).exp();
        next.q[j] = moved;
        next.qd[j] = (moved - q) / dt;
    }
    for (j, s) in seen.iter().enumerate() {
        if !s {
            next.qd[j] = 0.0;
        }
    }

    next.time = state.time + dt;
    next.attitude = script.attitude_at(next.time)?;
    let delta = state.attitude.to_unit_quaternion().inverse() * next.attitude.to_unit_quaternion();
    next.rate = delta.scaled_axis() / dt;
    Ok(next)
}

/// Samples the IMU at the current state. `dt` is the sample period used to
/// scale the gyro noise density.
pub fn synthesize_imu(state: &mut SimState, noise: &ImuNoiseConfig, dt: f64) -> ImuSample {
    let r: UnitQuaternion<f64> = state.attitude.to_unit_quaternion();
    let gyro_sigma = if dt > 0.0 {
        noise.gyro_noise_density / dt.sqrt()
    } else {
        0.0
    };
    let bias = Vector3::from(noise.gyro_bias);
    let mut draw = |sigma: f64| Vector3::new(state.gaussian(sigma), state.gaussian(sigma), state.gaussian(sigma));
    let gyro_noise = draw(gyro_sigma);
    let accel_noise = draw(noise.accel_noise);
    let mag_noise = draw(noise.mag_noise);
    ImuSample {
        timestamp: state.time,
        gyro: state.rate + bias + gyro_noise,
        accel: r.inverse_transform_vector(&Vector3::new(0.0, 0.0, STANDARD_GRAVITY)) + accel_noise,
        mag: r.inverse_transform_vector(&Vector3::x()) + mag_noise,
    }
}
