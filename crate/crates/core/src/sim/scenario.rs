use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{sim_step, synthesize_imu, ImuNoiseConfig, SimState, TrunkScript, RNG_ALGORITHM};
use crate::estimator::{FilterConfig, FilterState, STANDARD_GRAVITY};
use crate::gait::{gait_tick, GaitCommand, GaitConfig, GaitState};
use crate::model::{inverse_dynamics, JointPose, RobotModel, JOINT_NAMES, NUM_JOINTS};
use crate::motion::{play_tick, Motion, PlayState};
use crate::orientation::FusedAngles;
use crate::servo::{feedforward_offsets, package_commands, ServoCalibration};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControllerSpec {
    Gait { command: GaitCommand },
    Motion { motion: String },
}

/// Initial estimator error relative to the scripted truth, rad.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiltError {
    pub pitch: f64,
    pub roll: f64,
}

fn default_rate() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Scenario {
    pub name: String,
    /// Simulated time, s.
    pub duration: f64,
    /// Tick rate, Hz.
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub trunk: TrunkScript,
    #[serde(default)]
    pub noise: ImuNoiseConfig,
    #[serde(default)]
    pub initial_error: TiltError,
    #[serde(default = "default_true")]
    pub feedforward: bool,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::schema("duration", "must be > 0"));
        }
        if !(10.0..=1000.0).contains(&self.rate) {
            return Err(Error::schema("rate", "must lie in [10, 1000] Hz"));
        }
        if !(self.initial_error.pitch.is_finite() && self.initial_error.roll.is_finite()) {
            return Err(Error::schema("initialError", "must be finite"));
        }
        self.noise.validate()?;
        self.trunk.validate()
    }

    pub fn ticks(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }
}

/// Everything a scenario run needs besides the scenario itself.
#[derive(Debug, Clone)]
pub struct Resources {
    pub model: RobotModel,
    pub gait: GaitConfig,
    pub filter: FilterConfig,
    pub servo: ServoCalibration,
    pub motions: BTreeMap<String, Motion>,
}

impl Default for Resources {
    fn default() -> Self {
        let motions = crate::assets::MOTION_NAMES
            .iter()
            .map(|n| {
                let m = Motion::from_json(crate::assets::motion_json(n).expect("shipped"))
                    .expect("shipped motion is valid");
                (n.to_string(), m)
            })
            .collect();
        Resources {
            model: RobotModel::default_model(),
            gait: GaitConfig::default(),
            filter: FilterConfig::default(),
            servo: ServoCalibration::default(),
            motions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub rows: usize,
    /// Time at which a motion controller reported completion.
    pub completed_at: Option<f64>,
    /// RMS of the fused pitch/roll estimation error over the run, rad.
    pub tilt_rms: f64,
    pub tilt_max: f64,
    pub clamped_ticks: usize,
    pub ik_limited_ticks: usize,
}

pub fn log_header() -> String {
    let mut h = String::from("t,truth_pitch,truth_roll,est_pitch,est_roll,phase");
    for prefix in ["target", "actual"] {
        for name in JOINT_NAMES {
            h.push_str(&format!(",{prefix}_{name}"));
        }
    }
    h
}

/// Column names of the run log.
pub static LOG_HEADER: std::sync::LazyLock<String> = std::sync::LazyLock::new(log_header);

enum Controller<'a> {
    Gait(GaitState, GaitCommand),
    Motion(&'a Motion, PlayState),
}

/// Runs the tick loop (estimator, controller, servo layer, simulator) and
/// streams the CSV log to `out`.
pub fn run_scenario_to<W: Write>(scenario: &Scenario, res: &Resources, out: &mut W) -> Result<RunSummary> {
    scenario.validate()?;
    let io = |e| Error::io("<run log>", e);
    let dt = 1.0 / scenario.rate;
    let script = &scenario.trunk;

    let mut controller = match &scenario.controller {
        ControllerSpec::Gait { command } => Controller::Gait(GaitState::default(), *command),
        ControllerSpec::Motion { motion } => {
            let m = res
                .motions
                .get(motion)
                .ok_or_else(|| Error::schema("controller.motion", format!("unknown motion `{motion}`")))?;
            Controller::Motion(m, PlayState::default())
        }
    };

    let truth0 = script.attitude_at(0.0)?;
    let f0 = FusedAngles::from_quat(&truth0);
    let est0 = FusedAngles {
        pitch: f0.pitch + scenario.initial_error.pitch,
        roll: f0.roll + scenario.initial_error.roll,
        ..f0
    }
    .to_quat()?;
    let mut filter = FilterState::new(res.filter, Some(est0))?;
    let mut sim = SimState::new(scenario.seed, JointPose::zeros(), truth0);
    let mut sample = None;

    writeln!(out, "{}", *LOG_HEADER).map_err(io)?;
    let mut summary = RunSummary {
        rows: 0,
        completed_at: None,
        tilt_rms: 0.0,
        tilt_max: 0.0,
        clamped_ticks: 0,
        ik_limited_ticks: 0,
    };
    let mut sq_sum = 0.0;

    for tick in 0..=scenario.ticks() {
        let fail = |e: Error| Error::Controller {
            tick,
            message: e.to_string(),
        };
        if let Some(s) = &sample {
            filter = filter.update(s, dt).map_err(fail)?;
        }
        let est = filter.fused();

        let (targets, efforts, phase) = match &mut controller {
            Controller::Gait(state, cmd) => {
                let (next, o) =
                    gait_tick(state, cmd, &est, &res.model, &res.gait, dt).map_err(fail)?;
                if next.ik_limited {
                    summary.ik_limited_ticks += 1;
                }
                *state = next;
                (o.joints, [1.0; NUM_JOINTS], state.phase)
            }
            Controller::Motion(m, state) => {
                let t = state.t;
                let (next, o) = play_tick(m, state, &est, dt).map_err(fail)?;
                if o.finished && summary.completed_at.is_none() {
                    summary.completed_at = Some(sim.time);
                }
                *state = next;
                (JointPose(o.frame.pos), o.frame.eff, t)
            }
        };
        let (targets, _) = res.model.clamp_to_limits(&targets);

        let offsets = if scenario.feedforward {
            let g_body = -STANDARD_GRAVITY * filter.attitude.gravity_axis_in_body();
            let zero = JointPose::zeros();
            let tau = inverse_dynamics(&res.model, &targets, &zero, &zero, g_body);
            feedforward_offsets(&tau, &res.servo).map_err(fail)?
        } else {
            [0.0; NUM_JOINTS]
        };
        let commands = package_commands(&targets, &offsets, &efforts, &res.servo).map_err(fail)?;
        if !commands.clamped.is_empty() {
            summary.clamped_ticks += 1;
        }
        if tick == 0 {
            sim.q = commands.target_angles(&res.servo);
        }

        let truth = FusedAngles::from_quat(&sim.attitude);
        let (ep, er) = (est.pitch - truth.pitch, est.roll - truth.roll);
        sq_sum += ep * ep + er * er;
        summary.tilt_max = summary.tilt_max.max(ep.abs()).max(er.abs());

        let mut row = format!(
            "{},{},{},{},{},{}",
            sim.time, truth.pitch, truth.roll, est.pitch, est.roll, phase
        );
        let commanded = commands.target_angles(&res.servo);
        for v in commanded.0.iter().chain(sim.q.0.iter()) {
            row.push(',');
            row.push_str(&v.to_string());
        }
        writeln!(out, "{row}").map_err(io)?;
        summary.rows += 1;

        sim = sim_step(&sim, &commands, &res.servo, dt, script).map_err(fail)?;
        sim.time = (tick + 1) as f64 * dt;
        sample = Some(synthesize_imu(&mut sim, &scenario.noise, dt));
    }
    summary.tilt_rms = (sq_sum / (2.0 * summary.rows as f64)).sqrt();
    Ok(summary)
}

pub fn run_scenario(scenario: &Scenario, res: &Resources) -> Result<(String, RunSummary)> {
    let mut buf = Vec::new();
    let summary = run_scenario_to(scenario, res, &mut buf)?;
    Ok((String::from_utf8(buf).expect("log is ASCII"), summary))
}

/// Sidecar document describing how a log was produced.
pub fn run_metadata(scenario: &Scenario, summary: &RunSummary) -> serde_json::Value {
    serde_json::json!({
        "scenario": scenario.name,
        "seed": scenario.seed,
        "rate": scenario.rate,
        "rng": RNG_ALGORITHM,
        "rows": summary.rows,
        "completedAt": summary.completed_at,
        "tiltRms": summary.tilt_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_has_46_columns() {
        assert_eq!(LOG_HEADER.split(',').count(), 6 + 2 * NUM_JOINTS);
        assert!(LOG_HEADER.starts_with("t,truth_pitch,truth_roll,est_pitch,est_roll,phase,"));
    }

    #[test]
    fn short_gait_run() {
        let text = r#"{"name":"t","duration":0.5,"seed":7,
            "controller":{"type":"gait","command":{"vx":0.3,"vy":0,"wz":0,"walk":true}}}"#;
        let s = Scenario::from_json(text).unwrap();
        let (log, summary) = run_scenario(&s, &Resources::default()).unwrap();
        assert_eq!(summary.rows, 51);
        assert_eq!(log.lines().count(), 52);
    }

    #[test]
    fn unknown_motion_is_a_schema_error() {
        let text = r#"{"name":"t","duration":1,"controller":{"type":"motion","motion":"nope"}}"#;
        let s = Scenario::from_json(text).unwrap();
        assert!(matches!(run_scenario(&s, &Resources::default()), Err(Error::Schema { .. })));
    }

    #[test]
    fn bad_rate_is_rejected() {
        let text = r#"{"name":"t","duration":1,"rate":5,"controller":{"type":"motion","motion":"wave"}}"#;
        assert!(Scenario::from_json(text).is_err());
    }
}
