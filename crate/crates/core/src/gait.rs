//! Walking: an open-loop central pattern generator driven by a gait phase,
//! plus fused-angle feedback that adds corrective actions in abstract and
//! inverse space.
//!
//! Phase convention: the left leg swings while `sin(phase) > 0`, the right
//! leg while `sin(phase) < 0`. The right leg runs the same waveform as the
//! left, shifted by pi.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::model::{abstract_to_joint, foot_pose, AbstractPose, JointPose, RobotModel, Side};
use crate::model::{ArmAbstract, LegAbstract, LegGeometry};
use crate::orientation::{wrap_angle, FusedAngles};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaitCommand {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
    pub walk: bool,
}

impl GaitCommand {
    pub fn walking(vx: f64, vy: f64, wz: f64) -> Self {
        GaitCommand {
            vx,
            vy,
            wz,
            walk: true,
        }
    }

    pub fn clamped(&self) -> Self {
        let c = |v: f64| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
        GaitCommand {
            vx: c(self.vx),
            vy: c(self.vy),
            wz: c(self.wz),
            walk: self.walk,
        }
    }
}

/// PD gains and output saturation of one feedback channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub sat: f64,
}

impl Channel {
    fn output(&self, dev: f64, rate: f64) -> f64 {
        (self.p * dev + self.d * rate).clamp(-self.sat, self.sat)
    }
}

/// Channels driven by fused pitch (`arm`, `hipY`, `footY`) and by fused
/// roll (`hipX`, `footX`, `footHeight`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Channels {
    pub arm: Channel,
    pub hip_y: Channel,
    pub hip_x: Channel,
    pub foot_y: Channel,
    pub foot_x: Channel,
    pub foot_height: Channel,
}

/// Step timing: phase slow-down per radian of lateral lag, capped at `sat`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingChannel {
    #[serde(rename = "T")]
    pub gain: f64,
    pub sat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct GaitConfig {
    #[serde(rename = "A_sag")]
    pub a_sag: f64,
    #[serde(rename = "A_lat")]
    pub a_lat: f64,
    #[serde(rename = "A_rot")]
    pub a_rot: f64,
    #[serde(rename = "A_step")]
    pub a_step: f64,
    #[serde(rename = "A_sway")]
    pub a_sway: f64,
    #[serde(rename = "A_arm")]
    pub a_arm: f64,
    /// Gait frequency, Hz.
    pub freq: f64,
    /// Leg extension of the halt pose and the base of the walking waveform.
    pub halt_extension: f64,
    pub arm_extension: f64,
    /// Outward arm roll keeping the arms clear of the trunk.
    pub arm_roll: f64,
    pub expected_pitch: f64,
    pub expected_roll: f64,
    pub channels: Channels,
    pub timing: TimingChannel,
    /// Deviations smaller than this (rad) are ignored by the feedback.
    pub deadband: f64,
    /// Command slew limit, units/s per axis.
    pub slew_rate: f64,
    /// Low-pass time constant of the deviation derivative, s.
    pub deriv_time_constant: f64,
    pub feedback_enabled: bool,
}

impl Default for GaitConfig {
    fn default() -> Self {
        GaitConfig::from_json(crate::assets::GAIT_JSON).expect("shipped gait config is valid")
    }
}

impl GaitConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GaitConfig =
            serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.a_sag,
            self.a_lat,
            self.a_rot,
            self.a_step,
            self.a_sway,
            self.a_arm,
            self.arm_roll,
            self.expected_pitch,
            self.expected_roll,
            self.timing.gain,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::schema("$", "gait parameters must be finite"));
        }
        if !(self.freq.is_finite() && self.freq > 0.0) {
            return Err(Error::schema("freq", "must be > 0"));
        }
        let ext_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !ext_ok(self.halt_extension) || !ext_ok(self.halt_extension + self.a_step.max(0.0)) {
            return Err(Error::schema(
                "haltExtension",
                "haltExtension and haltExtension + A_step must lie in [0, 1]",
            ));
        }
        if !ext_ok(self.arm_extension) {
            return Err(Error::schema("armExtension", "must lie in [0, 1]"));
        }
        let ch = &self.channels;
        for (name, c) in [
            ("arm", ch.arm),
            ("hipY", ch.hip_y),
            ("hipX", ch.hip_x),
            ("footY", ch.foot_y),
            ("footX", ch.foot_x),
            ("footHeight", ch.foot_height),
        ] {
            if !(c.p.is_finite() && c.d.is_finite() && c.sat.is_finite() && c.sat >= 0.0) {
                return Err(Error::schema(
                    format!("channels.{name}"),
                    "gains must be finite and sat >= 0",
                ));
            }
        }
        if !(self.timing.sat.is_finite() && self.timing.sat >= 0.0) {
            return Err(Error::schema("timing.sat", "must be >= 0"));
        }
        for (name, v) in [
            ("deadband", self.deadband),
            ("slewRate", self.slew_rate),
            ("derivTimeConstant", self.deriv_time_constant),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::schema(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrectiveActions {
    pub arm_angle_y: f64,
    pub hip_angle_y: f64,
    pub hip_angle_x: f64,
    pub foot_angle_y: f64,
    pub foot_angle_x: f64,
    /// Differential foot height, m: the left foot is raised by half of it,
    /// the right foot lowered by half.
    pub foot_height: f64,
    /// Phase rate adjustment, rad/s (never positive).
    pub timing_adjust: f64,
}

/// Fused pitch/roll deviation (or its rate).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TiltPair {
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitState {
    pub phase: f64,
    pub command: GaitCommand,
    pub last_deviation: Option<TiltPair>,
    pub deviation_rate: TiltPair,
    pub support: Side,
    /// Set when the foot-height correction had to be reduced to keep the
    /// leg IK reachable on the last tick.
    pub ik_limited: bool,
}

impl Default for GaitState {
    fn default() -> Self {
        GaitState {
            phase: 0.0,
            command: GaitCommand::default(),
            last_deviation: None,
            deviation_rate: TiltPair::default(),
            support: Side::Left,
            ik_limited: false,
        }
    }
}

impl GaitState {
    pub fn with_phase(phase: f64) -> Self {
        GaitState {
            phase: wrap_angle(phase),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitOutput {
    pub joints: JointPose,
    pub pose: AbstractPose,
    pub actions: CorrectiveActions,
    /// Some joint target had to be clamped into its limits.
    pub clamped: bool,
}

pub fn phase_advance(phase: f64, freq: f64, dt: f64, timing_adjust: f64) -> Result<f64> {
    if !(freq > 0.0 && freq.is_finite()) {
        return Err(Error::invalid(format!("gait frequency must be > 0, got {freq}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    Ok(wrap_angle(phase + TAU * freq * dt + timing_adjust * dt))
}

fn limb_phase(phase: f64, side: Side) -> f64 {
    match side {
        Side::Left => phase,
        Side::Right => phase - PI,
    }
}

pub fn open_loop_waveform(phase: f64, cmd: &GaitCommand, cfg: &GaitConfig) -> AbstractPose {
    let sway = cfg.a_sway * phase.sin();
    let mut pose = AbstractPose::default();
    for side in [Side::Left, Side::Right] {
        let lp = limb_phase(phase, side);
        let (s, c) = lp.sin_cos();
        *pose.leg_mut(side) = LegAbstract {
            extension: cfg.halt_extension + cfg.a_step * s.max(0.0),
            angle_x: cfg.a_lat * cmd.vy * c + sway,
            angle_y: -cfg.a_sag * cmd.vx * c,
            angle_z: cfg.a_rot * cmd.wz * c,
            foot_angle_x: 0.0,
            foot_angle_y: 0.0,
        };
        *pose.arm_mut(side) = ArmAbstract {
            extension: cfg.arm_extension,
            angle_x: arm_roll(side, cfg),
            angle_y: cfg.a_arm * cmd.vx * c,
        };
    }
    pose
}

fn arm_roll(side: Side, cfg: &GaitConfig) -> f64 {
    match side {
        Side::Left => cfg.arm_roll,
        Side::Right => -cfg.arm_roll,
    }
}

/// Crouched standing pose used while not walking.
pub fn halt_pose(cfg: &GaitConfig) -> AbstractPose {
    let mut pose = AbstractPose::default();
    for side in [Side::Left, Side::Right] {
        pose.leg_mut(side).extension = cfg.halt_extension;
        *pose.arm_mut(side) = ArmAbstract {
            extension: cfg.arm_extension,
            angle_x: arm_roll(side, cfg),
            angle_y: 0.0,
        };
    }
    pose
}

/// PD feedback on the fused tilt deviation.
///
/// `phase` is only used for step timing: the phase is slowed while the
/// trunk still leans towards the swing leg.
pub fn feedback_corrections(
    deviation: TiltPair,
    rate: TiltPair,
    phase: f64,
    cfg: &GaitConfig,
) -> CorrectiveActions {
    let gate = |d: f64| d.abs() >= cfg.deadband;
    let (pitch, pitch_rate) = if gate(deviation.pitch) {
        (deviation.pitch, rate.pitch)
    } else {
        (0.0, 0.0)
    };
    let (roll, roll_rate) = if gate(deviation.roll) {
        (deviation.roll, rate.roll)
    } else {
        (0.0, 0.0)
    };

    let ch = &cfg.channels;
    // Positive roll leans right, i.e. away from a swinging left leg.
    let swing = phase.sin();
    let lagging = roll * swing < 0.0;
    let timing_adjust = if lagging {
        -(cfg.timing.gain * roll.abs()).min(cfg.timing.sat)
    } else {
        0.0
    };

    CorrectiveActions {
        arm_angle_y: ch.arm.output(pitch, pitch_rate),
        hip_angle_y: ch.hip_y.output(pitch, pitch_rate),
        foot_angle_y: ch.foot_y.output(pitch, pitch_rate),
        hip_angle_x: ch.hip_x.output(roll, roll_rate),
        foot_angle_x: ch.foot_x.output(roll, roll_rate),
        foot_height: ch.foot_height.output(roll, roll_rate),
        timing_adjust,
    }
}

fn slew(current: f64, target: f64, max_step: f64) -> f64 {
    current + (target - current).clamp(-max_step, max_step)
}

pub fn apply_actions(pose: &mut AbstractPose, a: &CorrectiveActions) {
    for side in [Side::Left, Side::Right] {
        let leg = pose.leg_mut(side);
        leg.angle_y += a.hip_angle_y;
        leg.angle_x += a.hip_angle_x;
        leg.foot_angle_y += a.foot_angle_y;
        leg.foot_angle_x += a.foot_angle_x;
        leg.extension = leg.extension.clamp(0.0, 1.0);
        pose.arm_mut(side).angle_y += a.arm_angle_y;
    }
}

/// One control tick: smooth command, advance phase (with timing feedback),
/// generate the waveform, add corrective actions, convert to joints, apply
/// the foot-height correction through leg IK and clamp to joint limits.
pub fn gait_tick(
    state: &GaitState,
    cmd: &GaitCommand,
    fused: &FusedAngles,
    model: &RobotModel,
    cfg: &GaitConfig,
    dt: f64,
) -> Result<(GaitState, GaitOutput)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let cmd = cmd.clamped();

    if !cmd.walk {
        let pose = halt_pose(cfg);
        let joints = abstract_to_joint(&pose, model)?;
        let (joints, clamped) = model.clamp_to_limits(&joints);
        let next = GaitState {
            command: GaitCommand::default(),
            last_deviation: None,
            deviation_rate: TiltPair::default(),
            ik_limited: false,
            ..*state
        };
        return Ok((
            next,
            GaitOutput {
                joints,
                pose,
                actions: CorrectiveActions::default(),
                clamped,
            },
        ));
    }

    let step = cfg.slew_rate * dt;
    let smoothed = GaitCommand {
        vx: slew(state.command.vx, cmd.vx, step),
        vy: slew(state.command.vy, cmd.vy, step),
        wz: slew(state.command.wz, cmd.wz, step),
        walk: true,
    };

    let deviation = TiltPair {
        pitch: fused.pitch - cfg.expected_pitch,
        roll: fused.roll - cfg.expected_roll,
    };
    let raw_rate = match state.last_deviation {
        Some(prev) => TiltPair {
            pitch: (deviation.pitch - prev.pitch) / dt,
            roll: (deviation.roll - prev.roll) / dt,
        },
        None => TiltPair::default(),
    };
    let blend = dt / (cfg.deriv_time_constant + dt);
    let rate = TiltPair {
        pitch: state.deviation_rate.pitch + blend * (raw_rate.pitch - state.deviation_rate.pitch),
        roll: state.deviation_rate.roll + blend * (raw_rate.roll - state.deviation_rate.roll),
    };

    let mut actions = if cfg.feedback_enabled {
        feedback_corrections(deviation, rate, state.phase, cfg)
    } else {
        CorrectiveActions::default()
    };
    actions.timing_adjust = actions.timing_adjust.max(-TAU * cfg.freq);

    let phase = phase_advance(state.phase, cfg.freq, dt, actions.timing_adjust)?;
    let mut pose = open_loop_waveform(phase, &smoothed, cfg);
    apply_actions(&mut pose, &actions);
    let mut joints = abstract_to_joint(&pose, model)?;

    let mut ik_limited = false;
    if actions.foot_height != 0.0 {
        let (applied, limited) = apply_foot_height(&mut joints, actions.foot_height, model)?;
        actions.foot_height = applied;
        ik_limited = limited;
    }
    let (joints, clamped) = model.clamp_to_limits(&joints);

    let next = GaitState {
        phase,
        command: smoothed,
        last_deviation: Some(deviation),
        deviation_rate: rate,
        support: if phase.sin() > 0.0 { Side::Right } else { Side::Left },
        ik_limited,
    };
    Ok((
        next,
        GaitOutput {
            joints,
            pose,
            actions,
            clamped,
        },
    ))
}

/// Shifts the soles vertically in the trunk frame by `+h/2` (left) and
/// `-h/2` (right). Halves the offset until both legs are reachable; returns
/// the offset actually applied and whether it had to be reduced.
fn apply_foot_height(joints: &mut JointPose, height: f64, model: &RobotModel) -> Result<(f64, bool)> {
    let geos = [
        LegGeometry::from_model(model, Side::Left)?,
        LegGeometry::from_model(model, Side::Right)?,
    ];
    let mut h = height;
    for _ in 0..12 {
        if let Some(sol) = solve_both(joints, h, model, &geos) {
            for (side, q) in [Side::Left, Side::Right].into_iter().zip(sol) {
                for (j, v) in side.leg().all().into_iter().zip(q) {
                    joints[j] = v;
                }
            }
            return Ok((h, h != height));
        }
        h *= 0.5;
    }
    Ok((0.0, true))
}

fn solve_both(
    joints: &JointPose,
    h: f64,
    model: &RobotModel,
    geos: &[LegGeometry; 2],
) -> Option<[[f64; 6]; 2]> {
    let mut out = [[0.0; 6]; 2];
    for (i, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let mut target = foot_pose(model, joints, side);
        target.position.z += if side == Side::Left { 0.5 * h } else { -0.5 * h };
        out[i] = crate::model::solve_leg(&geos[i], &target).ok()?;
    }
    Some(out)
}
