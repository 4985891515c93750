use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use hop_core::gait::{
    feedback_corrections, gait_tick, halt_pose, open_loop_waveform, phase_advance, Channel,
    GaitOutput, TiltPair,
};
use hop_core::model::Side;
use hop_core::{FusedAngles, GaitCommand, GaitConfig, GaitState, RobotModel};

const DT: f64 = 0.01;

fn run(
    cfg: &GaitConfig,
    start: GaitState,
    cmd: GaitCommand,
    fused: impl Fn(usize) -> FusedAngles,
    ticks: usize,
) -> Vec<(GaitState, GaitOutput)> {
    let model = RobotModel::default_model();
    let mut state = start;
    let mut out = Vec::with_capacity(ticks);
    for k in 0..ticks {
        let (next, o) = gait_tick(&state, &cmd, &fused(k), &model, cfg, DT).unwrap();
        state = next;
        out.push((next, o));
    }
    out
}

#[test]
fn phase_forcing_cases() {
    assert_eq!(phase_advance(0.0, 2.0, 0.25, 0.0).unwrap(), PI);
    let mut phi = 0.3;
    for _ in 0..1000 {
        phi = phase_advance(phi, 1.0, 1e-3, 0.0).unwrap();
    }
    assert!((phi - 0.3).abs() <= 1e-9, "{phi}");
    assert_eq!(phase_advance(0.7, 1.4, 0.01, -TAU * 1.4).unwrap(), 0.7);
    assert!(phase_advance(0.0, 0.0, 0.01, 0.0).is_err());
    assert!(phase_advance(0.0, 1.0, -0.01, 0.0).is_err());
}

#[test]
fn waveform_forcing_cases() {
    let cfg = GaitConfig { a_sway: 0.0, ..GaitConfig::default() };
    let idle = GaitCommand::walking(0.0, 0.0, 0.0);
    for k in 0..64 {
        let phi = -PI + k as f64 * TAU / 64.0;
        let a = open_loop_waveform(phi, &idle, &cfg);
        let b = open_loop_waveform(hop_core::wrap_angle(phi - PI), &idle, &cfg);
        assert!((a.left_leg.extension - b.right_leg.extension).abs() < 1e-12);
        for leg in [a.left_leg, a.right_leg] {
            assert_eq!((leg.angle_x, leg.angle_y, leg.angle_z), (0.0, 0.0, 0.0));
        }
    }
    let fwd = open_loop_waveform(0.0, &GaitCommand::walking(1.0, 0.0, 0.0), &cfg);
    assert!((fwd.left_leg.angle_y + cfg.a_sag).abs() < 1e-12);
    assert!((fwd.right_leg.angle_y - cfg.a_sag).abs() < 1e-12);
}

#[test]
fn stride_integral_of_sagittal_angle_vanishes() {
    let cfg = GaitConfig::default();
    let cmd = GaitCommand::walking(0.8, 0.3, -0.4);
    let n = 10_000;
    let h = TAU / n as f64;
    // Trapezoid rule over one full period.
    for side in [Side::Left, Side::Right] {
        let f = |i: usize| open_loop_waveform(-PI + i as f64 * h, &cmd, &cfg).leg(side).angle_y;
        let integral: f64 = (0..n).map(|i| 0.5 * h * (f(i) + f(i + 1))).sum();
        assert!(integral.abs() < 1e-12, "{integral:e}");
    }
}

#[test]
fn feedback_forcing_cases() {
    let cfg = GaitConfig::default();
    let zero = feedback_corrections(TiltPair::default(), TiltPair::default(), 0.4, &cfg);
    assert_eq!(zero, Default::default());

    let mut unit = GaitConfig::default();
    let one = Channel { p: 1.0, d: 0.0, sat: 10.0 };
    let ch = &mut unit.channels;
    for c in [&mut ch.arm, &mut ch.hip_y, &mut ch.hip_x, &mut ch.foot_y, &mut ch.foot_x, &mut ch.foot_height] {
        *c = one;
    }
    let a = feedback_corrections(TiltPair { pitch: 0.1, roll: 0.0 }, TiltPair::default(), 0.4, &unit);
    for v in [a.arm_angle_y, a.hip_angle_y, a.foot_angle_y] {
        assert!((v - 0.1).abs() < 1e-15);
    }
    assert_eq!((a.hip_angle_x, a.foot_angle_x, a.foot_height, a.timing_adjust), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn derivative_tracks_finite_difference_of_ramp() {
    let cfg = GaitConfig::default();
    let slope = 0.2;
    let dev = |k: usize| 0.02 + slope * k as f64 * DT;
    let out = run(&cfg, GaitState::default(), GaitCommand::walking(0.0, 0.0, 0.0), |k| FusedAngles::tilt(dev(k), -dev(k)), 200);
    let blend = DT / (cfg.deriv_time_constant + DT);
    for (k, (state, _)) in out.iter().enumerate().skip(1) {
        let fd = (dev(k) - dev(k - 1)) / DT;
        // First-order lag response to a step in the rate after the first sample.
        let bound = fd.abs() * (1.0 - blend).powi(k as i32) + 1e-9;
        assert!((state.deviation_rate.pitch - fd).abs() <= bound, "tick {k}");
        assert!((state.deviation_rate.roll + fd).abs() <= bound, "tick {k}");
    }
    assert!((out[199].0.deviation_rate.pitch - slope).abs() < 1e-6);
}

#[test]
fn walk_off_holds_halt_pose_and_phase() {
    let cfg = GaitConfig::default();
    let stop = GaitCommand::default();
    let out = run(&cfg, GaitState::with_phase(1.1), stop, |k| FusedAngles::tilt(0.01 * k as f64, 0.0), 50);
    let first = out[0].1.joints;
    for (state, o) in &out {
        assert_eq!(state.phase, 1.1);
        assert_eq!(o.joints, first);
        assert_eq!(o.pose, halt_pose(&cfg));
    }
}

#[test]
fn zero_deviation_reproduces_open_loop_bitwise() {
    let with = GaitConfig::default();
    let without = GaitConfig { feedback_enabled: false, ..GaitConfig::default() };
    let cmd = GaitCommand::walking(0.7, -0.2, 0.3);
    let level = |_| FusedAngles::tilt(with.expected_pitch, with.expected_roll);
    let a = run(&with, GaitState::default(), cmd, level, 500);
    let b = run(&without, GaitState::default(), cmd, level, 500);
    for ((sa, oa), (sb, ob)) in a.iter().zip(&b) {
        assert_eq!(sa.phase.to_bits(), sb.phase.to_bits());
        assert_eq!(oa.joints.0.map(f64::to_bits), ob.joints.0.map(f64::to_bits));
    }
}

#[test]
fn trajectory_is_periodic() {
    let cfg = GaitConfig::default();
    let per_period = 140;
    let dt = 1.0 / (cfg.freq * per_period as f64);
    let model = RobotModel::default_model();
    let cmd = GaitCommand::walking(0.5, 0.1, 0.2);
    let mut state = GaitState::default();
    let mut joints = Vec::new();
    for _ in 0..per_period * 4 {
        let (next, o) = gait_tick(&state, &cmd, &FusedAngles::default(), &model, &cfg, dt).unwrap();
        state = next;
        joints.push(o.joints);
    }
    // After the command slew has settled, one period later is the same pose.
    for k in per_period * 2..per_period * 3 {
        let d = joints[k].0.iter().zip(&joints[k + per_period].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-6, "tick {k}: {d:e}");
    }
}

#[test]
fn mirrored_inputs_give_mirrored_joints() {
    let cfg = GaitConfig::default();
    let tilt = |k: usize| (0.03 * (0.05 * k as f64).sin(), 0.04 * (0.07 * k as f64 + 0.3).sin());
    let a = run(&cfg, GaitState::with_phase(0.2), GaitCommand::walking(0.6, 0.4, -0.5), |k| {
        let (p, r) = tilt(k);
        FusedAngles::tilt(p, r)
    }, 600);
    let b = run(&cfg, GaitState::with_phase(0.2 - PI), GaitCommand::walking(0.6, -0.4, 0.5), |k| {
        let (p, r) = tilt(k);
        FusedAngles::tilt(p, -r)
    }, 600);
    let mut worst = 0.0f64;
    for ((_, oa), (_, ob)) in a.iter().zip(&b) {
        let m = oa.joints.mirrored();
        worst = m.0.iter().zip(&ob.joints.0).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
    }
    assert!(worst <= 1e-9, "{worst:e}");
}

#[test]
fn unreachable_foot_height_is_reduced_and_flagged() {
    let mut cfg = GaitConfig::default();
    cfg.channels.foot_height = Channel { p: 5.0, d: 0.0, sat: 0.5 };
    let out = run(&cfg, GaitState::with_phase(-PI / 2.0), GaitCommand::walking(0.0, 0.0, 0.0), |_| FusedAngles::tilt(0.0, 0.3), 3);
    let model = RobotModel::default_model();
    let (state, o) = &out[2];
    assert!(state.ik_limited);
    assert!(o.actions.foot_height.abs() < 0.5);
    assert!(model.within_limits(&o.joints));
}

fn cfg_with_extremes() -> GaitConfig {
    let mut cfg = GaitConfig::default();
    cfg.channels.foot_height.p = 0.3;
    cfg
}

proptest! {
    #[test]
    fn corrections_respect_saturation(
        p in -3.0f64..3.0, r in -3.0f64..3.0, pr in -50.0f64..50.0, rr in -50.0f64..50.0, phase in -PI..PI
    ) {
        let cfg = cfg_with_extremes();
        let a = feedback_corrections(TiltPair { pitch: p, roll: r }, TiltPair { pitch: pr, roll: rr }, phase, &cfg);
        let ch = &cfg.channels;
        prop_assert!(a.arm_angle_y.abs() <= ch.arm.sat);
        prop_assert!(a.hip_angle_y.abs() <= ch.hip_y.sat);
        prop_assert!(a.hip_angle_x.abs() <= ch.hip_x.sat);
        prop_assert!(a.foot_angle_y.abs() <= ch.foot_y.sat);
        prop_assert!(a.foot_angle_x.abs() <= ch.foot_x.sat);
        prop_assert!(a.foot_height.abs() <= ch.foot_height.sat);
        prop_assert!(a.timing_adjust <= 0.0 && a.timing_adjust.abs() <= cfg.timing.sat);
    }

    #[test]
    fn joint_targets_stay_within_limits(
        vx in -1.5f64..1.5, vy in -1.5f64..1.5, wz in -1.5f64..1.5,
        pitch in -0.6f64..0.6, roll in -0.6f64..0.6, phase in -PI..PI
    ) {
        let model = RobotModel::default_model();
        let cfg = GaitConfig::default();
        let mut state = GaitState::with_phase(phase);
        for k in 0..30 {
            let fused = FusedAngles::tilt(pitch * (k as f64 * 0.3).cos(), roll);
            let (next, o) = gait_tick(&state, &GaitCommand::walking(vx, vy, wz), &fused, &model, &cfg, DT).unwrap();
            prop_assert!(model.within_limits(&o.joints));
            prop_assert!(next.phase > -PI && next.phase <= PI);
            prop_assert!(next.command.vx.abs() <= 1.0 && next.command.vy.abs() <= 1.0 && next.command.wz.abs() <= 1.0);
            state = next;
        }
    }

    #[test]
    fn tick_is_a_pure_transition(phase in -PI..PI, roll in -0.2f64..0.2) {
        let model = RobotModel::default_model();
        let cfg = GaitConfig::default();
        let s = GaitState::with_phase(phase);
        let cmd = GaitCommand::walking(0.4, 0.0, 0.1);
        let f = FusedAngles::tilt(0.05, roll);
        let (s1, o1) = gait_tick(&s, &cmd, &f, &model, &cfg, DT).unwrap();
        let (s2, o2) = gait_tick(&s, &cmd, &f, &model, &cfg, DT).unwrap();
        prop_assert_eq!(s1, s2);
        prop_assert_eq!(o1.joints, o2.joints);
    }
}
