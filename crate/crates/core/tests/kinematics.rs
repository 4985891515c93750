use nalgebra::{Matrix3, Matrix4, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hop_core::model::{
    abstract_to_joint, foot_pose, forward_kinematics, joint, joint_to_abstract,
    leg_inverse_kinematics, ArmAbstract, EffectorPose, LegAbstract, LegGeometry, Side, JOINT_NAMES,
};
use hop_core::{wrap_angle, AbstractPose, Error, JointPose, RobotModel, RotationQuat};

fn model() -> RobotModel {
    RobotModel::default_model()
}

fn random_within_limits(m: &RobotModel, rng: &mut ChaCha8Rng) -> JointPose {
    let mut q = JointPose::zeros();
    for j in 0..JOINT_NAMES.len() {
        let (lo, hi) = m.joint_link(j).limits.unwrap();
        q[j] = rng.random_range(lo..hi);
    }
    // Stay clear of the straight-knee singularity where the branch is ambiguous.
    for leg in [joint::LEFT_LEG, joint::RIGHT_LEG] {
        q[leg.knee_pitch] = rng.random_range(0.05..2.5);
    }
    q
}

fn random_abstract(rng: &mut ChaCha8Rng) -> AbstractPose {
    let mut leg = || LegAbstract {
        extension: rng.random_range(0.0..1.0),
        angle_x: rng.random_range(-1.0..1.0),
        angle_y: rng.random_range(-1.0..1.0),
        angle_z: rng.random_range(-1.0..1.0),
        foot_angle_x: rng.random_range(-1.0..1.0),
        foot_angle_y: rng.random_range(-1.0..1.0),
    };
    let (left_leg, right_leg) = (leg(), leg());
    let mut arm = || ArmAbstract {
        extension: rng.random_range(0.0..1.0),
        angle_x: rng.random_range(-1.0..1.0),
        angle_y: rng.random_range(-1.0..1.0),
    };
    let (left_arm, right_arm) = (arm(), arm());
    AbstractPose { left_leg, right_leg, left_arm, right_arm }
}

fn max_diff(a: &JointPose, b: &JointPose) -> f64 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Homogeneous transform of one link from its origin and a Rodrigues rotation.
fn rodrigues_transform(origin: Vector3<f64>, axis: Option<Vector3<f64>>, angle: f64) -> Matrix4<f64> {
    let mut t = Matrix4::identity();
    if let Some(k) = axis {
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        let r = Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos());
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    }
    t.fixed_view_mut::<3, 1>(0, 3).copy_from(&origin);
    t
}

#[test]
fn zero_pose_is_straight_legs() {
    let q = abstract_to_joint(&AbstractPose::default(), &model()).unwrap();
    assert!(q.0.iter().all(|v| *v == 0.0));
    assert_eq!(joint_to_abstract(&JointPose::zeros(), &model()).unwrap(), AbstractPose::default());
}

#[test]
fn half_extension_splits_knee_between_hip_and_ankle() {
    let mut p = AbstractPose::default();
    p.left_leg.extension = 0.5;
    let q = abstract_to_joint(&p, &model()).unwrap();
    let l = joint::LEFT_LEG;
    let knee = 2.0 * (1.0f64 - 0.5).acos();
    assert!((q[l.knee_pitch] - knee).abs() < 1e-12);
    assert!((q[l.hip_pitch] + knee / 2.0).abs() < 1e-12);
    assert!((q[l.ankle_pitch] + knee / 2.0).abs() < 1e-12);
    let fk = foot_pose(&model(), &q, Side::Left);
    assert!(fk.orientation.angle_to(&RotationQuat::IDENTITY) < 1e-12, "foot stays flat");
}

#[test]
fn abstract_rejects_out_of_range_extension() {
    let mut p = AbstractPose::default();
    p.right_arm.extension = 1.5;
    assert!(matches!(abstract_to_joint(&p, &model()), Err(Error::InvalidArgument(_))));
}

#[test]
fn abstract_round_trip_1e4() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let p = random_abstract(&mut rng);
        let q = abstract_to_joint(&p, &m).unwrap();
        let back = joint_to_abstract(&q, &m).unwrap();
        let q2 = abstract_to_joint(&back, &m).unwrap();
        assert!(max_diff(&q, &q2) <= 1e-9);
        for side in [Side::Left, Side::Right] {
            let (a, b) = (p.leg(side), back.leg(side));
            for (x, y) in [
                (a.extension, b.extension),
                (a.angle_x, b.angle_x),
                (a.angle_y, b.angle_y),
                (a.angle_z, b.angle_z),
                (a.foot_angle_x, b.foot_angle_x),
                (a.foot_angle_y, b.foot_angle_y),
                (p.arm(side).extension, back.arm(side).extension),
                (p.arm(side).angle_x, back.arm(side).angle_x),
                (p.arm(side).angle_y, back.arm(side).angle_y),
            ] {
                assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn fk_matches_matrix_chain() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let q = random_within_limits(&m, &mut rng);
        let fk = forward_kinematics(&m, &q);
        let mut chain: Vec<Matrix4<f64>> = Vec::new();
        for (i, link) in m.links().iter().enumerate() {
            let angle = link.joint.map(|j| q[j]).unwrap_or(0.0);
            let local = rodrigues_transform(link.origin, link.axis, angle);
            let world = match link.parent {
                Some(p) => chain[p] * local,
                None => Matrix4::identity(),
            };
            chain.push(world);
            let diff = (fk.by_index(i).to_homogeneous() - world).abs().max();
            assert!(diff < 1e-12, "{} differs by {diff:e}", link.name);
        }
    }
}

#[test]
fn knee_bend_obeys_law_of_cosines() {
    let m = model();
    let geo = LegGeometry::from_model(&m, Side::Left).unwrap();
    for i in 0..50 {
        let knee = i as f64 * 0.05;
        let mut q = JointPose::zeros();
        q[joint::LEFT_LEG.knee_pitch] = knee;
        q[joint::LEFT_LEG.hip_pitch] = 0.3 - 0.01 * i as f64;
        let fk = forward_kinematics(&m, &q);
        let hip = fk.get("l_hip_pitch").unwrap().translation.vector;
        let ankle = fk.get("l_ankle_pitch").unwrap().translation.vector;
        let (a, b) = (geo.thigh, geo.shank);
        let expected = (a * a + b * b + 2.0 * a * b * knee.cos()).sqrt();
        assert!(((ankle - hip).norm() - expected).abs() < 1e-12);
    }
}

#[test]
fn straight_down_target_gives_zero_pitches() {
    let m = model();
    let straight = foot_pose(&m, &JointPose::zeros(), Side::Right);
    let sol = leg_inverse_kinematics(&straight, &m, Side::Right).unwrap();
    assert!(sol.iter().all(|v| v.abs() < 1e-9), "{sol:?}");
}

#[test]
fn target_beyond_reach_is_unreachable() {
    let m = model();
    let mut target = foot_pose(&m, &JointPose::zeros(), Side::Left);
    target.position.z -= 0.001;
    match leg_inverse_kinematics(&target, &m, Side::Left) {
        Err(Error::Unreachable { excess }) => assert!((excess - 0.001).abs() < 1e-9),
        other => panic!("expected unreachable, got {other:?}"),
    }
}

#[test]
fn fk_ik_round_trip_1e4() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst_pos = 0.0f64;
    let mut worst_rot = 0.0f64;
    let mut worst_angle = 0.0f64;
    for _ in 0..10_000 {
        let q = random_within_limits(&m, &mut rng);
        for side in [Side::Left, Side::Right] {
            let target = foot_pose(&m, &q, side);
            let sol = leg_inverse_kinematics(&target, &m, side).unwrap();
            let mut q2 = q;
            for (k, j) in side.leg().all().iter().enumerate() {
                worst_angle = worst_angle.max(wrap_angle(sol[k] - q[*j]).abs());
                q2[*j] = sol[k];
            }
            let got: EffectorPose = foot_pose(&m, &q2, side);
            worst_pos = worst_pos.max((got.position - target.position).norm());
            worst_rot = worst_rot.max(got.orientation.angle_to(&target.orientation));
        }
    }
    assert!(worst_pos <= 1e-6 && worst_rot <= 1e-6, "{worst_pos:e} m, {worst_rot:e} rad");
    assert!(worst_angle <= 1e-6, "IK did not recover the joint angles: {worst_angle:e}");
}

proptest! {
    #[test]
    fn mirrored_pose_mirrors_feet(seed in any::<u64>()) {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_within_limits(&m, &mut rng);
        let l = foot_pose(&m, &q, Side::Left);
        let r = foot_pose(&m, &q.mirrored(), Side::Right);
        prop_assert!((l.position.x - r.position.x).abs() < 1e-12);
        prop_assert!((l.position.y + r.position.y).abs() < 1e-12);
        prop_assert!((l.position.z - r.position.z).abs() < 1e-12);
    }
}

