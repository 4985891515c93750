use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hop_core::orientation::{fused_from_quat, fused_yaw_of, quat_from_fused, wrap_angle};
use hop_core::{FusedAngles, Hemisphere, RotationQuat};

fn random_quat(rng: &mut ChaCha8Rng) -> RotationQuat {
    // Uniform on S3 via normalised Gaussian samples.
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
        if let Ok(q) = RotationQuat::new(v[0], v[1], v[2], v[3]) {
            return q;
        }
    }
}

fn quat_distance(a: &RotationQuat, b: &RotationQuat) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    let plus = (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
    let minus = (0..4).map(|i| (a[i] + b[i]).abs()).fold(0.0, f64::max);
    plus.min(minus)
}

/// exp of the skew matrix by Taylor series with scaling and squaring.
fn matrix_exponential(w: Vector3<f64>) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0) / 1024.0;
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for n in 1..30 {
        term = term * k / n as f64;
        sum += term;
    }
    for _ in 0..10 {
        sum = sum * sum;
    }
    sum
}

#[test]
fn axis_angle_forcing_cases() {
    let id = RotationQuat::from_axis_angle(Vector3::z(), 0.0).unwrap();
    assert_eq!(id.to_array(), [1.0, 0.0, 0.0, 0.0]);
    let q = RotationQuat::from_axis_angle(Vector3::z(), FRAC_PI_2).unwrap();
    let h = 0.5f64.sqrt();
    for (a, b) in q.to_array().iter().zip([h, 0.0, 0.0, h]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(RotationQuat::from_axis_angle(Vector3::new(1.0, 1.0, 0.0), 1.0).is_err());
}

#[test]
fn axis_angle_matches_matrix_exponential() {
    let axis = Vector3::new(1.0, 1.0, 0.0) / 2f64.sqrt();
    let oracle = matrix_exponential(axis * 1.0);
    let q = RotationQuat::from_axis_angle(axis, 1.0).unwrap();
    let diff = (q.to_rotation_matrix() - oracle).abs().max();
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn pure_rotation_forcing_cases() {
    let f = fused_from_quat(&RotationQuat::IDENTITY);
    assert_eq!((f.yaw, f.pitch, f.roll, f.hemisphere), (0.0, 0.0, 0.0, Hemisphere::Upper));

    let pitch = fused_from_quat(&RotationQuat::from_axis_angle(Vector3::y(), 0.3).unwrap());
    assert!(pitch.yaw.abs() < 1e-12 && (pitch.pitch - 0.3).abs() < 1e-12 && pitch.roll.abs() < 1e-12);

    let roll = fused_from_quat(&RotationQuat::from_axis_angle(Vector3::x(), -0.7).unwrap());
    assert!(roll.yaw.abs() < 1e-12 && roll.pitch.abs() < 1e-12 && (roll.roll + 0.7).abs() < 1e-12);

    let yaw = quat_from_fused(&FusedAngles::new(FRAC_PI_2, 0.0, 0.0, Hemisphere::Upper)).unwrap();
    let want = RotationQuat::from_axis_angle(Vector3::z(), FRAC_PI_2).unwrap();
    assert!(quat_distance(&yaw, &want) < 1e-12);

    assert_eq!(quat_from_fused(&FusedAngles::default()).unwrap(), RotationQuat::IDENTITY);
}

#[test]
fn fused_yaw_decomposition() {
    let rz = RotationQuat::from_yaw(1.2);
    assert!((fused_yaw_of(&rz) - 1.2).abs() < 1e-12);
    let tilted = rz * RotationQuat::from_axis_angle(Vector3::y(), 0.4).unwrap();
    assert!((fused_yaw_of(&tilted) - 1.2).abs() < 1e-12);
    assert_eq!(fused_yaw_of(&RotationQuat::IDENTITY), 0.0);
}

#[test]
fn random_quaternion_round_trip_1e5() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let q = random_quat(&mut rng);
        let back = quat_from_fused(&fused_from_quat(&q)).unwrap();
        worst = worst.max(quat_distance(&q, &back));
    }
    assert!(worst <= 1e-9, "worst quaternion round-trip error {worst:e}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn fused_grid_round_trip() {
    let mut worst = 0.0f64;
    for yi in 0..12 {
        let yaw = -PI + (yi as f64 + 0.5) * PI / 6.0;
        for pi in -8..=8 {
            for ri in -8..=8 {
                let (pitch, roll) = (pi as f64 * 0.19, ri as f64 * 0.19);
                if pitch.sin().powi(2) + roll.sin().powi(2) > 1.0 {
                    continue;
                }
                for h in [Hemisphere::Upper, Hemisphere::Lower] {
                    let f = FusedAngles::new(yaw, pitch, roll, h);
                    let g = fused_from_quat(&quat_from_fused(&f).unwrap());
                    assert_eq!(g.hemisphere, h);
                    worst = worst
                        .max(wrap_angle(g.yaw - yaw).abs())
                        .max((g.pitch - pitch).abs())
                        .max((g.roll - roll).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-9, "{worst:e}");
}

#[test]
fn infeasible_tilt_is_rejected() {
    assert!(quat_from_fused(&FusedAngles::tilt(1.0, 1.0)).is_err());
}

fn fused_strategy() -> impl Strategy<Value = FusedAngles> {
    (-PI..PI, -1.0f64..1.0, -1.0f64..1.0, any::<bool>()).prop_filter_map(
        "tilt outside the unit disc",
        |(yaw, sp, sr, upper)| {
            if sp * sp + sr * sr > 0.999 {
                return None;
            }
            let h = if upper { Hemisphere::Upper } else { Hemisphere::Lower };
            Some(FusedAngles::new(wrap_angle(yaw), sp.asin(), sr.asin(), h))
        },
    )
}

proptest! {
    #[test]
    fn fused_round_trip(f in fused_strategy()) {
        let g = fused_from_quat(&quat_from_fused(&f).unwrap());
        prop_assert_eq!(g.hemisphere, f.hemisphere);
        prop_assert!(wrap_angle(g.yaw - f.yaw).abs() <= 1e-9);
        prop_assert!((g.pitch - f.pitch).abs() <= 1e-9);
        prop_assert!((g.roll - f.roll).abs() <= 1e-9);
    }

    #[test]
    fn yaw_additivity(f in fused_strategy(), alpha in -PI..PI) {
        let f = FusedAngles { hemisphere: Hemisphere::Upper, ..f };
        let q = quat_from_fused(&f).unwrap();
        let turned = RotationQuat::from_yaw(alpha) * q;
        let expected = wrap_angle(alpha + fused_yaw_of(&q));
        prop_assert!(wrap_angle(fused_yaw_of(&turned) - expected).abs() <= 1e-9);
    }

    #[test]
    fn tilt_purity(theta in 0.0f64..3.0, angle in -PI..PI) {
        let axis = Vector3::new(angle.cos(), angle.sin(), 0.0);
        let q = RotationQuat::from_axis_angle(axis, theta).unwrap();
        prop_assert!(fused_yaw_of(&q).abs() <= 1e-9);
    }

    #[test]
    fn ranges_and_norms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_quat(&mut rng);
        prop_assert!((q.norm() - 1.0).abs() <= 1e-9);
        prop_assert!(q.w() >= 0.0);
        let f = fused_from_quat(&q);
        prop_assert!(f.yaw > -PI && f.yaw <= PI);
        prop_assert!(f.pitch.abs() <= FRAC_PI_2 && f.roll.abs() <= FRAC_PI_2);
        prop_assert!(f.pitch.sin().powi(2) + f.roll.sin().powi(2) <= 1.0 + 1e-12);
        let p = q * random_quat(&mut rng);
        prop_assert!((p.norm() - 1.0).abs() <= 1e-9);
        prop_assert!(p.w() >= 0.0);
    }
}
