//! Rotation representations.
//!
//! [`RotationQuat`] is the canonical attitude carrier: unit norm, `w >= 0`.
//! [`FusedAngles`] split a rotation `R = Rz(yaw) * T` into a heading
//! component and a tilt `T` about a horizontal axis. Fused pitch and roll are
//! read off the global z-axis as seen from the body frame, so they do not
//! depend on heading:
//!
//! ```text
//! zG = R^T * ez
//! sin(pitch) = -zG.x     sin(roll) = zG.y     hemisphere = sign(zG.z)
//! ```
//!
//! For zero yaw this is the same as projecting the body z-axis into the
//! global frame, `sin(pitch) = zB.x`, `sin(roll) = -zB.y`.
//!
//! Convention at the singular tilt of pi (body upside down, `zG.z = -1`):
//! yaw is still reported as `2 * atan2(qz, qw)`, which is the continuous
//! limit and evaluates to 0 on the exact singularity.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::Mul;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Wraps an angle into `(-pi, pi]`.
///
/// Every angle-producing function in the crate goes through this helper so
/// the `+-pi` boundary is resolved the same way everywhere.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Unit quaternion in canonical form (`w >= 0`, unit norm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct RotationQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl RotationQuat {
    pub const IDENTITY: RotationQuat = RotationQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes and canonicalizes `(w, x, y, z)`.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        // Leave already-unit input untouched so save/load is idempotent.
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self::canonical(w, x, y, z));
        }
        Ok(Self::canonical(w / n, x / n, y / n, z / n))
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        // q and -q are the same rotation; pick w > 0, and on w == 0 make the
        // first non-zero vector component positive.
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        if flip {
            // `0.0 - v` keeps zeros positive.
            RotationQuat {
                w: 0.0 - w,
                x: 0.0 - x,
                y: 0.0 - y,
                z: 0.0 - z,
            }
        } else {
            RotationQuat { w, x, y, z }
        }
    }

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !angle.is_finite() || !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "axis must be a unit vector (norm {n}) and angle finite ({angle})"
            )));
        }
        let axis = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, s * axis.x, s * axis.y, s * axis.z)
    }

    /// Rotation about the global z-axis.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (0.5 * yaw).sin_cos();
        Self::canonical(c, 0.0, 0.0, s)
    }

    /// Exponential map of a rotation vector (`axis * angle`).
    pub fn from_rotation_vector(v: Vector3<f64>) -> Self {
        let angle = v.norm();
        if angle < 1e-300 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / angle;
        Self::new(c, k * v.x, k * v.y, k * v.z).unwrap_or(Self::IDENTITY)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(&self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.to_unit_quaternion() * v
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        self.to_unit_quaternion().to_rotation_matrix().into_inner()
    }

    pub fn to_unit_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::new_unchecked(Quaternion::new(self.w, self.x, self.y, self.z))
    }

    /// Angle of the relative rotation between `self` and `other`, in `[0, pi]`.
    pub fn angle_to(&self, other: &RotationQuat) -> f64 {
        // atan2 of the relative rotation stays accurate for tiny angles.
        let rel = self.conjugate() * *other;
        2.0 * Vector3::new(rel.x, rel.y, rel.z).norm().atan2(rel.w.abs())
    }

    /// Global z-axis expressed in the body frame.
    pub fn gravity_axis_in_body(&self) -> Vector3<f64> {
        let RotationQuat { w, x, y, z } = *self;
        Vector3::new(
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        )
    }
}

impl Default for RotationQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for RotationQuat {
    type Output = RotationQuat;

    fn mul(self, r: RotationQuat) -> RotationQuat {
        let l = self;
        let w = l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z;
        let x = l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y;
        let y = l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x;
        let z = l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w;
        RotationQuat::new(w, x, y, z).expect("product of unit quaternions")
    }
}

impl From<UnitQuaternion<f64>> for RotationQuat {
    fn from(q: UnitQuaternion<f64>) -> Self {
        let q = q.into_inner();
        RotationQuat::new(q.w, q.i, q.j, q.k).expect("unit quaternion")
    }
}

impl From<RotationQuat> for UnitQuaternion<f64> {
    fn from(q: RotationQuat) -> Self {
        q.to_unit_quaternion()
    }
}

impl TryFrom<[f64; 4]> for RotationQuat {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        RotationQuat::new(v[0], v[1], v[2], v[3])
    }
}

impl From<RotationQuat> for [f64; 4] {
    fn from(q: RotationQuat) -> Self {
        q.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hemisphere {
    #[serde(rename = "+1")]
    Upper,
    #[serde(rename = "-1")]
    Lower,
}

impl Hemisphere {
    pub fn sign(self) -> f64 {
        match self {
            Hemisphere::Upper => 1.0,
            Hemisphere::Lower => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Self {
        if v < 0.0 {
            Hemisphere::Lower
        } else {
            Hemisphere::Upper
        }
    }
}

/// Fused yaw, pitch, roll (radians) plus hemisphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub hemisphere: Hemisphere,
}

impl Default for FusedAngles {
    fn default() -> Self {
        FusedAngles {
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
            hemisphere: Hemisphere::Upper,
        }
    }
}

impl FusedAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64, hemisphere: Hemisphere) -> Self {
        FusedAngles {
            yaw,
            pitch,
            roll,
            hemisphere,
        }
    }

    /// Upper-hemisphere tilt with no heading.
    pub fn tilt(pitch: f64, roll: f64) -> Self {
        Self::new(0.0, pitch, roll, Hemisphere::Upper)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.yaw.is_finite() && self.pitch.is_finite() && self.roll.is_finite();
        if !finite {
            return Err(Error::invalid("fused angles must be finite"));
        }
        if self.pitch.abs() > FRAC_PI_2 || self.roll.abs() > FRAC_PI_2 {
            return Err(Error::invalid(format!(
                "fused pitch {} / roll {} outside [-pi/2, pi/2]",
                self.pitch, self.roll
            )));
        }
        let (sp, sr) = (self.pitch.sin(), self.roll.sin());
        if sp * sp + sr * sr > 1.0 + 1e-12 {
            return Err(Error::invalid(format!(
                "sin^2(pitch) + sin^2(roll) = {} exceeds 1",
                sp * sp + sr * sr
            )));
        }
        Ok(())
    }

    pub fn from_quat(q: &RotationQuat) -> Self {
        fused_from_quat(q)
    }

    pub fn to_quat(&self) -> Result<RotationQuat> {
        quat_from_fused(self)
    }
}

pub fn fused_yaw_of(q: &RotationQuat) -> f64 {
    wrap_angle(2.0 * q.z.atan2(q.w))
}

pub fn fused_from_quat(q: &RotationQuat) -> FusedAngles {
    let zg = q.gravity_axis_in_body();
    FusedAngles {
        yaw: fused_yaw_of(q),
        pitch: (-zg.x).clamp(-1.0, 1.0).asin(),
        roll: zg.y.clamp(-1.0, 1.0).asin(),
        hemisphere: Hemisphere::from_sign(zg.z),
    }
}

pub fn quat_from_fused(f: &FusedAngles) -> Result<RotationQuat> {
    f.validate()?;
    let (sp, sr) = (f.pitch.sin(), f.roll.sin());
    let horiz2 = (sp * sp + sr * sr).min(1.0);
    let cos_tilt = f.hemisphere.sign() * (1.0 - horiz2).sqrt();
    let tilt = horiz2.sqrt().atan2(cos_tilt);
    let (s_half, c_half) = (0.5 * tilt).sin_cos();

    // Tilt axis is (sin roll, sin pitch, 0) / sin(tilt). Near identity the
    // division is replaced by the half-angle identity to stay well conditioned.
    let (tx, ty) = if tilt < FRAC_PI_2 {
        (0.5 * sr / c_half, 0.5 * sp / c_half)
    } else if horiz2 > 0.0 {
        let h = horiz2.sqrt();
        (s_half * sr / h, s_half * sp / h)
    } else {
        // Exactly upside down: any horizontal axis works, take x.
        (s_half, 0.0)
    };

    let (sy, cy) = (0.5 * f.yaw).sin_cos();
    // Rz(yaw) * T with T = (c_half, tx, ty, 0)
    let w = cy * c_half;
    let x = cy * tx - sy * ty;
    let y = cy * ty + sy * tx;
    let z = sy * c_half;
    RotationQuat::new(w, x, y, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wrap_boundaries() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI + 0.1), -PI + 0.1, epsilon = 1e-12);
    }

    #[test]
    fn axis_angle_rejects_non_unit_axis() {
        assert!(RotationQuat::from_axis_angle(Vector3::new(1.0, 1.0, 0.0), 0.3).is_err());
    }

    #[test]
    fn canonical_form_has_non_negative_w() {
        let q = RotationQuat::new(-0.5, 0.5, -0.5, 0.5).unwrap();
        assert!(q.w() > 0.0);
        let q = RotationQuat::new(0.0, -1.0, 0.0, 0.0).unwrap();
        assert_eq!(q.to_array(), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn pure_yaw_at_pi() {
        let q = RotationQuat::from_yaw(PI);
        assert_eq!(fused_yaw_of(&q), PI);
        let q = RotationQuat::from_yaw(-PI);
        assert_eq!(fused_yaw_of(&q), PI);
    }

    #[test]
    fn quat_from_fused_rejects_infeasible_tilt() {
        let f = FusedAngles::tilt(1.0, 1.0);
        assert!(quat_from_fused(&f).is_err());
    }

    #[test]
    fn upside_down_singularity_uses_zero_yaw() {
        let q = RotationQuat::from_axis_angle(Vector3::x(), PI).unwrap();
        let f = fused_from_quat(&q);
        assert_eq!(f.hemisphere, Hemisphere::Lower);
        assert_eq!(f.yaw, 0.0);
        let back = quat_from_fused(&f).unwrap();
        assert!(back.angle_to(&q) < 1e-12);
    }

    #[test]
    fn lower_hemisphere_round_trip() {
        let f = FusedAngles::new(-2.0, 0.3, -0.2, Hemisphere::Lower);
        let q = quat_from_fused(&f).unwrap();
        let g = fused_from_quat(&q);
        assert_eq!(g.hemisphere, Hemisphere::Lower);
        assert_abs_diff_eq!(g.yaw, f.yaw, epsilon = 1e-12);
        assert_abs_diff_eq!(g.pitch, f.pitch, epsilon = 1e-12);
        assert_abs_diff_eq!(g.roll, f.roll, epsilon = 1e-12);
    }

    #[test]
    fn fused_pitch_ignores_heading() {
        let pitch = RotationQuat::from_axis_angle(Vector3::y(), 0.3).unwrap();
        let q = RotationQuat::from_yaw(1.1) * pitch;
        let f = fused_from_quat(&q);
        assert_abs_diff_eq!(f.pitch, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(f.roll, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.yaw, 1.1, epsilon = 1e-12);
    }
}
