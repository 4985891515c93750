//! Wide-angle camera geometry.
//!
//! Lens model: equidistant fisheye with an odd radial polynomial,
//! `theta_d = theta (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8)`,
//! where `theta` is the angle of a ray from the optical axis.
//!
//! The optical frame has z along the optical axis, x along image u and y
//! along image v. The extrinsic pose is that of a mount frame in the head
//! link frame, with x forward, y left, z up; an identity extrinsic looks
//! straight along the head x axis.

mod calibration;
mod ground;
mod lut;
mod nelder_mead;

pub use calibration::{
    calibrate_extrinsics, parse_correspondences_csv, reprojection_rms, CalibrationResult,
    Correspondence,
};
pub use ground::{camera_pose, project_to_ground, render_ground_point, PoseContext};
pub use lut::ProjectionLut;
pub use nelder_mead::{nelder_mead, NelderMeadConfig, NelderMeadResult};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::orientation::RotationQuat;
use crate::{Error, Result};

pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITERATIONS: usize = 20;
/// Grid spacing of the monotonicity check, rad.
pub const MONOTONIC_GRID: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extrinsic {
    pub position: Vector3<f64>,
    pub orientation: RotationQuat,
}

impl Default for Extrinsic {
    fn default() -> Self {
        Extrinsic {
            position: Vector3::zeros(),
            orientation: RotationQuat::IDENTITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CameraModel {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k: [f64; 4],
    /// Rated half field of view, degrees.
    pub half_fov_deg: f64,
    pub extrinsic: Extrinsic,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel::from_json(crate::assets::CAMERA_JSON).expect("shipped camera model is valid")
    }
}

/// Maps optical-frame vectors into the mount frame.
pub(crate) fn optical_to_mount() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

impl CameraModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: CameraModel =
            serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::ModelInvalid("image size must be positive".into()));
        }
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.fx) || !pos(self.fy) {
            return Err(Error::ModelInvalid("fx and fy must be > 0".into()));
        }
        if !(self.cx.is_finite() && self.cy.is_finite() && self.k.iter().all(|k| k.is_finite())) {
            return Err(Error::ModelInvalid("intrinsics must be finite".into()));
        }
        if !(self.half_fov_deg > 0.0 && self.half_fov_deg < 90.0) {
            return Err(Error::ModelInvalid("half field of view must lie in (0, 90) deg".into()));
        }
        self.check_monotonic()
    }

    /// Largest ray angle accepted by [`CameraModel::distort_point`].
    pub fn max_theta(&self) -> f64 {
        (1.2 * self.half_fov_deg.to_radians()).min(std::f64::consts::FRAC_PI_2)
    }

    pub fn radial(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        let [k1, k2, k3, k4] = self.k;
        theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))))
    }

    pub fn radial_derivative(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        let [k1, k2, k3, k4] = self.k;
        1.0 + t2 * (3.0 * k1 + t2 * (5.0 * k2 + t2 * (7.0 * k3 + t2 * 9.0 * k4)))
    }

    /// Checks that the radial function increases over the accepted field of
    /// view and over every angle that lands inside the image.
    pub fn check_monotonic(&self) -> Result<()> {
        let corner = (self.cx.max(self.width as f64 - self.cx) / self.fx)
            .hypot(self.cy.max(self.height as f64 - self.cy) / self.fy);
        let mut theta = 0.0;
        let mut prev = self.radial(0.0);
        while theta < self.max_theta() || prev < corner {
            theta += MONOTONIC_GRID;
            let r = self.radial(theta);
            if r <= prev || self.radial_derivative(theta) <= 0.0 {
                return Err(Error::ModelInvalid(format!(
                    "radial distortion is not monotonic at {:.3} rad",
                    theta
                )));
            }
            if theta > std::f64::consts::PI {
                return Err(Error::ModelInvalid(
                    "image corners lie beyond 180 deg from the optical axis".into(),
                ));
            }
            prev = r;
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..=self.width as f64).contains(&u) && (0.0..=self.height as f64).contains(&v)
    }

    /// Projects a ray in the optical frame to a pixel.
    pub fn distort_point(&self, ray: &Vector3<f64>) -> Result<(f64, f64)> {
        let n = ray.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("ray must be finite and non-zero"));
        }
        let rho = ray.x.hypot(ray.y);
        let theta = rho.atan2(ray.z);
        if ray.z / n <= self.max_theta().cos() {
            return Err(Error::OutOfView {
                angle_deg: theta.to_degrees(),
            });
        }
        if rho == 0.0 {
            return Ok((self.cx, self.cy));
        }
        let td = self.radial(theta);
        Ok((
            self.cx + self.fx * td * ray.x / rho,
            self.cy + self.fy * td * ray.y / rho,
        ))
    }

    pub fn undistort_pixel(&self, u: f64, v: f64) -> Result<Vector3<f64>> {
        self.undistort_with_iterations(u, v).map(|(ray, _)| ray)
    }

    /// Unit ray for a pixel together with the number of Newton updates used.
    pub fn undistort_with_iterations(&self, u: f64, v: f64) -> Result<(Vector3<f64>, usize)> {
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::invalid("pixel must be finite"));
        }
        let (a, b) = ((u - self.cx) / self.fx, (v - self.cy) / self.fy);
        let td = a.hypot(b);
        if td == 0.0 {
            return Ok((Vector3::z(), 0));
        }
        let (theta, iters) = self.invert_radial(td).map_err(|residual| Error::Numerical {
            u,
            v,
            residual,
        })?;
        let (s, c) = theta.sin_cos();
        Ok((Vector3::new(s * a / td, s * b / td, c), iters))
    }

    /// Newton-Raphson on the scalar radial function, starting at
    /// `theta = theta_d`. The error value is the last residual.
    pub(crate) fn invert_radial(&self, td: f64) -> std::result::Result<(f64, usize), f64> {
        let mut theta = td;
        for i in 1..=NEWTON_MAX_ITERATIONS {
            let f = self.radial(theta) - td;
            let d = self.radial_derivative(theta);
            if !(d > 0.0) {
                return Err(f);
            }
            let step = f / d;
            theta -= step;
            if step.abs() < NEWTON_TOLERANCE {
                return Ok((theta, i));
            }
        }
        Err(self.radial(theta) - td)
    }
}
