//! Image to ground-plane projection through the kinematic chain.
//!
//! The egocentric frame sits on the ground directly below the trunk origin,
//! x forward along the trunk heading, z up. Only the trunk tilt enters the
//! projection; heading is removed.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};

use super::{optical_to_mount, CameraModel, Extrinsic};
use crate::orientation::{FusedAngles, RotationQuat};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseContext {
    /// Head link pose in the trunk frame, from forward kinematics.
    pub head: Isometry3<f64>,
    pub trunk: FusedAngles,
    /// Height of the trunk origin above the ground, m.
    pub trunk_height: f64,
}

fn pose_with(ctx: &PoseContext, ext: &Extrinsic, trunk_rot: RotationQuat) -> Isometry3<f64> {
    let trunk = Isometry3::from_parts(
        Translation3::new(0.0, 0.0, ctx.trunk_height),
        trunk_rot.to_unit_quaternion(),
    );
    let mount = Isometry3::from_parts(
        Translation3::from(ext.position),
        ext.orientation.to_unit_quaternion(),
    );
    let optical = UnitQuaternion::from_matrix(&optical_to_mount());
    trunk * ctx.head * mount * Isometry3::from_parts(Translation3::identity(), optical)
}

/// Optical frame pose in the egocentric frame.
pub fn camera_pose(camera: &CameraModel, ctx: &PoseContext) -> Result<Isometry3<f64>> {
    let tilt = FusedAngles {
        yaw: 0.0,
        ..ctx.trunk
    };
    Ok(pose_with(ctx, &camera.extrinsic, tilt.to_quat()?))
}

/// Egocentric ground point `(x, y)` seen at pixel `(u, v)`.
pub fn project_to_ground(u: f64, v: f64, camera: &CameraModel, ctx: &PoseContext) -> Result<[f64; 2]> {
    if !camera.contains(u, v) {
        return Err(Error::invalid(format!("pixel ({u}, {v}) outside the image")));
    }
    if !(ctx.trunk_height.is_finite() && ctx.trunk_height > 0.0) {
        return Err(Error::invalid("trunk height must be > 0"));
    }
    let pose = camera_pose(camera, ctx)?;
    let ray = pose.rotation * camera.undistort_pixel(u, v)?;
    let origin = pose.translation.vector;
    if ray.z >= -1e-12 || origin.z <= 0.0 {
        return Err(Error::NoIntersection);
    }
    let s = -origin.z / ray.z;
    Ok([origin.x + s * ray.x, origin.y + s * ray.y])
}

/// Pixel at which a ground point (in a ground frame that shares the trunk
/// heading reference of `ctx.trunk.yaw`) appears. Uses the full trunk
/// orientation including yaw.
pub fn render_ground_point(
    point: [f64; 2],
    camera: &CameraModel,
    ext: &Extrinsic,
    ctx: &PoseContext,
) -> Result<(f64, f64)> {
    let pose = pose_with(ctx, ext, ctx.trunk.to_quat()?);
    let p = pose.inverse_transform_point(&Point3::new(point[0], point[1], 0.0));
    camera.distort_point(&Vector3::new(p.x, p.y, p.z))
}
