use std::collections::BTreeMap;

use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};

use super::{EffectorPose, JointPose, RobotModel, Side};
use crate::orientation::{wrap_angle, RotationQuat};
use crate::{Error, Result};

/// Link frames in the trunk frame, indexed like [`RobotModel::links`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTransforms {
    names: Vec<String>,
    poses: Vec<Isometry3<f64>>,
}

impl LinkTransforms {
    pub fn get(&self, name: &str) -> Option<&Isometry3<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.poses[i])
    }

    pub fn by_index(&self, i: usize) -> &Isometry3<f64> {
        &self.poses[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Isometry3<f64>)> {
        self.names.iter().map(String::as_str).zip(self.poses.iter())
    }

    pub fn to_map(&self) -> BTreeMap<String, Isometry3<f64>> {
        self.names.iter().cloned().zip(self.poses.iter().copied()).collect()
    }
}

pub fn forward_kinematics(model: &RobotModel, q: &JointPose) -> LinkTransforms {
    let links = model.links();
    let mut poses: Vec<Isometry3<f64>> = Vec::with_capacity(links.len());
    for link in links {
        let local = joint_transform(link.origin, link.axis, link.joint.map(|j| q[j]));
        let pose = match link.parent {
            Some(p) => poses[p] * local,
            None => Isometry3::identity(),
        };
        poses.push(pose);
    }
    LinkTransforms {
        names: links.iter().map(|l| l.name.clone()).collect(),
        poses,
    }
}

fn joint_transform(origin: Vector3<f64>, axis: Option<Vector3<f64>>, q: Option<f64>) -> Isometry3<f64> {
    let rot = match (axis, q) {
        (Some(a), Some(q)) => UnitQuaternion::from_scaled_axis(a * q),
        _ => UnitQuaternion::identity(),
    };
    Isometry3::from_parts(Translation3::from(origin), rot)
}

/// Leg dimensions needed by the closed-form solver. Extracted from the
/// model, which must have intersecting hip axes (yaw z, roll x, pitch y),
/// knee and ankle offsets straight down, and intersecting ankle axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegGeometry {
    pub hip: Vector3<f64>,
    pub thigh: f64,
    pub shank: f64,
    /// Distance from the ankle axes down to the sole.
    pub foot: f64,
}

impl LegGeometry {
    pub fn from_model(model: &RobotModel, side: Side) -> Result<Self> {
        let leg = side.leg();
        let p = side.prefix();
        let check = |joint: usize, axis: Vector3<f64>, origin_ok: &dyn Fn(&Vector3<f64>) -> bool| {
            let l = model.joint_link(joint);
            let axis_ok = l.axis.map(|a| (a - axis).norm() < 1e-12).unwrap_or(false);
            if !axis_ok || !origin_ok(&l.origin) {
                return Err(Error::ModelInvalid(format!(
                    "link `{}` does not match the leg layout expected by the IK",
                    l.name
                )));
            }
            Ok(l.origin)
        };
        let zero = |o: &Vector3<f64>| o.norm() < 1e-12;
        let down = |o: &Vector3<f64>| o.x.abs() < 1e-12 && o.y.abs() < 1e-12 && o.z < 0.0;
        let any = |_: &Vector3<f64>| true;

        let hip = check(leg.hip_yaw, Vector3::z(), &any)?;
        check(leg.hip_roll, Vector3::x(), &zero)?;
        check(leg.hip_pitch, Vector3::y(), &zero)?;
        let thigh = -check(leg.knee_pitch, Vector3::y(), &down)?.z;
        let shank = -check(leg.ankle_pitch, Vector3::y(), &down)?.z;
        check(leg.ankle_roll, Vector3::x(), &zero)?;

        let sole = model
            .link(&format!("{p}_sole"))
            .filter(|l| l.axis.is_none() && down(&l.origin))
            .ok_or_else(|| Error::ModelInvalid(format!("missing rigid `{p}_sole` link")))?;
        let parent_ok = sole
            .parent
            .map(|i| model.links()[i].joint == Some(leg.ankle_roll))
            .unwrap_or(false);
        if !parent_ok {
            return Err(Error::ModelInvalid(format!("`{p}_sole` must hang off the ankle roll")));
        }
        Ok(LegGeometry {
            hip,
            thigh,
            shank,
            foot: -sole.origin.z,
        })
    }

    pub fn reach(&self) -> f64 {
        self.thigh + self.shank
    }
}

/// Closed-form leg IK for a sole target in the trunk frame.
///
/// Returns `[hip_yaw, hip_roll, hip_pitch, knee, ankle_pitch, ankle_roll]`.
/// The knee is always bent forward (`knee >= 0`) and the hip roll and ankle
/// roll stay within `(-pi/2, pi/2)`; the remaining angles are in `(-pi, pi]`.
pub fn leg_inverse_kinematics(
    target: &EffectorPose,
    model: &RobotModel,
    side: Side,
) -> Result<[f64; 6]> {
    let geo = LegGeometry::from_model(model, side)?;
    solve_leg(&geo, target)
}

pub(crate) fn solve_leg(geo: &LegGeometry, target: &EffectorPose) -> Result<[f64; 6]> {
    let foot_rot: Matrix3<f64> = target.orientation.to_rotation_matrix();
    let ankle = target.position + foot_rot * Vector3::new(0.0, 0.0, geo.foot);
    let hip_to_ankle = ankle - geo.hip;
    let dist = hip_to_ankle.norm();
    let (lt, ls) = (geo.thigh, geo.shank);

    if dist > lt + ls + 1e-12 {
        return Err(Error::Unreachable {
            excess: dist - (lt + ls),
        });
    }
    if dist < (lt - ls).abs() {
        return Err(Error::Unreachable {
            excess: (lt - ls).abs() - dist,
        });
    }

    let cos_knee = ((dist * dist - lt * lt - ls * ls) / (2.0 * lt * ls)).clamp(-1.0, 1.0);
    let knee = cos_knee.acos();

    // Ankle-to-hip vector in the foot frame.
    let r = foot_rot.transpose() * (geo.hip - ankle);
    // Ankle roll stays within (-pi/2, pi/2); the planar distance carries the sign.
    let flip = if r.z < 0.0 { -1.0 } else { 1.0 };
    let ankle_roll = (flip * r.y).atan2(flip * r.z);
    let planar = flip * r.y.hypot(r.z);
    let ankle_pitch =
        wrap_angle((-lt * knee.sin()).atan2(lt * knee.cos() + ls) - r.x.atan2(planar));

    // Remaining hip rotation Rz(yaw) Rx(roll) Ry(pitch).
    let hip_rot = foot_rot
        * rot_x(-ankle_roll)
        * rot_y(-(knee + ankle_pitch));
    let hip_roll = hip_rot[(2, 1)].clamp(-1.0, 1.0).asin();
    let hip_yaw = (-hip_rot[(0, 1)]).atan2(hip_rot[(1, 1)]);
    let hip_pitch = (-hip_rot[(2, 0)]).atan2(hip_rot[(2, 2)]);

    Ok([hip_yaw, hip_roll, hip_pitch, knee, ankle_pitch, ankle_roll])
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Sole pose of one leg from joint angles.
pub fn foot_pose(model: &RobotModel, q: &JointPose, side: Side) -> EffectorPose {
    let fk = forward_kinematics(model, q);
    let iso = fk
        .get(&format!("{}_sole", side.prefix()))
        .expect("model has sole links");
    EffectorPose {
        position: iso.translation.vector,
        orientation: RotationQuat::from(iso.rotation),
    }
}
