//! Abstract limb space.
//!
//! A limb is described by how far it is retracted (`extension`, 0 for a
//! straight limb, 1 for fully folded) and by the direction of the line from
//! its root joint to its end joint. Foot angles are relative to the trunk.
//! The knee angle is `k = 2 acos(1 - extension)`, distributed half to the
//! hip and half to the ankle so the zero pose is a straight leg with a flat
//! foot and the foot orientation does not change with extension.

use serde::{Deserialize, Serialize};

use super::{JointPose, RobotModel, Side};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegAbstract {
    pub extension: f64,
    pub angle_x: f64,
    pub angle_y: f64,
    pub angle_z: f64,
    pub foot_angle_x: f64,
    pub foot_angle_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArmAbstract {
    pub extension: f64,
    pub angle_x: f64,
    pub angle_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AbstractPose {
    pub left_leg: LegAbstract,
    pub right_leg: LegAbstract,
    pub left_arm: ArmAbstract,
    pub right_arm: ArmAbstract,
}

impl AbstractPose {
    pub fn leg(&self, side: Side) -> &LegAbstract {
        match side {
            Side::Left => &self.left_leg,
            Side::Right => &self.right_leg,
        }
    }

    pub fn leg_mut(&mut self, side: Side) -> &mut LegAbstract {
        match side {
            Side::Left => &mut self.left_leg,
            Side::Right => &mut self.right_leg,
        }
    }

    pub fn arm(&self, side: Side) -> &ArmAbstract {
        match side {
            Side::Left => &self.left_arm,
            Side::Right => &self.right_arm,
        }
    }

    pub fn arm_mut(&mut self, side: Side) -> &mut ArmAbstract {
        match side {
            Side::Left => &mut self.left_arm,
            Side::Right => &mut self.right_arm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for side in [Side::Left, Side::Right] {
            let l = self.leg(side);
            check_extension(l.extension, side, "leg")?;
            let angles = [l.angle_x, l.angle_y, l.angle_z, l.foot_angle_x, l.foot_angle_y];
            if angles.iter().any(|a| !a.is_finite()) {
                return Err(Error::invalid(format!("{side:?} leg angles must be finite")));
            }
            let a = self.arm(side);
            check_extension(a.extension, side, "arm")?;
            if !(a.angle_x.is_finite() && a.angle_y.is_finite()) {
                return Err(Error::invalid(format!("{side:?} arm angles must be finite")));
            }
        }
        Ok(())
    }
}

fn check_extension(eta: f64, side: Side, limb: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!(
            "{side:?} {limb} extension {eta} outside [0, 1]"
        )));
    }
    Ok(())
}

/// `2 acos(1 - eta)`, written in a form that stays accurate near zero.
pub fn bend_from_extension(eta: f64) -> f64 {
    4.0 * (0.5 * eta).sqrt().asin()
}

/// `1 - cos(bend / 2)`.
pub fn extension_from_bend(bend: f64) -> f64 {
    let s = (0.25 * bend).sin();
    2.0 * s * s
}

pub fn abstract_to_joint(pose: &AbstractPose, _model: &RobotModel) -> Result<JointPose> {
    pose.validate()?;
    let mut q = JointPose::zeros();
    for side in [Side::Left, Side::Right] {
        let l = pose.leg(side);
        let j = side.leg();
        let knee = bend_from_extension(l.extension);
        q[j.hip_yaw] = l.angle_z;
        q[j.hip_roll] = l.angle_x;
        q[j.hip_pitch] = l.angle_y - 0.5 * knee;
        q[j.knee_pitch] = knee;
        q[j.ankle_pitch] = l.foot_angle_y - l.angle_y - 0.5 * knee;
        q[j.ankle_roll] = l.foot_angle_x - l.angle_x;

        let a = pose.arm(side);
        let j = side.arm();
        let elbow = bend_from_extension(a.extension);
        q[j.shoulder_pitch] = a.angle_y + 0.5 * elbow;
        q[j.shoulder_roll] = a.angle_x;
        q[j.elbow_pitch] = -elbow;
    }
    Ok(q)
}

pub fn joint_to_abstract(q: &JointPose, _model: &RobotModel) -> Result<AbstractPose> {
    if q.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("joint angles must be finite"));
    }
    let mut pose = AbstractPose::default();
    for side in [Side::Left, Side::Right] {
        let j = side.leg();
        let knee = q[j.knee_pitch];
        if !(0.0..=std::f64::consts::PI).contains(&knee) {
            return Err(Error::invalid(format!(
                "{side:?} knee {knee} outside [0, pi] (hyperextended or over-folded)"
            )));
        }
        let angle_y = q[j.hip_pitch] + 0.5 * knee;
        let angle_x = q[j.hip_roll];
        *pose.leg_mut(side) = LegAbstract {
            extension: extension_from_bend(knee),
            angle_x,
            angle_y,
            angle_z: q[j.hip_yaw],
            foot_angle_x: q[j.ankle_roll] + angle_x,
            foot_angle_y: q[j.ankle_pitch] + angle_y + 0.5 * knee,
        };

        let j = side.arm();
        let elbow = -q[j.elbow_pitch];
        if !(0.0..=std::f64::consts::PI).contains(&elbow) {
            return Err(Error::invalid(format!(
                "{side:?} elbow {} outside [-pi, 0]",
                q[j.elbow_pitch]
            )));
        }
        *pose.arm_mut(side) = ArmAbstract {
            extension: extension_from_bend(elbow),
            angle_x: q[j.shoulder_roll],
            angle_y: q[j.shoulder_pitch] - 0.5 * elbow,
        };
    }
    Ok(pose)
}
