//! Recursive Newton-Euler inverse dynamics with the trunk as a fixed base.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::{JointPose, RobotModel, NUM_JOINTS};

/// Joint torques (N·m, [`super::JOINT_NAMES`] order) needed to realise
/// `qdd` at state `(q, qd)` under `gravity`.
///
/// Gravity is modelled by accelerating the fixed trunk upwards with
/// `-gravity`, which is equivalent to applying it to every link.
pub fn inverse_dynamics(
    model: &RobotModel,
    q: &JointPose,
    qd: &JointPose,
    qdd: &JointPose,
    gravity: Vector3<f64>,
) -> [f64; NUM_JOINTS] {
    let links = model.links();
    let n = links.len();

    let mut rot = vec![Matrix3::identity(); n];
    let mut pos = vec![Vector3::zeros(); n];
    let mut omega = vec![Vector3::zeros(); n];
    let mut alpha = vec![Vector3::zeros(); n];
    let mut accel = vec![Vector3::zeros(); n];
    let mut axis_world = vec![Vector3::zeros(); n];
    let mut force = vec![Vector3::zeros(); n];
    let mut moment = vec![Vector3::zeros(); n];
    let mut com_world = vec![Vector3::zeros(); n];

    // Outward pass: kinematics in the trunk frame.
    for (i, link) in links.iter().enumerate() {
        if link.parent.is_none() {
            accel[i] = -gravity;
        }
        if let Some(p) = link.parent {
            let r_parent = rot[p];
            let arm = r_parent * link.origin;
            pos[i] = pos[p] + arm;
            accel[i] = accel[p] + alpha[p].cross(&arm) + omega[p].cross(&omega[p].cross(&arm));
            omega[i] = omega[p];
            alpha[i] = alpha[p];
            rot[i] = r_parent;
            if let (Some(axis), Some(j)) = (link.axis, link.joint) {
                let z = r_parent * axis;
                axis_world[i] = z;
                rot[i] = r_parent
                    * UnitQuaternion::from_scaled_axis(axis * q[j])
                        .to_rotation_matrix()
                        .into_inner();
                let spin = z * qd[j];
                alpha[i] += z * qdd[j] + omega[p].cross(&spin);
                omega[i] += spin;
            }
        }

        let c = rot[i] * link.com;
        com_world[i] = pos[i] + c;
        let a_com = accel[i] + alpha[i].cross(&c) + omega[i].cross(&omega[i].cross(&c));
        let inertia = rot[i] * link.inertia * rot[i].transpose();
        force[i] = link.mass * a_com;
        moment[i] = inertia * alpha[i] + omega[i].cross(&(inertia * omega[i]));
    }

    // Inward pass: accumulate wrenches about each link origin.
    let mut f_tot = vec![Vector3::zeros(); n];
    let mut n_tot = vec![Vector3::zeros(); n];
    let mut tau = [0.0; NUM_JOINTS];
    for i in (0..n).rev() {
        f_tot[i] += force[i];
        n_tot[i] += moment[i] + (com_world[i] - pos[i]).cross(&force[i]);
        if let Some(j) = links[i].joint {
            tau[j] = axis_world[i].dot(&n_tot[i]);
        }
        if let Some(p) = links[i].parent {
            let f = f_tot[i];
            let m = n_tot[i] + (pos[i] - pos[p]).cross(&f);
            f_tot[p] += f;
            n_tot[p] += m;
        }
    }
    tau
}
