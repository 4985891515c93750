//! Kinematic and dynamic model of the 20-joint robot.
//!
//! The model is a tree of links rooted at the trunk. Each non-root link is
//! attached to its parent by a revolute joint (or rigidly, when `axis` is
//! null). A link's frame is `parent * translate(origin) * rotate(axis, q)`.

mod dynamics;
mod kinematics;
mod pose;

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dynamics::inverse_dynamics;
pub use kinematics::{
    foot_pose, forward_kinematics, leg_inverse_kinematics, LegGeometry, LinkTransforms,
};
pub(crate) use kinematics::solve_leg;
pub use pose::{
    abstract_to_joint, bend_from_extension, extension_from_bend, joint_to_abstract, AbstractPose,
    ArmAbstract, LegAbstract,
};

pub const NUM_JOINTS: usize = 20;
pub const SCHEMA_VERSION: u32 = 1;

/// Joint order used by every joint-space vector in the crate.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "neck_yaw",
    "head_pitch",
    "l_shoulder_pitch",
    "l_shoulder_roll",
    "l_elbow_pitch",
    "r_shoulder_pitch",
    "r_shoulder_roll",
    "r_elbow_pitch",
    "l_hip_yaw",
    "l_hip_roll",
    "l_hip_pitch",
    "l_knee_pitch",
    "l_ankle_pitch",
    "l_ankle_roll",
    "r_hip_yaw",
    "r_hip_roll",
    "r_hip_pitch",
    "r_knee_pitch",
    "r_ankle_pitch",
    "r_ankle_roll",
];

/// Index helpers into [`JOINT_NAMES`].
pub mod joint {
    pub const NECK_YAW: usize = 0;
    pub const HEAD_PITCH: usize = 1;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct ArmJoints {
        pub shoulder_pitch: usize,
        pub shoulder_roll: usize,
        pub elbow_pitch: usize,
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct LegJoints {
        pub hip_yaw: usize,
        pub hip_roll: usize,
        pub hip_pitch: usize,
        pub knee_pitch: usize,
        pub ankle_pitch: usize,
        pub ankle_roll: usize,
    }

    impl LegJoints {
        pub fn all(&self) -> [usize; 6] {
            [
                self.hip_yaw,
                self.hip_roll,
                self.hip_pitch,
                self.knee_pitch,
                self.ankle_pitch,
                self.ankle_roll,
            ]
        }
    }

    pub const LEFT_ARM: ArmJoints = ArmJoints {
        shoulder_pitch: 2,
        shoulder_roll: 3,
        elbow_pitch: 4,
    };
    pub const RIGHT_ARM: ArmJoints = ArmJoints {
        shoulder_pitch: 5,
        shoulder_roll: 6,
        elbow_pitch: 7,
    };
    pub const LEFT_LEG: LegJoints = LegJoints {
        hip_yaw: 8,
        hip_roll: 9,
        hip_pitch: 10,
        knee_pitch: 11,
        ankle_pitch: 12,
        ankle_roll: 13,
    };
    pub const RIGHT_LEG: LegJoints = LegJoints {
        hip_yaw: 14,
        hip_roll: 15,
        hip_pitch: 16,
        knee_pitch: 17,
        ankle_pitch: 18,
        ankle_roll: 19,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn leg(self) -> joint::LegJoints {
        match self {
            Side::Left => joint::LEFT_LEG,
            Side::Right => joint::RIGHT_LEG,
        }
    }

    pub fn arm(self) -> joint::ArmJoints {
        match self {
            Side::Left => joint::LEFT_ARM,
            Side::Right => joint::RIGHT_ARM,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Side::Left => "l",
            Side::Right => "r",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Joint angles in [`JOINT_NAMES`] order, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointPose(pub [f64; NUM_JOINTS]);

impl JointPose {
    pub fn zeros() -> Self {
        JointPose([0.0; NUM_JOINTS])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Left/right mirror image: sides swapped, roll and yaw joints negated.
    pub fn mirrored(&self) -> JointPose {
        let mut out = [0.0; NUM_JOINTS];
        for (i, name) in JOINT_NAMES.iter().enumerate() {
            let j = mirror_index(i);
            let sign = if name.ends_with("_roll") || name.ends_with("_yaw") {
                -1.0
            } else {
                1.0
            };
            out[j] = sign * self.0[i];
        }
        JointPose(out)
    }
}

impl std::ops::Index<usize> for JointPose {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for JointPose {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Index of the joint on the opposite side (identity for head joints).
pub fn mirror_index(i: usize) -> usize {
    match i {
        0 | 1 => i,
        2..=4 => i + 3,
        5..=7 => i - 3,
        8..=13 => i + 6,
        _ => i - 6,
    }
}

/// End effector pose relative to the trunk frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorPose {
    pub position: Vector3<f64>,
    pub orientation: crate::RotationQuat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversePose {
    pub left_foot: EffectorPose,
    pub right_foot: EffectorPose,
    pub left_hand: EffectorPose,
    pub right_hand: EffectorPose,
}

/// On-disk link record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub name: String,
    pub parent: Option<String>,
    /// Joint axis in the parent frame; null for a rigid attachment.
    pub axis: Option<[f64; 3]>,
    pub origin: [f64; 3],
    pub mass: f64,
    pub com: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]` about the centre of mass, link frame.
    pub inertia: [f64; 6],
    pub limits: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub total_mass: Option<f64>,
    pub links: Vec<LinkDoc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub axis: Option<Vector3<f64>>,
    pub origin: Vector3<f64>,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
    /// Index into [`JOINT_NAMES`] when the link is jointed.
    pub joint: Option<usize>,
    pub limits: Option<(f64, f64)>,
}

/// Validated robot model. Links are stored parents-first.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    links: Vec<Link>,
    by_name: HashMap<String, usize>,
    joint_links: [usize; NUM_JOINTS],
    total_mass: f64,
    doc: ModelDoc,
}

impl RobotModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)
            .map_err(|e| Error::schema("$", e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn from_doc(doc: ModelDoc) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!("unsupported version {}", doc.schema_version),
            ));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, l) in doc.links.iter().enumerate() {
            if l.name.is_empty() {
                return Err(Error::schema(format!("links[{i}].name"), "empty name"));
            }
            if index.insert(l.name.as_str(), i).is_some() {
                return Err(Error::schema(
                    format!("links[{i}].name"),
                    format!("duplicate link `{}`", l.name),
                ));
            }
        }

        let mut roots = Vec::new();
        let mut parent_of = vec![None; doc.links.len()];
        for (i, l) in doc.links.iter().enumerate() {
            match &l.parent {
                None => roots.push(i),
                Some(p) => {
                    let pi = *index.get(p.as_str()).ok_or_else(|| {
                        Error::schema(
                            format!("links[{i}].parent"),
                            format!("missing parent `{p}`"),
                        )
                    })?;
                    parent_of[i] = Some(pi);
                }
            }
        }
        if roots.len() != 1 {
            return Err(Error::schema(
                "links",
                format!("expected exactly one root link, found {}", roots.len()),
            ));
        }

        // Depth-first order from the root; anything unvisited sits on a cycle.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); doc.links.len()];
        for (i, p) in parent_of.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        let mut order = Vec::with_capacity(doc.links.len());
        let mut stack = vec![roots[0]];
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(children[i].iter().rev());
        }
        if order.len() != doc.links.len() {
            let stuck = (0..doc.links.len())
                .find(|i| !order.contains(i))
                .unwrap_or(0);
            return Err(Error::schema(
                format!("links[{stuck}].parent"),
                "cycle in link tree",
            ));
        }

        let mut new_index = vec![0usize; doc.links.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }

        let mut links = Vec::with_capacity(order.len());
        let mut joint_links = [usize::MAX; NUM_JOINTS];
        let mut joint_count = 0;
        for &old in &order {
            let l = &doc.links[old];
            let path = |field: &str| format!("links[{old}].{field}");
            let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
            if !(l.mass.is_finite() && l.mass >= 0.0) {
                return Err(Error::schema(path("mass"), "mass must be finite and >= 0"));
            }
            if !finite(&l.origin) || !finite(&l.com) || !finite(&l.inertia) {
                return Err(Error::schema(path("origin"), "non-finite geometry"));
            }
            let [ixx, iyy, izz, ixy, ixz, iyz] = l.inertia;
            let inertia = Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz);
            let eig = SymmetricEigen::new(inertia).eigenvalues;
            if eig.iter().any(|&e| e < -1e-12) {
                return Err(Error::schema(
                    path("inertia"),
                    "inertia must be positive semi-definite",
                ));
            }

            let axis = match l.axis {
                None => None,
                Some(a) => {
                    let v = Vector3::from(a);
                    if !finite(&a) || (v.norm() - 1.0).abs() > 1e-9 {
                        return Err(Error::schema(path("axis"), "axis must be a unit vector"));
                    }
                    Some(v)
                }
            };
            if axis.is_some() && l.parent.is_none() {
                return Err(Error::schema(path("axis"), "root link cannot be jointed"));
            }

            let joint = if axis.is_some() {
                joint_count += 1;
                let j = JOINT_NAMES
                    .iter()
                    .position(|n| *n == l.name)
                    .ok_or_else(|| {
                        Error::schema(path("name"), format!("unknown joint `{}`", l.name))
                    })?;
                joint_links[j] = links.len();
                Some(j)
            } else {
                None
            };

            let limits = match (axis.is_some(), l.limits) {
                (true, Some([lo, hi])) if lo.is_finite() && hi.is_finite() && lo <= hi => {
                    Some((lo, hi))
                }
                (true, Some(_)) => {
                    return Err(Error::schema(path("limits"), "limits must be finite, lo <= hi"))
                }
                (true, None) => {
                    return Err(Error::schema(path("limits"), "jointed link needs limits"))
                }
                (false, _) => None,
            };

            links.push(Link {
                name: l.name.clone(),
                parent: parent_of[old].map(|p| new_index[p]),
                axis,
                origin: Vector3::from(l.origin),
                mass: l.mass,
                com: Vector3::from(l.com),
                inertia,
                joint,
                limits,
            });
        }

        if joint_count != NUM_JOINTS {
            return Err(Error::schema(
                "links",
                format!("expected {NUM_JOINTS} joints, found {joint_count}"),
            ));
        }
        if let Some(j) = joint_links.iter().position(|&l| l == usize::MAX) {
            return Err(Error::schema(
                "links",
                format!("joint `{}` is missing", JOINT_NAMES[j]),
            ));
        }

        let total_mass: f64 = links.iter().map(|l| l.mass).sum();
        if let Some(declared) = doc.total_mass {
            if (declared - total_mass).abs() > 1e-6 {
                return Err(Error::schema(
                    "total_mass",
                    format!("declared {declared} kg but links sum to {total_mass} kg"),
                ));
            }
        }

        let by_name = links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.clone(), i))
            .collect();

        Ok(RobotModel {
            name: doc.name.clone(),
            links,
            by_name,
            joint_links,
            total_mass,
            doc,
        })
    }

    /// The model shipped with the crate.
    pub fn default_model() -> Self {
        Self::from_json(crate::assets::MODEL_JSON).expect("shipped model is valid")
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, name: &str) -> Option<&Link> {
        self.by_name.get(name).map(|&i| &self.links[i])
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn joint_link(&self, joint: usize) -> &Link {
        &self.links[self.joint_links[joint]]
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn document(&self) -> &ModelDoc {
        &self.doc
    }

    pub fn joint_limits(&self, joint: usize) -> (f64, f64) {
        self.joint_link(joint).limits.expect("jointed link has limits")
    }

    pub fn within_limits(&self, q: &JointPose) -> bool {
        (0..NUM_JOINTS).all(|j| {
            let (lo, hi) = self.joint_limits(j);
            q[j] >= lo && q[j] <= hi
        })
    }

    /// Clamps every joint into its limits; returns the clamped pose and
    /// whether anything moved.
    pub fn clamp_to_limits(&self, q: &JointPose) -> (JointPose, bool) {
        let mut out = *q;
        let mut clamped = false;
        for j in 0..NUM_JOINTS {
            let (lo, hi) = self.joint_limits(j);
            let v = q[j].clamp(lo, hi);
            clamped |= v != q[j];
            out[j] = v;
        }
        (out, clamped)
    }

    /// Thigh and shank lengths of one leg.
    pub fn leg_segments(&self, side: Side) -> (f64, f64) {
        let leg = side.leg();
        let thigh = self.joint_link(leg.knee_pitch).origin.norm();
        let shank = self.joint_link(leg.ankle_pitch).origin.norm();
        (thigh, shank)
    }
}
