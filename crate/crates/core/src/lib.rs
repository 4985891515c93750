//! Portable control stack for a 20-DOF kid-size humanoid.
//!
//! The crate is hardware free. Everything that would normally talk to
//! servos or an IMU goes through plain values, and [`sim`] closes the loop
//! with a seeded desk-scale simulator so the whole pipeline can be run and
//! replayed deterministically.
//!
//! Module map:
//!
//! - [`orientation`]: quaternions and the fused angles representation.
//! - [`estimator`]: passive complementary attitude filter.
//! - [`model`]: kinematic tree, pose spaces, leg IK and inverse dynamics.
//! - [`gait`]: phase-driven walking core with fused-angle feedback.
//! - [`motion`]: keyframe motions and the motion player.
//! - [`servo`]: encoder ticks, feed-forward offsets, command packaging.
//! - [`vision`]: wide-angle camera model, LUTs, ground projection, calibration.
//! - [`sim`]: deterministic simulator and scenario runner.

pub mod assets;
pub mod canonical;
mod error;
pub mod estimator;
pub mod gait;
pub mod model;
pub mod motion;
pub mod orientation;
pub mod servo;
pub mod sim;
pub mod vision;

pub use error::{Error, Result};
pub use estimator::{FilterConfig, FilterState, ImuSample};
pub use gait::{CorrectiveActions, GaitCommand, GaitConfig, GaitState};
pub use model::{AbstractPose, InversePose, JointPose, RobotModel, NUM_JOINTS};
pub use motion::{Keyframe, Motion, PlayState};
pub use orientation::{wrap_angle, FusedAngles, Hemisphere, RotationQuat};
pub use servo::{ServoCalibration, ServoCommand};
pub use vision::{CameraModel, ProjectionLut};
