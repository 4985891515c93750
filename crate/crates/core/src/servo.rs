//! Actuator interface: encoder ticks, feed-forward offsets and command
//! packaging.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::{JointPose, JOINT_NAMES, NUM_JOINTS};
use crate::{Error, Result};

pub const TICKS_PER_REV: u32 = 4096;
pub const MAX_TICK: u16 = 4095;
/// Half a tick in radians, the worst-case quantisation error.
pub const HALF_TICK: f64 = PI / TICKS_PER_REV as f64;

pub const COMMAND_LOG_HEADER: &str = "t,joint,target_ticks,offset_rad,effort";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct JointCalibration {
    /// Encoder reading at the zero pose.
    pub tick_offset: i32,
    pub direction: i8,
    /// Effective stiffness, N·m/rad.
    pub stiffness: f64,
    pub max_offset: f64,
}

impl Default for JointCalibration {
    fn default() -> Self {
        JointCalibration {
            tick_offset: 2048,
            direction: 1,
            stiffness: 20.0,
            max_offset: 0.15,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct CalibrationEntry {
    name: String,
    tick_offset: i32,
    direction: i8,
    stiffness: f64,
    max_offset: f64,
}

impl CalibrationEntry {
    fn cal(&self) -> JointCalibration {
        JointCalibration {
            tick_offset: self.tick_offset,
            direction: self.direction,
            stiffness: self.stiffness,
            max_offset: self.max_offset,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationDoc {
    #[serde(default)]
    note: String,
    joints: Vec<CalibrationEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoCalibration {
    pub joints: [JointCalibration; NUM_JOINTS],
}

impl Default for ServoCalibration {
    fn default() -> Self {
        ServoCalibration::from_json(crate::assets::SERVO_CALIBRATION_JSON)
            .expect("shipped calibration is valid")
    }
}

impl ServoCalibration {
    pub fn uniform(cal: JointCalibration) -> Self {
        ServoCalibration {
            joints: [cal; NUM_JOINTS],
        }
    }

    /// Parses the per-joint calibration file. Every joint must appear
    /// exactly once, by name.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CalibrationDoc =
            serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        let mut joints = [None; NUM_JOINTS];
        for (i, entry) in doc.joints.iter().enumerate() {
            let j = JOINT_NAMES
                .iter()
                .position(|n| *n == entry.name)
                .ok_or_else(|| Error::schema(format!("joints[{i}].name"), "unknown joint"))?;
            if joints[j].is_some() {
                return Err(Error::schema(format!("joints[{i}].name"), "duplicate joint"));
            }
            joints[j] = Some(entry.cal());
        }
        let mut out = [JointCalibration::default(); NUM_JOINTS];
        for (j, c) in joints.iter().enumerate() {
            out[j] = c.ok_or_else(|| {
                Error::schema("joints", format!("missing joint `{}`", JOINT_NAMES[j]))
            })?;
        }
        let cal = ServoCalibration { joints: out };
        cal.validate()?;
        Ok(cal)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let doc = CalibrationDoc {
            note: String::new(),
            joints: self
                .joints
                .iter()
                .zip(JOINT_NAMES)
                .map(|(c, name)| CalibrationEntry {
                    name: name.to_string(),
                    tick_offset: c.tick_offset,
                    direction: c.direction,
                    stiffness: c.stiffness,
                    max_offset: c.max_offset,
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("calibration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        for (c, name) in self.joints.iter().zip(JOINT_NAMES) {
            if c.direction != 1 && c.direction != -1 {
                return Err(Error::schema(format!("{name}.direction"), "must be +1 or -1"));
            }
            if !(c.stiffness.is_finite() && c.stiffness > 0.0) {
                return Err(Error::schema(format!("{name}.stiffness"), "must be > 0"));
            }
            if !(c.max_offset.is_finite() && c.max_offset > 0.0) {
                return Err(Error::schema(format!("{name}.maxOffset"), "must be > 0"));
            }
            if !(0..=MAX_TICK as i32).contains(&c.tick_offset) {
                return Err(Error::schema(format!("{name}.tickOffset"), "must lie in [0, 4095]"));
            }
        }
        Ok(())
    }
}

/// Returns the tick value and whether it had to be clamped into range.
pub fn angle_to_ticks(angle: f64, cal: &JointCalibration) -> Result<(u16, bool)> {
    if !angle.is_finite() {
        return Err(Error::invalid(format!("angle must be finite, got {angle}")));
    }
    let raw = (cal.tick_offset as f64 + cal.direction as f64 * angle * TICKS_PER_REV as f64 / TAU)
        .round();
    let clamped = raw.clamp(0.0, MAX_TICK as f64);
    Ok((clamped as u16, clamped != raw))
}

pub fn ticks_to_angle(ticks: u16, cal: &JointCalibration) -> f64 {
    (ticks as f64 - cal.tick_offset as f64) * cal.direction as f64 * TAU / TICKS_PER_REV as f64
}

pub fn feedforward_offsets(torques: &[f64; NUM_JOINTS], cal: &ServoCalibration) -> Result<[f64; NUM_JOINTS]> {
    let mut out = [0.0; NUM_JOINTS];
    for (j, (&tau, c)) in torques.iter().zip(&cal.joints).enumerate() {
        if !tau.is_finite() {
            return Err(Error::invalid(format!("torque of joint {j} is not finite")));
        }
        out[j] = (tau / c.stiffness).clamp(-c.max_offset, c.max_offset);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoCommand {
    pub joint: usize,
    pub target_ticks: u16,
    pub offset_rad: f64,
    pub effort: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSet {
    pub commands: Vec<ServoCommand>,
    /// Joints whose target had to be clamped into the tick range.
    pub clamped: Vec<usize>,
}

impl CommandSet {
    pub fn target_angles(&self, cal: &ServoCalibration) -> JointPose {
        let mut q = JointPose::zeros();
        for c in &self.commands {
            q[c.joint] = ticks_to_angle(c.target_ticks, &cal.joints[c.joint]);
        }
        q
    }

    pub fn efforts(&self) -> [f64; NUM_JOINTS] {
        let mut e = [0.0; NUM_JOINTS];
        for c in &self.commands {
            e[c.joint] = c.effort;
        }
        e
    }
}

pub fn package_commands(
    targets: &JointPose,
    offsets: &[f64; NUM_JOINTS],
    efforts: &[f64; NUM_JOINTS],
    cal: &ServoCalibration,
) -> Result<CommandSet> {
    let mut commands = Vec::with_capacity(NUM_JOINTS);
    let mut clamped = Vec::new();
    for j in 0..NUM_JOINTS {
        let effort = efforts[j];
        if !(0.0..=1.0).contains(&effort) {
            return Err(Error::invalid(format!("effort of joint {j} outside [0, 1]: {effort}")));
        }
        let (ticks, hit) = angle_to_ticks(targets[j] + offsets[j], &cal.joints[j])?;
        if hit {
            clamped.push(j);
        }
        commands.push(ServoCommand {
            joint: j,
            target_ticks: ticks,
            offset_rad: offsets[j],
            effort,
        });
    }
    Ok(CommandSet { commands, clamped })
}

/// Appends one row per joint to a command log.
pub fn write_command_log<W: Write>(out: &mut W, t: f64, set: &CommandSet) -> std::io::Result<()> {
    for c in &set.commands {
        writeln!(
            out,
            "{},{},{},{},{}",
            t, JOINT_NAMES[c.joint], c.target_ticks, c.offset_rad, c.effort
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cal() -> JointCalibration {
        JointCalibration::default()
    }

    #[test]
    fn zero_and_quarter_turn() {
        assert_eq!(angle_to_ticks(0.0, &cal()).unwrap(), (2048, false));
        assert_eq!(angle_to_ticks(PI / 2.0, &cal()).unwrap(), (3072, false));
        assert_eq!(ticks_to_angle(2048, &cal()), 0.0);
        assert_eq!(ticks_to_angle(0, &cal()), -PI);
        let rev = JointCalibration {
            direction: -1,
            ..cal()
        };
        assert_eq!(ticks_to_angle(0, &rev), PI);
        assert_eq!(angle_to_ticks(PI / 2.0, &rev).unwrap(), (1024, false));
    }

    #[test]
    fn out_of_range_is_clamped_and_flagged() {
        assert_eq!(angle_to_ticks(3.5, &cal()).unwrap(), (4095, true));
        assert_eq!(angle_to_ticks(-3.5, &cal()).unwrap(), (0, true));
        assert!(angle_to_ticks(f64::NAN, &cal()).is_err());
    }

    #[test]
    fn feedforward_division_and_saturation() {
        let c = ServoCalibration::uniform(JointCalibration {
            stiffness: 10.0,
            max_offset: 0.3,
            ..cal()
        });
        let mut tau = [0.0; NUM_JOINTS];
        assert_eq!(feedforward_offsets(&tau, &c).unwrap(), [0.0; NUM_JOINTS]);
        tau[3] = 2.0;
        tau[4] = 1e6;
        let off = feedforward_offsets(&tau, &c).unwrap();
        assert_eq!(off[3], 0.2);
        assert_eq!(off[4], 0.3);
    }

    #[test]
    fn zero_pose_packages_to_centre() {
        let c = ServoCalibration::uniform(cal());
        let set = package_commands(&JointPose::zeros(), &[0.0; NUM_JOINTS], &[1.0; NUM_JOINTS], &c).unwrap();
        assert!(set.commands.iter().all(|c| c.target_ticks == 2048));
        assert!(set.clamped.is_empty());
    }

    #[test]
    fn offset_past_limit_is_reported() {
        let c = ServoCalibration::uniform(cal());
        let mut q = JointPose::zeros();
        q[7] = 3.1;
        let mut off = [0.0; NUM_JOINTS];
        off[7] = 0.15;
        let set = package_commands(&q, &off, &[1.0; NUM_JOINTS], &c).unwrap();
        assert_eq!(set.clamped, vec![7]);
        assert_eq!(set.commands[7].target_ticks, MAX_TICK);
    }

    #[test]
    fn shipped_calibration_loads_and_round_trips() {
        let c = ServoCalibration::default();
        let back = ServoCalibration::from_json(&c.to_json_value().to_string()).unwrap();
        assert_eq!(back, c);
        // Leg actuators are stiffer than arm actuators.
        assert!(c.joints[crate::model::joint::LEFT_LEG.knee_pitch].stiffness > c.joints[crate::model::joint::LEFT_ARM.elbow_pitch].stiffness);
    }

    #[test]
    fn command_log_rows() {
        let c = ServoCalibration::uniform(cal());
        let set = package_commands(&JointPose::zeros(), &[0.0; NUM_JOINTS], &[0.5; NUM_JOINTS], &c).unwrap();
        let mut buf = Vec::new();
        write_command_log(&mut buf, 0.01, &set).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), NUM_JOINTS);
        assert_eq!(text.lines().next().unwrap(), "0.01,neck_yaw,2048,0,0.5");
    }

    proptest! {
        #[test]
        fn round_trip_within_half_tick(a in -3.0f64..3.0, dir in prop::bool::ANY) {
            let c = JointCalibration { direction: if dir { 1 } else { -1 }, ..cal() };
            let (t, clamped) = angle_to_ticks(a, &c).unwrap();
            prop_assert!(!clamped);
            let back = ticks_to_angle(t, &c);
            prop_assert!((back - a).abs() <= HALF_TICK * (1.0 + 1e-12));
        }

        #[test]
        fn feedforward_is_odd(tau in -50.0f64..50.0, j in 0usize..NUM_JOINTS) {
            let c = ServoCalibration::default();
            let mut a = [0.0; NUM_JOINTS];
            a[j] = tau;
            let mut b = [0.0; NUM_JOINTS];
            b[j] = -tau;
            prop_assert_eq!(feedforward_offsets(&a, &c).unwrap()[j], -feedforward_offsets(&b, &c).unwrap()[j]);
        }

        #[test]
        fn packaged_ticks_stay_in_range(q in prop::array::uniform20(-10.0f64..10.0)) {
            let c = ServoCalibration::default();
            let set = package_commands(&JointPose(q), &[0.0; NUM_JOINTS], &[1.0; NUM_JOINTS], &c).unwrap();
            prop_assert!(set.commands.iter().all(|c| c.target_ticks <= MAX_TICK));
        }
    }
}
