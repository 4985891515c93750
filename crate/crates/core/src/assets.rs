//! Default documents shipped with the crate.

pub const MODEL_JSON: &str = include_str!("../assets/model.json");
pub const GAIT_JSON: &str = include_str!("../assets/gait.json");
pub const SERVO_CALIBRATION_JSON: &str = include_str!("../assets/servo_calibration.json");
pub const CAMERA_JSON: &str = include_str!("../assets/camera.json");
pub const FILTER_JSON: &str = include_str!("../assets/filter.json");

pub const GETUP_PRONE_JSON: &str = include_str!("../assets/motions/getup_prone.json");
pub const WAVE_JSON: &str = include_str!("../assets/motions/wave.json");

pub const WALK_SCENARIO_JSON: &str = include_str!("../assets/scenarios/walk_10s.json");
pub const DISTURBANCE_SCENARIO_JSON: &str = include_str!("../assets/scenarios/disturbance.json");
pub const GETUP_SCENARIO_JSON: &str = include_str!("../assets/scenarios/getup.json");

/// Shipped motions by name.
pub fn motion_json(name: &str) -> Option<&'static str> {
    match name {
        "getup_prone" => Some(GETUP_PRONE_JSON),
        "wave" => Some(WAVE_JSON),
        _ => None,
    }
}

pub const MOTION_NAMES: [&str; 2] = ["getup_prone", "wave"];
