//! Runtime configuration: JSON file, then `HOP_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use hop_core::estimator::FilterConfig;
use hop_core::sim::Resources;
use hop_core::{GaitConfig, RobotModel, ServoCalibration};

use crate::store::MotionStore;
use crate::CliError;

pub const ENV_PREFIX: &str = "HOP_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Robot model document; the shipped model when unset.
    pub model_path: Option<PathBuf>,
    pub gait_config_path: Option<PathBuf>,
    pub calibration_path: Option<PathBuf>,
    pub filter_config_path: Option<PathBuf>,
    /// Motion store directory. Created and seeded with the shipped motions
    /// if it does not exist.
    pub motions_dir: PathBuf,
    pub tick_rate: f64,
    pub log_dir: PathBuf,
    pub bind_address: String,
    pub port: u16,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            model_path: None,
            gait_config_path: None,
            calibration_path: None,
            filter_config_path: None,
            motions_dir: PathBuf::from("motions"),
            tick_rate: 100.0,
            log_dir: PathBuf::from("logs"),
            bind_address: "127.0.0.1".into(),
            port: 8740,
        }
    }
}

fn parse_override(current: &Value, raw: &str) -> Value {
    match current {
        // Unset optional fields are all paths.
        Value::String(_) | Value::Null => Value::String(raw.to_string()),
        // Numbers and booleans keep their JSON type; anything unparsable is
        // passed through as a string and rejected by deserialisation.
        _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
    }
}

impl RuntimeConfig {
    /// Loads `file` (if any) and applies overrides from `vars`, then
    /// validates. Variables are matched as `HOP_<KEY>` with the key
    /// upper-cased; unrelated `HOP_` variables are ignored.
    pub fn load<I>(file: Option<&Path>, vars: I) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let base = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?
            }
            None => RuntimeConfig::default(),
        };
        let mut doc = serde_json::to_value(&base).expect("config serialises");
        let map = doc.as_object_mut().expect("config is an object");
        for (key, raw) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            let field = name.to_ascii_lowercase();
            if let Some(slot) = map.get_mut(&field) {
                *slot = parse_override(slot, &raw);
            }
        }
        let cfg: RuntimeConfig = serde_json::from_value(doc)
            .map_err(|e| CliError::runtime(format!("environment override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_env(file: Option<&Path>) -> Result<Self, CliError> {
        Self::load(file, std::env::vars())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(10.0..=1000.0).contains(&self.tick_rate) {
            return Err(CliError::runtime(format!(
                "tick_rate must lie in [10, 1000] Hz, got {}",
                self.tick_rate
            )));
        }
        for path in [
            &self.model_path,
            &self.gait_config_path,
            &self.calibration_path,
            &self.filter_config_path,
        ]
        .into_iter()
        .flatten()
        {
            if !path.is_file() {
                return Err(CliError::runtime(format!("{}: file not found", path.display())));
            }
        }
        Ok(())
    }

    /// Model, gait, filter and servo documents plus the stored motions.
    pub fn resources(&self, store: Option<&MotionStore>) -> Result<Resources, CliError> {
        let mut res = Resources::default();
        if let Some(p) = &self.model_path {
            res.model = RobotModel::from_json(&read(p)?).map_err(|e| at(p, e))?;
        }
        if let Some(p) = &self.gait_config_path {
            res.gait = GaitConfig::from_json(&read(p)?).map_err(|e| at(p, e))?;
        }
        if let Some(p) = &self.calibration_path {
            res.servo = ServoCalibration::from_json(&read(p)?).map_err(|e| at(p, e))?;
        }
        if let Some(p) = &self.filter_config_path {
            let cfg: FilterConfig =
                serde_json::from_str(&read(p)?).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))?;
            cfg.validate().map_err(|e| at(p, e))?;
            res.filter = cfg;
        }
        if let Some(store) = store {
            for name in store.names() {
                res.motions.insert(name.clone(), store.motion(&name).expect("indexed"));
            }
        }
        Ok(res)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn at(path: &Path, e: hop_core::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn env_overrides_typed_fields() {
        let cfg = RuntimeConfig::load(
            None,
            vars(&[("HOP_TICK_RATE", "250"), ("HOP_PORT", "9000"), ("HOP_LOG_DIR", "/tmp/x"), ("OTHER", "1")]),
        )
        .unwrap();
        assert_eq!(cfg.tick_rate, 250.0);
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.log_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn unset_optional_path_accepts_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        std::fs::write(&p, hop_core::assets::MODEL_JSON).unwrap();
        let cfg = RuntimeConfig::load(None, vars(&[("HOP_MODEL_PATH", p.to_str().unwrap())])).unwrap();
        assert_eq!(cfg.model_path.as_deref(), Some(p.as_path()));
        cfg.resources(None).unwrap();
    }

    #[test]
    fn tick_rate_bounds() {
        for bad in ["9.9", "1000.5", "fast"] {
            assert!(RuntimeConfig::load(None, vars(&[("HOP_TICK_RATE", bad)])).is_err(), "{bad}");
        }
        for ok in ["10", "1000"] {
            assert!(RuntimeConfig::load(None, vars(&[("HOP_TICK_RATE", ok)])).is_ok());
        }
    }

    #[test]
    fn missing_path_is_reported() {
        let err = RuntimeConfig::load(None, vars(&[("HOP_GAIT_CONFIG_PATH", "/no/such/gait.json")])).unwrap_err();
        assert!(err.to_string().contains("/no/such/gait.json"));
    }

    #[test]
    fn file_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hop.json");
        std::fs::write(&p, r#"{"tick_rate": 50, "port": 1234}"#).unwrap();
        let cfg = RuntimeConfig::load(Some(&p), vars(&[("HOP_PORT", "4321")])).unwrap();
        assert_eq!((cfg.tick_rate, cfg.port), (50.0, 4321));
        std::fs::write(&p, r#"{"tick_rte": 50}"#).unwrap();
        assert!(RuntimeConfig::load(Some(&p), vars(&[])).is_err());
    }
}
