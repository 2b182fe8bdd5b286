//! The TOML run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::AttitudeGains;
use crate::fusion::{GainConfig, Hysteresis, OdometryConfig};
use crate::nn::TrainConfig;
use crate::simkit::{ScenarioConfig, SensorRig, VehicleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionsConfig {
    /// Number of sessions `simulate` writes.
    pub count: usize,
}

impl Default for SessionsConfig {
    fn default() -> Self {
        Self { count: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub hysteresis: Hysteresis,
    pub inference_stride: usize,
    /// Body-frame offset added to the ground-truth velocity in oracle mode, m/s.
    pub oracle_velocity_bias: [f64; 3],
}

impl Default for FusionConfig {
    fn default() -> Self {
        let odo = OdometryConfig::default();
        Self {
            hysteresis: odo.hysteresis,
            inference_stride: odo.inference_stride,
            oracle_velocity_bias: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory `simulate` writes sessions to and `train` reads them from.
    pub data_dir: Option<PathBuf>,
    /// Default output directory.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub sessions: SessionsConfig,
    pub vehicle: VehicleParams,
    pub rig: SensorRig,
    pub gains: GainConfig,
    pub attitude: AttitudeGains,
    pub fusion: FusionConfig,
    pub training: TrainConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            sessions: SessionsConfig::default(),
            vehicle: VehicleParams::default(),
            rig: SensorRig::default(),
            gains: GainConfig::default(),
            attitude: AttitudeGains::default(),
            fusion: FusionConfig::default(),
            training: desk_training(),
            paths: PathsConfig::default(),
        }
    }
}

/// Training settings sized for a single CPU core and a handful of sessions.
pub fn desk_training() -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        max_epochs: 30,
        patience: 8,
        cycle_epochs: 4,
        stride: 16,
        validation_stride: 20,
        ..TrainConfig::default()
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        overlay(&mut merged, user);
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.vehicle.validate()?;
        self.rig.validate()?;
        self.training.validate()?;
        if self.sessions.count == 0 {
            return Err(Error::Config("sessions.count must be at least 1".into()));
        }
        self.odometry().validate()
    }

    pub fn odometry(&self) -> OdometryConfig {
        OdometryConfig {
            gains: self.gains,
            attitude: self.attitude,
            hysteresis: self.fusion.hysteresis,
            inference_stride: self.fusion.inference_stride,
        }
    }
}

/// Tables merge key by key so a partial `[training]` keeps the desk values
/// rather than falling back to `TrainConfig::default()`.
fn overlay(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => overlay(b, u),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// A standalone observer-gain file, the same keys as the `[gains]` table.
pub fn load_gains(path: &Path) -> Result<GainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let gains: GainConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    gains.validate()?;
    Ok(gains)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_default_file_equals_the_built_in_defaults() {
        let text = include_str!("../../../../configs/default.toml");
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_tables_keep_the_other_defaults() {
        let cfg = RunConfig::from_toml("[training]\nmax_epochs = 3\n").unwrap();
        let mut expected = desk_training();
        expected.max_epochs = 3;
        assert_eq!(cfg.training, expected);
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for doc in ["bogus = 1", "[scenario]\nspeed = 2.0", "[gains]\nk7 = [0.0, 0.0, 0.0]", "[rig.noise]\nfoo = 1.0"] {
            let err = RunConfig::from_toml(doc).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{doc}: {err}");
        }
    }

    #[test]
    fn serialized_config_reparses_identically() {
        let mut cfg = RunConfig::default();
        cfg.scenario.duration = 80.0;
        cfg.gains.beta = 0.25;
        cfg.training.max_epochs = 3;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = RunConfig::from_toml("[sessions]\ncount = 0").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(RunConfig::from_toml("[fusion]\ninference_stride = 0").is_err());
    }
}
