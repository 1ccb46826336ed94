//! TOML project configuration shared by every command.
//!
//! ```toml
//! [scenario]          # ScenarioConfig, any field may be omitted
//! total_vehicles = 300
//! [sweep]             # SweepConfig
//! replications = 5
//! [cba.profile]       # HighwayProfile
//! [cba.traffic]       # TrafficModel
//! [cba.horizon]       # Horizon
//! ```
//!
//! Unknown keys are rejected so that typos never fall back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cba::{CbaError, HighwayProfile, Horizon, TrafficModel};
use crate::experiments::{ExperimentError, SweepConfig};
use crate::scenario::{ScenarioConfig, ScenarioError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbaConfig {
    pub profile: HighwayProfile,
    pub traffic: TrafficModel,
    pub horizon: Horizon,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
    pub cba: CbaConfig,
}

impl ProjectConfig {
    /// Parses without validating; `origin` only labels diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }
}

fn invalid(origin: &str, section: &str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        path: origin.into(),
        message: format!("[{section}] {e}"),
    }
}

pub fn validate_scenario(c: &ScenarioConfig, origin: &str) -> Result<(), ConfigError> {
    c.validate().map_err(|e: ScenarioError| invalid(origin, "scenario", e))
}

pub fn validate_sweep(c: &SweepConfig, origin: &str) -> Result<(), ConfigError> {
    c.validate().map_err(|e: ExperimentError| invalid(origin, "sweep", e))
}

pub fn validate_cba(c: &CbaConfig, origin: &str) -> Result<(), ConfigError> {
    c.profile
        .validate()
        .and_then(|_| c.traffic.validate())
        .and_then(|_| c.horizon.years().map(|_| ()))
        .map_err(|e: CbaError| invalid(origin, "cba", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(ProjectConfig::parse("", "x").unwrap(), ProjectConfig::default());
    }

    #[test]
    fn unknown_key_names_the_field_and_line() {
        let err = ProjectConfig::parse("[scenario]\ntotal_vehicles = 10\ntotal_vehicle = 3\n", "cfg.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("total_vehicle"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn round_trip() {
        let c = ProjectConfig::default();
        assert_eq!(ProjectConfig::parse(&c.to_toml(), "x").unwrap(), c);
    }

    #[test]
    fn invalid_value_is_reported_by_section() {
        let c = ProjectConfig::parse("[scenario]\ndt_s = -1.0\n", "x").unwrap();
        let msg = validate_scenario(&c.scenario, "x").unwrap_err().to_string();
        assert!(msg.contains("[scenario]") && msg.contains("dt_s"), "{msg}");
    }
}
