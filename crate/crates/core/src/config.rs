//! TOML scenario files.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ScenarioError),
}

impl ConfigError {
    /// Dotted key path of the offending field, when known.
    pub fn field_path(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Syntax { path, .. } => Some(path),
            ConfigError::Invalid(e) => Some(&e.path),
        }
    }
}

/// Parses and validates a scenario document. Keys left out keep their
/// default values.
pub fn parse_str(text: &str) -> Result<Scenario, ConfigError> {
    let de = toml::Deserializer::new(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Syntax {
            path: if path == "." { "<document>".into() } else { path },
            message: inner.message().trim().to_string(),
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// Loads the scenario at `path`; no path means the built-in defaults.
pub fn parse_config(path: Option<&Path>) -> Result<Scenario, ConfigError> {
    let Some(path) = path else {
        return Ok(Scenario::default());
    };
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_str(&text)
}

pub fn to_toml(scenario: &Scenario) -> String {
    toml::to_string_pretty(scenario).expect("scenario fields are TOML-representable")
}
