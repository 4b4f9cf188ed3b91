//! TOML run configuration. Every field can be overridden on the command line.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::backends::{HttpConfig, NliConfig};
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Simulated,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Exact,
    GroundTruth,
    Nli,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: Option<BackendKind>,
    pub oracle: Option<OracleKind>,
    /// Scenario file for the simulated backend.
    pub scenario: Option<PathBuf>,
    pub workers: Option<usize>,
    pub estimator: EstimatorConfig,
    pub http: HttpConfig,
    pub nli: NliConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Reads a config file; relative scenario paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(s), Some(dir)) = (&cfg.scenario, path.parent()) {
            if s.is_relative() {
                cfg.scenario = Some(dir.join(s));
            }
        }
        Ok(cfg)
    }
}
