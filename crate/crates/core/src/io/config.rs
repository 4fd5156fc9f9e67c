//! Run configuration: JSON file, then environment overrides for paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::{StageThresholds, VerifyConfig};
use crate::error::{Error, Result};
use crate::pyramid::PyramidConfig;
use crate::score_map::ProposalConfig;
use crate::trainer::{SynthParams, TrainSettings};

pub const ENV_DATA: &str = "FCNCASCADE_DATA";
pub const ENV_MODEL: &str = "FCNCASCADE_MODEL";
pub const ENV_OUT: &str = "FCNCASCADE_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data: "data".into(),
            model: "model".into(),
            out: "out".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub pyramid: PyramidConfig,
    pub proposal: ProposalConfig,
    pub verify: VerifyConfig,
    pub thresholds: StageThresholds,
    pub train: TrainSettings,
    pub synth: SynthParams,
    pub paths: PathsConfig,
}

impl AppConfig {
    pub fn validate(&self) -> Result<()> {
        self.pyramid.validate()?;
        self.proposal.validate()?;
        self.verify.validate()?;
        self.train.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults, overlaid by `path` when given, then by the path variables
    /// found through `env`.
    pub fn load_with(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(Error::at_path(p))?;
                Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        for (var, slot) in [
            (ENV_DATA, &mut cfg.paths.data),
            (ENV_MODEL, &mut cfg.paths.model),
            (ENV_OUT, &mut cfg.paths.out),
        ] {
            if let Some(v) = env(var).filter(|v| !v.is_empty()) {
                *slot = v.into();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        Self::load_with(path, |k| std::env::var(k).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let cfg = AppConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(AppConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(AppConfig::from_json(r#"{"pyramid": {"levels": [1]}}"#).is_err());
        assert!(AppConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = AppConfig::from_json(r#"{"proposal": {"threshold": 10.0}}"#).unwrap();
        assert_eq!(cfg.proposal.threshold, 10.0);
        assert_eq!(cfg.proposal.max_proposals, ProposalConfig::default().max_proposals);
    }

    #[test]
    fn environment_overrides_paths() {
        let cfg = AppConfig::load_with(None, |k| (k == ENV_MODEL).then(|| "/tmp/m".to_string())).unwrap();
        assert_eq!(cfg.paths.model, PathBuf::from("/tmp/m"));
        assert_eq!(cfg.paths.data, PathBuf::from("data"));
    }
}
