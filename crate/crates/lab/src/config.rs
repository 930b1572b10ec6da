//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use algd_core::{EnvSpec, TrainConfig};
use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub env: EnvSpec,
    pub output_dir: PathBuf,
    /// Checkpoint period in epochs; a final checkpoint is always written.
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            env: EnvSpec::default(),
            output_dir: PathBuf::from("runs/default"),
            checkpoint_every: 50,
        }
    }
}

impl RunConfig {
    /// Parses and validates. Errors carry the dotted key path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path.is_empty() || path == "." {
                anyhow!("invalid config: {msg}")
            } else {
                anyhow!("invalid config at `{path}`: {msg}")
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(|e| keyed("train", e))?;
        self.env.validate().map_err(|e| keyed("env", e))?;
        if self.checkpoint_every == 0 {
            return Err(anyhow!("invalid config at `checkpoint_every`: must be positive"));
        }
        Ok(())
    }
}

fn keyed(section: &str, e: algd_core::Error) -> anyhow::Error {
    match e {
        algd_core::Error::InvalidParameter(m) | algd_core::Error::Validation(m) => match m.split_once(": ") {
            Some((key, why)) => anyhow!("invalid config at `{section}.{key}`: {why}"),
            None => anyhow!("invalid config at `{section}`: {m}"),
        },
        other => anyhow!("invalid config at `{section}`: {other}"),
    }
}
