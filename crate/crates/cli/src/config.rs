//! Run configuration from a TOML file. Values present in the file take
//! precedence over command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Lp,
    Crowd,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Replay,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub reviews: Option<PathBuf>,
    pub sentences: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub phase: Option<String>,
    pub approach: Option<Approach>,
    #[serde(default)]
    pub conditions: Vec<String>,
    pub catalog: Option<PathBuf>,
    pub provider: Option<ProviderMode>,
    pub fixtures: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub batch_size: Option<usize>,
    pub threshold: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Approach-specific fields must be present for the chosen approach.
    pub fn check(&self) -> Result<()> {
        match self.approach {
            Some(Approach::Lp) if self.catalog.is_none() => {
                anyhow::bail!("approach `lp` needs `catalog`")
            }
            Some(Approach::Llm) if self.conditions.is_empty() => {
                anyhow::bail!("approach `llm` needs at least one entry in `conditions`")
            }
            _ => Ok(()),
        }
    }
}

/// `file` if set, else `flag`.
pub fn pick<T: Clone>(file: &Option<T>, flag: Option<T>) -> Option<T> {
    file.clone().or(flag)
}
