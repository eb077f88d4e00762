//! Settings resolution: flags, then `SYNPRUNE_*` variables (both handled by
//! clap), then the TOML config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use synprune_core::conventions::{load_conventions, ConventionSet};
use synprune_core::evalharness::Ratio;
use synprune_core::pruner::PruneMode;
use synprune_core::scoring::DEFAULT_K;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub conventions: Option<PathBuf>,
    pub prune_mode: Option<PruneMode>,
    pub k: Option<u32>,
    pub seed: Option<u64>,
    pub ratio: Option<Ratio>,
    pub epsilon: Option<f64>,
    pub parallelism: Option<usize>,
    pub length_threshold: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Values shared by every command after merging all sources.
#[derive(Debug)]
pub struct Settings {
    pub conventions: ConventionSet,
    pub prune_mode: PruneMode,
    pub k: u32,
    pub seed: u64,
    pub ratio: Option<Ratio>,
    pub epsilon: Option<f64>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub parallelism: usize,
    pub length_threshold: Option<usize>,
}

pub struct Overrides {
    pub conventions: Option<PathBuf>,
    pub prune_mode: Option<PruneMode>,
    pub k: Option<u32>,
    pub seed: Option<u64>,
    pub ratio: Option<Ratio>,
    pub epsilon: Option<f64>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub parallelism: Option<usize>,
    pub length_threshold: Option<usize>,
}

impl Settings {
    pub fn resolve(flags: Overrides, file: FileConfig) -> Result<Self> {
        let conventions = match flags.conventions.or(file.conventions) {
            Some(path) => {
                let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                load_conventions(&bytes).with_context(|| format!("loading conventions from {}", path.display()))?
            }
            None => ConventionSet::shipped(),
        };
        let k = flags.k.or(file.k).unwrap_or(DEFAULT_K);
        if !(1..=100).contains(&k) {
            bail!("--k must be between 1 and 100, got {k}");
        }
        Ok(Settings {
            conventions,
            prune_mode: flags.prune_mode.or(file.prune_mode).unwrap_or_default(),
            k,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            ratio: flags.ratio.or(file.ratio),
            epsilon: flags.epsilon.or(file.epsilon),
            endpoint: flags.endpoint.or(file.endpoint),
            model: flags.model.or(file.model),
            parallelism: flags.parallelism.or(file.parallelism).unwrap_or(4),
            length_threshold: flags.length_threshold.or(file.length_threshold),
        })
    }
}
