//! The run configuration: one TOML document mirroring every module's config
//! type. Precedence is file < environment < command-line flag.

use std::path::Path;

use anyhow::Context;
use ris_core::stats::DEFAULT_SWEEP;
use ris_core::TrainConfig;
use ris_gateway::{GenerationConfig, JudgeConfig, RetryPolicy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threshold: f64,
    pub generation: GenerationConfig,
    pub judges: JudgeConfig,
    pub train: TrainConfig,
    pub embedding: EmbeddingConfig,
    pub stats: StatsConfig,
    pub service: ServiceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            threshold: ris_core::judging::DEFAULT_THRESHOLD,
            generation: GenerationConfig::default(),
            judges: JudgeConfig::default(),
            train: TrainConfig { seed: 42, ..TrainConfig::default() },
            embedding: EmbeddingConfig::default(),
            stats: StatsConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Embedding-provider base URL; the hashing fallback is used when unset.
    pub base: Option<String>,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Significance level for post-hoc power.
    pub alpha: f64,
    pub sweep: Vec<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { alpha: 0.05, sweep: DEFAULT_SWEEP.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub addr: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { addr: "127.0.0.1:8080".into() }
    }
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut config: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(base) = env("RIS_API_BASE") {
            config.generation.api_base.get_or_insert_with(|| base.clone());
            config.judges.api_base.get_or_insert(base);
        }
        if let Some(base) = env("RIS_EMBED_BASE") {
            config.embedding.base.get_or_insert(base);
        }
        Ok(config)
    }

    /// Applies the common `--seed` / `--threshold` overrides.
    pub fn apply_overrides(&mut self, seed: Option<u64>, threshold: Option<f64>) -> anyhow::Result<()> {
        if let Some(seed) = seed {
            self.seed = seed;
            self.train.seed = seed;
        }
        if let Some(t) = threshold {
            self.threshold = t;
        }
        anyhow::ensure!((0.0..=1.0).contains(&self.threshold), "threshold {} outside [0, 1]", self.threshold);
        Ok(())
    }
}
