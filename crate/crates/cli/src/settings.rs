//! The TOML configuration file. Every section is optional; command-line
//! flags take precedence over anything set here.

use std::path::Path;

use propwatch_core::coordination::DEFAULT_GRAPH_MIN_LEN;
use propwatch_core::evaluation::EvalConfig;
use propwatch_core::labeling::DEFAULT_MIN_LEN;
use propwatch_core::synthgen::GenConfig;
use propwatch_core::topics::DbscanParams;
use propwatch_modbot::BotConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub synth: GenConfig,
    pub embeddings: EmbeddingSettings,
    pub labeling: LabelingSettings,
    pub graph: GraphSettings,
    pub topics: TopicSettings,
    pub eval: EvalConfig,
    pub bot: BotConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    /// Dimension of the hashed embeddings written by `synth`.
    pub hash_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingSettings {
    pub min_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSettings {
    pub min_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicSettings {
    pub dbscan: DbscanParams,
    pub bin_hours: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: None,
            synth: GenConfig::default(),
            embeddings: EmbeddingSettings::default(),
            labeling: LabelingSettings::default(),
            graph: GraphSettings::default(),
            topics: TopicSettings::default(),
            eval: EvalConfig::default(),
            bot: BotConfig::default(),
        }
    }
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self { hash_dim: 512 }
    }
}

impl Default for LabelingSettings {
    fn default() -> Self {
        Self {
            min_len: DEFAULT_MIN_LEN,
        }
    }
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self {
            min_len: DEFAULT_GRAPH_MIN_LEN,
        }
    }
}

impl Default for TopicSettings {
    fn default() -> Self {
        Self {
            dbscan: DbscanParams::default(),
            bin_hours: 24,
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// A single seed drives every randomized component.
    pub fn apply_seed(&mut self, flag: Option<u64>) {
        if let Some(seed) = flag.or(self.seed) {
            self.seed = Some(seed);
            self.synth.seed = seed;
            self.eval.seed = seed;
            self.eval.mlp.seed = seed;
            self.eval.gbt.seed = seed;
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.eval.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let s: Settings = toml::from_str("seed = 3\n[eval.mlp]\nepochs = 2\n[topics.dbscan]\neps = 0.2\n").unwrap();
        assert_eq!(s.eval.mlp.epochs, 2);
        assert_eq!(s.eval.mlp.hidden, EvalConfig::default().mlp.hidden);
        assert_eq!(s.topics.dbscan.eps, 0.2);
        assert_eq!(s.topics.dbscan.min_pts, 5);
        assert_eq!(s.seed, Some(3));
    }

    #[test]
    fn flag_seed_wins() {
        let mut s: Settings = toml::from_str("seed = 3").unwrap();
        s.apply_seed(Some(9));
        assert_eq!((s.synth.seed, s.eval.seed, s.eval.mlp.seed), (9, 9, 9));
        let mut s: Settings = toml::from_str("seed = 3").unwrap();
        s.apply_seed(None);
        assert_eq!(s.synth.seed, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("sed = 3").is_err());
    }
}
