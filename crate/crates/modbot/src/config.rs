use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Where message embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Precomputed vectors, looked up by message key.
    Store { path: PathBuf },
    /// `POST {url}` with `{"texts": [...]}`.
    Endpoint { url: String, dim: usize },
    Hash { dim: usize },
}

impl Default for EmbeddingSource {
    fn default() -> Self {
        EmbeddingSource::Hash {
            dim: propwatch_core::embeddings::DEFAULT_HASH_DIM,
        }
    }
}

/// What to do when an embedding cannot be obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    #[default]
    Skip,
    /// Score with the reply-only model when only the trigger is missing.
    Fallback,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    #[default]
    Log,
    Delete,
    DeleteBan,
}

impl Action {
    pub fn acts(self) -> bool {
        self != Action::Log
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BotConfig {
    pub pair_model: PathBuf,
    pub fallback_model: Option<PathBuf>,
    pub embedding: EmbeddingSource,
    pub threshold: f64,
    pub on_missing_embedding: MissingPolicy,
    pub action: Action,
    /// Channels the bot may act in. Verdicts are produced everywhere.
    pub allowlist: BTreeSet<String>,
    pub api_base: Option<String>,
    pub api_token: Option<String>,
    pub lru_capacity: usize,
    pub max_in_flight: usize,
    /// Attempts per API call, the first included.
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for BotConfig {
    fn default() -> Self {
        Self {
            pair_model: PathBuf::from("pair.model.json"),
            fallback_model: None,
            embedding: EmbeddingSource::default(),
            threshold: 0.5,
            on_missing_embedding: MissingPolicy::Skip,
            action: Action::Log,
            allowlist: BTreeSet::new(),
            api_base: None,
            api_token: None,
            lru_capacity: 10_000,
            max_in_flight: 4,
            attempts: 3,
            backoff_ms: 200,
        }
    }
}

impl BotConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie strictly between 0 and 1");
        }
        if self.action.acts() {
            if self.api_base.is_none() || self.api_token.is_none() {
                return bad("acting on verdicts needs api_base and api_token");
            }
            if self.allowlist.is_empty() {
                return bad("acting on verdicts needs a non-empty channel allowlist");
            }
        }
        if self.on_missing_embedding == MissingPolicy::Fallback && self.fallback_model.is_none() {
            return bad("the fallback policy needs fallback_model");
        }
        if self.lru_capacity == 0 || self.max_in_flight == 0 || self.attempts == 0 {
            return bad("lru_capacity, max_in_flight and attempts must be positive");
        }
        match &self.embedding {
            EmbeddingSource::Hash { dim } | EmbeddingSource::Endpoint { dim, .. } if *dim == 0 => {
                bad("embedding dimension must be positive")
            }
            _ => Ok(()),
        }
    }

    pub fn backoff(&self) -> Duration {
        Duration::from_millis(self.backoff_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        BotConfig::default().validate().unwrap();
    }

    #[test]
    fn acting_needs_endpoint_token_and_allowlist() {
        let mut c = BotConfig {
            action: Action::Delete,
            ..BotConfig::default()
        };
        assert!(c.validate().is_err());
        c.api_base = Some("http://localhost:1".into());
        c.api_token = Some("t".into());
        assert!(c.validate().is_err());
        c.allowlist.insert("-100".into());
        c.validate().unwrap();
    }

    #[test]
    fn threshold_bounds_are_open() {
        for t in [0.0, 1.0, -0.1, f64::NAN] {
            let c = BotConfig {
                threshold: t,
                ..BotConfig::default()
            };
            assert!(c.validate().is_err(), "{t}");
        }
    }

    #[test]
    fn fallback_needs_a_model() {
        let c = BotConfig {
            on_missing_embedding: MissingPolicy::Fallback,
            ..BotConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn embedding_source_is_tagged() {
        let s: EmbeddingSource = serde_json::from_str(r#"{"kind":"endpoint","url":"http://x/embed","dim":4}"#).unwrap();
        assert_eq!(
            s,
            EmbeddingSource::Endpoint {
                url: "http://x/embed".into(),
                dim: 4
            }
        );
    }
}
