use std::time::Instant;

use propwatch_core::corpus::{Message, MessageKey};
use propwatch_core::models::{build_pair_vector, load_model, InputKind, MlpModel, Verdict};

use crate::config::{BotConfig, MissingPolicy};
use crate::embed::Embedder;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Scored {
    Verdict {
        verdict: Verdict,
        /// Scored by the reply-only model because the trigger had no embedding.
        fallback: bool,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub key: MessageKey,
    pub scored: Scored,
    pub trigger_resolved: bool,
    pub latency_secs: f64,
}

impl Outcome {
    pub fn verdict(&self) -> Option<&Verdict> {
        match &self.scored {
            Scored::Verdict { verdict, .. } => Some(verdict),
            Scored::Skipped { .. } => None,
        }
    }
}

/// Pair model plus its embedder. Scoring takes `&self` and keeps no state,
/// so one instance can be shared across threads.
#[derive(Debug, Clone)]
pub struct Detector {
    pair: MlpModel,
    pair_id: String,
    fallback: Option<(MlpModel, String)>,
    embedder: Embedder,
    threshold: f64,
    policy: MissingPolicy,
}

impl Detector {
    pub fn new(
        pair: MlpModel,
        pair_id: impl Into<String>,
        fallback: Option<(MlpModel, String)>,
        embedder: Embedder,
        threshold: f64,
        policy: MissingPolicy,
    ) -> Result<Self> {
        let dim = embedder.dim();
        pair.check_input(InputKind::Pair, dim)?;
        if let Some((m, _)) = &fallback {
            m.check_input(InputKind::Reply, dim)?;
        }
        if policy == MissingPolicy::Fallback && fallback.is_none() {
            return Err(Error::Config("the fallback policy needs a reply-only model".into()));
        }
        Ok(Self {
            pair,
            pair_id: pair_id.into(),
            fallback,
            embedder,
            threshold,
            policy,
        })
    }

    pub fn from_config(config: &BotConfig) -> Result<Self> {
        config.validate()?;
        let embedder = Embedder::from_source(&config.embedding)?;
        let load = |p| -> Result<(MlpModel, String)> {
            let any = load_model(p)?;
            let id = any.id();
            Ok((any.into_mlp()?, id))
        };
        let (pair, pair_id) = load(&config.pair_model)?;
        let fallback = config.fallback_model.as_deref().map(load).transpose()?;
        Self::new(pair, pair_id, fallback, embedder, config.threshold, config.on_missing_embedding)
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Embeds trigger and reply, scores the pair and thresholds it. A
    /// missing trigger fills its half of the input with zeros.
    pub fn verdict_for(&self, message: &Message, trigger: Option<&Message>) -> Outcome {
        let start = Instant::now();
        let scored = self.score(message, trigger);
        Outcome {
            key: message.key(),
            scored,
            trigger_resolved: trigger.is_some(),
            latency_secs: start.elapsed().as_secs_f64(),
        }
    }

    fn score(&self, message: &Message, trigger: Option<&Message>) -> Scored {
        let skip = |reason: String| {
            log::info!("no verdict for {}: {reason}", message.key());
            Scored::Skipped { reason }
        };
        let Some(reply) = self.embedder.embed(message) else {
            return skip("no embedding for the message".into());
        };
        let trigger_vec = match trigger.map(|t| (t, self.embedder.embed(t))) {
            None => None,
            Some((_, Some(v))) => Some(v),
            Some((t, None)) => {
                return match (self.policy, &self.fallback) {
                    (MissingPolicy::Fallback, Some((model, id))) => match model.predict(&reply) {
                        Ok(p) => Scored::Verdict {
                            verdict: Verdict::new(p, self.threshold, id.clone()),
                            fallback: true,
                        },
                        Err(e) => skip(e.to_string()),
                    },
                    _ => skip(format!("no embedding for trigger {}", t.key())),
                };
            }
        };
        let scored = build_pair_vector(trigger_vec.as_deref(), &reply).and_then(|x| self.pair.predict(&x));
        match scored {
            Ok(p) => Scored::Verdict {
                verdict: Verdict::new(p, self.threshold, self.pair_id.clone()),
                fallback: false,
            },
            Err(e) => skip(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use propwatch_core::corpus::Source;
    use propwatch_core::embeddings::EmbeddingStore;
    use propwatch_core::models::{InputSpec, MlpParams};

    fn msg(id: i64, text: &str, reply_to: Option<i64>) -> Message {
        Message {
            channel_id: "c".into(),
            message_id: id,
            account_id: Some("a".into()),
            timestamp: Utc.with_ymd_and_hms(2023, 9, 1, 0, 0, id as u32).unwrap(),
            text: text.into(),
            reply_to,
            first_name: None,
            last_name: None,
            username: None,
            deleted: false,
            source: Source::Realtime,
        }
    }

    fn model(kind: InputKind, dim: usize) -> MlpModel {
        let spec = InputSpec {
            kind,
            embedding_dim: dim,
            provenance: "test".into(),
        };
        MlpModel::initialize(
            spec,
            MlpParams {
                hidden: vec![4],
                ..MlpParams::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn absent_trigger_is_zero_filled() {
        let d = Detector::new(
            model(InputKind::Pair, 16),
            "m",
            None,
            Embedder::Hash { dim: 16 },
            0.5,
            MissingPolicy::Skip,
        )
        .unwrap();
        let m = msg(2, "hello there", None);
        let out = d.verdict_for(&m, None);
        let mut x = vec![0.0f32; 16];
        x.extend(propwatch_core::embeddings::hash_embed("hello there", 16).unwrap());
        let expected = model(InputKind::Pair, 16).predict(&x).unwrap();
        assert_eq!(out.verdict().unwrap().score, expected);
        assert!(!out.trigger_resolved);
    }

    #[test]
    fn replayed_event_gets_the_same_verdict() {
        let d = Detector::new(model(InputKind::Pair, 8), "m", None, Embedder::Hash { dim: 8 }, 0.5, MissingPolicy::Skip)
            .unwrap();
        let t = msg(1, "trigger text", None);
        let r = msg(2, "reply text", Some(1));
        assert_eq!(d.verdict_for(&r, Some(&t)).scored, d.verdict_for(&r, Some(&t)).scored);
    }

    #[test]
    fn missing_trigger_embedding_follows_policy() {
        let mut store = EmbeddingStore::new(8, "test").unwrap();
        store.push("c:2", &[0.5; 8]).unwrap();
        let t = msg(1, "trigger", None);
        let r = msg(2, "reply", Some(1));

        let skip = Detector::new(
            model(InputKind::Pair, 8),
            "m",
            None,
            Embedder::Store(store.clone()),
            0.5,
            MissingPolicy::Skip,
        )
        .unwrap();
        assert!(matches!(skip.verdict_for(&r, Some(&t)).scored, Scored::Skipped { .. }));
        assert!(skip.verdict_for(&r, None).verdict().is_some());

        let fb = Detector::new(
            model(InputKind::Pair, 8),
            "m",
            Some((model(InputKind::Reply, 8), "r".into())),
            Embedder::Store(store),
            0.5,
            MissingPolicy::Fallback,
        )
        .unwrap();
        match fb.verdict_for(&r, Some(&t)).scored {
            Scored::Verdict { verdict, fallback } => {
                assert!(fallback);
                assert_eq!(verdict.model_id, "r");
            }
            other => panic!("{other:?}"),
        }
        assert!(fb.verdict_for(&t, None).verdict().is_none());
    }

    #[test]
    fn model_and_embedder_dimensions_must_agree() {
        assert!(Detector::new(model(InputKind::Pair, 8), "m", None, Embedder::Hash { dim: 16 }, 0.5, MissingPolicy::Skip).is_err());
        assert!(Detector::new(model(InputKind::Reply, 8), "m", None, Embedder::Hash { dim: 8 }, 0.5, MissingPolicy::Skip).is_err());
    }
}
