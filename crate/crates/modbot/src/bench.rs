//! Per-pair scoring latency, measured end to end (embedding plus model).

use propwatch_core::corpus::{Corpus, Message};
use serde::Serialize;

use crate::detector::Detector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub pairs: usize,
    pub mean_secs: f64,
    /// Sample standard deviation; absent for a single pair.
    pub std_secs: Option<f64>,
    pub min_secs: f64,
    pub max_secs: f64,
}

/// (trigger, reply) pairs from a corpus: every message that replies to a
/// message present in the same channel, up to `limit`.
pub fn reply_pairs(corpus: &Corpus, limit: usize) -> Vec<(Option<Message>, Message)> {
    corpus
        .messages()
        .filter_map(|m| corpus.trigger_of(m).map(|t| (Some(t.clone()), m.clone())))
        .take(limit)
        .collect()
}

pub fn latency_bench(detector: &Detector, pairs: &[(Option<Message>, Message)]) -> Result<BenchResult> {
    if pairs.is_empty() {
        return Err(Error::Config("latency benchmark needs at least one pair".into()));
    }
    let times: Vec<f64> = pairs
        .iter()
        .map(|(t, r)| detector.verdict_for(r, t.as_ref()).latency_secs)
        .collect();
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let std_secs = (times.len() > 1).then(|| (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Ok(BenchResult {
        pairs: times.len(),
        mean_secs: mean,
        std_secs,
        min_secs: times.iter().copied().fold(f64::INFINITY, f64::min),
        max_secs: times.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_an_error() {
        use crate::config::MissingPolicy;
        use crate::embed::Embedder;
        use propwatch_core::models::{InputKind, InputSpec, MlpModel, MlpParams};
        let spec = InputSpec {
            kind: InputKind::Pair,
            embedding_dim: 8,
            provenance: "t".into(),
        };
        let m = MlpModel::initialize(spec, MlpParams::default()).unwrap();
        let d = Detector::new(m, "m", None, Embedder::Hash { dim: 8 }, 0.5, MissingPolicy::Skip).unwrap();
        assert!(latency_bench(&d, &[]).is_err());
    }
}
