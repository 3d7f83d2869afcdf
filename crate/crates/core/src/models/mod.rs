//! Detectors: boosted trees over handcrafted features, MLPs over message
//! embeddings, the two-detector ensemble, and model files.

pub mod gbt;
mod io;
pub mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::Label;

pub use gbt::{train_gbt, train_gbt_traced, GbtModel, GbtParams};
pub use io::{load_gbt_for, load_mlp_for, load_model, save_model, AnyModel};
pub use mlp::{grad_check, train_mlp, train_mlp_traced, GradCheck, InputKind, InputSpec, MlpModel, MlpParams, TrainLog};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of a logit `z` against label `y`.
pub fn logit_loss(z: f64, y: bool) -> f64 {
    softplus(z) - if y { z } else { 0.0 }
}

/// Rejects empty or single-class label vectors and length mismatches.
pub(crate) fn check_training_set<R>(x: &[R], y: &[bool]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("need at least two training rows".into()));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::InvalidInput("training labels contain a single class".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    pub label: Label,
    pub model_id: String,
    pub threshold: f64,
}

impl Verdict {
    pub fn new(score: f64, threshold: f64, model_id: impl Into<String>) -> Self {
        Self {
            score,
            label: Label::from_bool(score >= threshold),
            model_id: model_id.into(),
            threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleRule {
    /// Propaganda iff `p_trigger + p_reply >= 1`.
    #[default]
    ScoreSum,
    /// Propaganda iff either detector alone crosses the threshold.
    BinarizeOr,
}

pub fn ensemble_label(p_trigger: f64, p_reply: f64) -> Label {
    Label::from_bool(p_trigger + p_reply >= 1.0)
}

pub fn ensemble_with(rule: EnsembleRule, p_trigger: f64, p_reply: f64, threshold: f64) -> Label {
    match rule {
        EnsembleRule::ScoreSum => ensemble_label(p_trigger, p_reply),
        EnsembleRule::BinarizeOr => Label::from_bool(p_trigger >= threshold || p_reply >= threshold),
    }
}

/// Mean of the two scores; thresholding it at 0.5 reproduces [`ensemble_label`].
pub fn ensemble_score(p_trigger: f64, p_reply: f64) -> f64 {
    (p_trigger + p_reply) / 2.0
}

/// `[trigger ‖ reply]`; a missing trigger becomes a zero block.
pub fn build_pair_vector(trigger: Option<&[f32]>, reply: &[f32]) -> Result<Vec<f32>> {
    let dim = reply.len();
    let mut out = Vec::with_capacity(2 * dim);
    match trigger {
        Some(t) if t.len() != dim => {
            return Err(Error::InvalidInput(format!(
                "trigger has dimension {}, reply {dim}",
                t.len()
            )))
        }
        Some(t) => out.extend_from_slice(t),
        None => out.resize(dim, 0.0),
    }
    out.extend_from_slice(reply);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble_label(0.9, 0.9), Label::Propaganda);
        assert_eq!(ensemble_label(0.2, 0.3), Label::User);
        assert_eq!(ensemble_label(0.5, 0.5), Label::Propaganda);
    }

    #[test]
    fn ensemble_on_binary_scores_is_or() {
        for t in [0.0, 1.0] {
            for r in [0.0, 1.0] {
                let majority_tie_positive = (t + r) * 2.0 >= 2.0;
                assert_eq!(ensemble_label(t, r).is_propaganda(), majority_tie_positive);
                assert_eq!(
                    ensemble_label(t, r),
                    ensemble_with(EnsembleRule::BinarizeOr, t, r, 0.5)
                );
            }
        }
    }

    #[test]
    fn ensemble_score_threshold_matches_label() {
        for (t, r) in [(0.1, 0.2), (0.5, 0.5), (0.7, 0.31), (0.99, 0.0)] {
            assert_eq!(
                ensemble_label(t, r),
                Label::from_bool(ensemble_score(t, r) >= 0.5)
            );
        }
    }

    #[test]
    fn pair_vector_layout() {
        let a = [1.0f32, 2.0, 3.0];
        let b = [4.0f32, 5.0, 6.0];
        assert_eq!(build_pair_vector(Some(&a), &b).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(build_pair_vector(None, &b).unwrap(), vec![0.0, 0.0, 0.0, 4.0, 5.0, 6.0]);
        assert!(build_pair_vector(Some(&a[..2]), &b).is_err());
    }

    #[test]
    fn verdict_threshold_monotone() {
        for s in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let mut prev = true;
            for t in [0.01, 0.3, 0.5, 0.7, 0.99] {
                let p = Verdict::new(s, t, "m").label.is_propaganda();
                assert!(prev || !p, "raising threshold flipped to propaganda");
                prev = p;
            }
        }
    }

    #[test]
    fn stable_loss_functions() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(800.0).is_finite());
        assert!(logit_loss(-800.0, false) < 1e-300 + 1e-12);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }
}
