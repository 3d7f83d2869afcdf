//! Gradient-boosted regression trees with logistic loss, exact greedy splits.

use serde::{Deserialize, Serialize};

use super::{check_training_set, logit_loss, sigmoid};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    /// Minimum number of rows on each side of a split.
    pub min_child: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Recorded for reproducibility; exact greedy training draws no randomness.
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            trees: 200,
            depth: 4,
            learning_rate: 0.1,
            min_child: 5,
            lambda: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub params: GbtParams,
    pub n_features: usize,
    /// Initial margin: log-odds of the training base rate.
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub schema: Option<FeatureSchema>,
}

impl GbtModel {
    pub fn with_schema(mut self, schema: FeatureSchema) -> Self {
        self.schema = Some(schema);
        self
    }

    /// Fails unless the model was trained on `schema`.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let found = self.schema.as_ref().map(|s| s.hash()).unwrap_or_else(|| "none".into());
        let expected = schema.hash();
        if found != expected {
            return Err(Error::SchemaMismatch { expected, found });
        }
        Ok(())
    }

    /// Margin using only the first `n_trees` trees.
    pub fn margin_prefix(&self, x: &[f64], n_trees: usize) -> f64 {
        let mut m = self.base_score;
        for t in &self.trees[..n_trees.min(self.trees.len())] {
            m += t.value(x);
        }
        m
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.margin_prefix(x, self.trees.len())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::InvalidInput(format!(
                "expected {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(sigmoid(self.margin(x)))
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

fn mean_loss(margins: &[f64], y: &[bool]) -> f64 {
    margins.iter().zip(y).map(|(&m, &v)| logit_loss(m, v)).sum::<f64>() / y.len() as f64
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    g: &'a [f64],
    h: &'a [f64],
    sorted: &'a [Vec<usize>],
    in_node: Vec<bool>,
    params: &'a GbtParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (gs, hs) = rows
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + self.g[i], b + self.h[i]));
        let lambda = self.params.lambda;
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: -gs / (hs + lambda),
        });
        let min_child = self.params.min_child.max(1);
        if depth >= self.params.depth || rows.len() < 2 * min_child {
            return idx;
        }
        let Some(best) = self.best_split(&rows, gs, hs, min_child) else {
            return idx;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[i][best.feature] < best.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        idx
    }

    fn best_split(&mut self, rows: &[usize], gs: f64, hs: f64, min_child: usize) -> Option<BestSplit> {
        let lambda = self.params.lambda;
        let parent = gs * gs / (hs + lambda);
        let n = rows.len();
        for &i in rows {
            self.in_node[i] = true;
        }
        let mut best: Option<BestSplit> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let (mut gl, mut hl, mut count) = (0.0, 0.0, 0usize);
            let mut members = order.iter().copied().filter(|&i| self.in_node[i]).peekable();
            while let Some(i) = members.next() {
                gl += self.g[i];
                hl += self.h[i];
                count += 1;
                let Some(&next) = members.peek() else { break };
                let (v, w) = (self.x[i][f], self.x[next][f]);
                if w <= v || count < min_child || n - count < min_child {
                    continue;
                }
                let (gr, hr) = (gs - gl, hs - hl);
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = v + (w - v) / 2.0;
                    if threshold <= v {
                        threshold = w;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        for &i in rows {
            self.in_node[i] = false;
        }
        best
    }
}

/// Trains a model; also returns the mean training log-loss before any tree
/// and after each accepted round.
pub fn train_gbt_traced(x: &[Vec<f64>], y: &[bool], params: &GbtParams) -> Result<(GbtModel, Vec<f64>)> {
    check_training_set(x, y)?;
    let nf = x[0].len();
    if nf == 0 {
        return Err(Error::InvalidInput("rows have no features".into()));
    }
    for (i, r) in x.iter().enumerate() {
        if r.len() != nf {
            return Err(Error::InvalidInput(format!("row {i} has {} features, expected {nf}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("row {i} has a non-finite feature")));
        }
    }
    if !(params.learning_rate > 0.0) || params.lambda < 0.0 {
        return Err(Error::InvalidInput("learning rate must be positive and lambda non-negative".into()));
    }

    let n = x.len();
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let base_score = (pos / (n as f64 - pos)).ln();
    let sorted: Vec<Vec<usize>> = (0..nf)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut margins = vec![base_score; n];
    let mut loss = mean_loss(&margins, y);
    let mut history = vec![loss];
    let mut trees = Vec::new();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut in_node = vec![false; n];

    for _ in 0..params.trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            g[i] = p - if y[i] { 1.0 } else { 0.0 };
            h[i] = (p * (1.0 - p)).max(1e-16);
        }
        let mut grower = Grower {
            x,
            g: &g,
            h: &h,
            sorted: &sorted,
            in_node: std::mem::take(&mut in_node),
            params,
            nodes: Vec::new(),
        };
        grower.grow((0..n).collect(), 0);
        in_node = grower.in_node;
        let mut tree = Tree { nodes: grower.nodes };
        tree.scale(params.learning_rate);

        // Shrink the step until the training loss does not go up.
        let raw: Vec<f64> = x.iter().map(|r| tree.value(r)).collect();
        let mut accepted = None;
        let mut s = 1.0;
        for _ in 0..=20 {
            let cand: Vec<f64> = margins.iter().zip(&raw).map(|(m, v)| m + v * s).collect();
            let l = mean_loss(&cand, y);
            if l <= loss {
                accepted = Some((cand, l));
                break;
            }
            s /= 2.0;
        }
        let Some((cand, l)) = accepted else {
            log::debug!("boosting stopped after {} trees: no descent step", trees.len());
            break;
        };
        if s != 1.0 {
            tree.scale(s);
            // Recompute so stored leaves reproduce the accepted margins exactly.
            margins.iter_mut().zip(x).for_each(|(m, r)| *m += tree.value(r));
            loss = mean_loss(&margins, y);
            if loss > *history.last().expect("non-empty") {
                break;
            }
        } else {
            margins = cand;
            loss = l;
        }
        history.push(loss);
        trees.push(tree);
    }

    Ok((
        GbtModel {
            params: *params,
            n_features: nf,
            base_score,
            trees,
            schema: None,
        },
        history,
    ))
}

pub fn train_gbt(x: &[Vec<f64>], y: &[bool], params: &GbtParams) -> Result<GbtModel> {
    train_gbt_traced(x, y, params).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn accuracy(m: &GbtModel, x: &[Vec<f64>], y: &[bool]) -> f64 {
        let ok = x
            .iter()
            .zip(y)
            .filter(|(r, &v)| (m.predict(r).unwrap() >= 0.5) == v)
            .count();
        ok as f64 / y.len() as f64
    }

    #[test]
    fn separable_one_dimensional() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] > 5.0).collect();
        let m = train_gbt(&x, &y, &GbtParams::default()).unwrap();
        assert_eq!(accuracy(&m, &x, &y), 1.0);
    }

    #[test]
    fn constant_feature_predicts_base_rate() {
        let x: Vec<Vec<f64>> = vec![vec![3.0]; 40];
        let y: Vec<bool> = (0..40).map(|i| i < 10).collect();
        let m = train_gbt(&x, &y, &GbtParams::default()).unwrap();
        assert!((m.predict(&[3.0]).unwrap() - 0.25).abs() < 1e-9);
        assert!((m.predict(&[-7.0]).unwrap() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn xor_needs_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let y: Vec<bool> = x.iter().map(|r| (r[0] > 0.0) != (r[1] > 0.0)).collect();
        let m = train_gbt(&x, &y, &GbtParams::default()).unwrap();
        assert!(accuracy(&m, &x, &y) >= 0.95);
    }

    #[test]
    fn zero_trees_is_sigmoid_of_base() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![true, false, false];
        let params = GbtParams {
            trees: 0,
            ..GbtParams::default()
        };
        let m = train_gbt(&x, &y, &params).unwrap();
        assert!(m.trees.is_empty());
        assert!((m.predict(&[9.0]).unwrap() - sigmoid(m.base_score)).abs() < 1e-15);
        assert!((m.predict(&[9.0]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_single_class_and_ragged_rows() {
        assert!(train_gbt(&[vec![1.0], vec![2.0]], &[true, true], &GbtParams::default()).is_err());
        assert!(train_gbt(&[vec![1.0], vec![2.0, 3.0]], &[true, false], &GbtParams::default()).is_err());
    }

    #[test]
    fn loss_history_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..150).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] + 0.3 * rng.random::<f64>() > 0.6).collect();
        let (m, hist) = train_gbt_traced(&x, &y, &GbtParams::default()).unwrap();
        assert_eq!(hist.len(), m.trees.len() + 1);
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
    }
}
