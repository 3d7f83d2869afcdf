//! Feed-forward network: ReLU hidden layers, sigmoid output, cross-entropy
//! loss, Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_set, logit_loss, sigmoid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Reply,
    Trigger,
    /// `[trigger ‖ reply]`.
    Pair,
}

impl InputKind {
    pub fn width(self, embedding_dim: usize) -> usize {
        match self {
            InputKind::Pair => 2 * embedding_dim,
            _ => embedding_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub kind: InputKind,
    pub embedding_dim: usize,
    /// Provenance of the embeddings the model was trained on.
    pub provenance: String,
}

impl InputSpec {
    pub fn width(&self) -> usize {
        self.kind.width(self.embedding_dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![256, 64],
            epochs: 30,
            batch: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Fully connected layer, weights row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + dot(row, x));
        }
    }
}

/// Dot product with four independent accumulators so it vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub input: InputSpec,
    pub params: MlpParams,
    /// Hidden layers use ReLU; the last layer has one output and a sigmoid.
    pub layers: Vec<Dense>,
}

/// Pre-activations of every layer for one input.
struct Trace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    /// Input to layer `l`.
    fn layer_input(&self, l: usize) -> Vec<f64> {
        if l == 0 {
            self.input.clone()
        } else {
            self.pre[l - 1].iter().map(|&v| v.max(0.0)).collect()
        }
    }
}

impl MlpModel {
    /// Glorot-uniform weights drawn as `f32`, zero biases.
    pub fn initialize(input: InputSpec, params: MlpParams) -> Result<Self> {
        if input.embedding_dim == 0 || params.hidden.contains(&0) {
            return Err(Error::InvalidInput("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut sizes = vec![input.width()];
        sizes.extend(&params.hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut d = Dense::zeros(w[0], w[1]);
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt() as f32;
                for v in &mut d.weights {
                    *v = rng.random_range(-limit..=limit) as f64;
                }
                d
            })
            .collect();
        Ok(Self { input, params, layers })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let mut buf = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.forward(&cur, &mut buf);
            pre.push(buf.clone());
            if i + 1 < self.layers.len() {
                cur.clear();
                cur.extend(buf.iter().map(|&v| v.max(0.0)));
            }
        }
        Trace {
            input: x.to_vec(),
            pre,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut buf = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.forward(&cur, &mut buf);
            if i + 1 < self.layers.len() {
                for v in &mut buf {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut cur, &mut buf);
        }
        cur[0]
    }

    pub fn loss(&self, x: &[f64], y: bool) -> f64 {
        logit_loss(self.logit(x), y)
    }

    fn check_width(&self, n: usize) -> Result<()> {
        let w = self.layers[0].inputs;
        if n != w {
            return Err(Error::InvalidInput(format!("expected input width {w}, got {n}")));
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f32]) -> Result<f64> {
        self.check_width(x.len())?;
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        Ok(sigmoid(self.logit(&x)))
    }

    pub fn predict_batch<R: AsRef<[f32]>>(&self, rows: &[R]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r.as_ref())).collect()
    }

    /// Loss and its gradient for one example; gradients mirror `layers`.
    pub fn gradients(&self, x: &[f64], y: bool) -> (f64, Vec<Dense>) {
        let mut grads: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        let loss = self.accumulate_gradients(x, y, &mut grads);
        (loss, grads)
    }

    /// Adds the gradient for one example into `grads`; returns the loss.
    fn accumulate_gradients(&self, x: &[f64], y: bool, grads: &mut [Dense]) -> f64 {
        let trace = self.trace(x);
        let z = trace.pre.last().expect("at least one layer")[0];
        let loss = logit_loss(z, y);
        let mut delta = vec![sigmoid(z) - if y { 1.0 } else { 0.0 }];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = trace.layer_input(l);
            let g = &mut grads[l];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, v) in row.iter_mut().zip(&input) {
                    *gw += d * v;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            for (p, &z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                if z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        loss
    }

    fn round_to_f32(&mut self) {
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = *v as f32 as f64;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Mean loss over the training set before the first update.
    pub initial_loss: f64,
    /// Mean loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn mean_loss(model: &MlpModel, x: &[Vec<f64>], y: &[bool]) -> f64 {
    x.iter().zip(y).map(|(r, &v)| model.loss(r, v)).sum::<f64>() / x.len() as f64
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    fn step(&mut self, model: &mut MlpModel, grads: &[Dense], p: &MlpParams) {
        self.t += 1;
        let c1 = 1.0 - p.beta1.powi(self.t);
        let c2 = 1.0 - p.beta2.powi(self.t);
        let update = |w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..w.len() {
                m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
                v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g[i] * g[i];
                w[i] -= p.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + p.epsilon);
            }
        };
        for (((layer, g), m), v) in model.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
            update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
    }
}

/// Trains from a seeded initialization. Rows are put in a canonical order
/// first, so the result does not depend on how the caller ordered them.
/// Final weights are rounded to `f32`, the precision of model files.
pub fn train_mlp_traced<R: AsRef<[f32]>>(
    input: InputSpec,
    x: &[R],
    y: &[bool],
    params: &MlpParams,
) -> Result<(MlpModel, TrainLog)> {
    check_training_set(x, y)?;
    if params.batch == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let width = input.width();
    for (i, r) in x.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != width {
            return Err(Error::InvalidInput(format!("row {i} has width {}, expected {width}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("row {i} has a non-finite value")));
        }
    }

    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        y[a].cmp(&y[b]).then_with(|| {
            let (ra, rb) = (x[a].as_ref(), x[b].as_ref());
            ra.iter().map(|v| v.to_bits()).cmp(rb.iter().map(|v| v.to_bits()))
        })
    });
    let xs: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| x[i].as_ref().iter().map(|&v| v as f64).collect())
        .collect();
    let ys: Vec<bool> = order.iter().map(|&i| y[i]).collect();

    let mut model = MlpModel::initialize(input, params.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let zeros = || -> Vec<Dense> {
        model.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect()
    };
    let mut adam = Adam {
        m: zeros(),
        v: zeros(),
        t: 0,
    };
    let initial_loss = mean_loss(&model, &xs, &ys);
    let mut epoch_losses = Vec::with_capacity(params.epochs);
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    let mut acc: Vec<Dense> = zeros();
    for _ in 0..params.epochs {
        idx.shuffle(&mut rng);
        for batch in idx.chunks(params.batch) {
            for a in &mut acc {
                a.weights.iter_mut().for_each(|v| *v = 0.0);
                a.bias.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in batch {
                model.accumulate_gradients(&xs[i], ys[i], &mut acc);
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                a.weights.iter_mut().for_each(|v| *v *= scale);
                a.bias.iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut model, &acc, params);
        }
        epoch_losses.push(mean_loss(&model, &xs, &ys));
    }
    model.round_to_f32();
    if let Some(last) = epoch_losses.last_mut() {
        *last = mean_loss(&model, &xs, &ys);
    }
    Ok((
        model,
        TrainLog {
            initial_loss,
            epoch_losses,
        },
    ))
}

pub fn train_mlp<R: AsRef<[f32]>>(input: InputSpec, x: &[R], y: &[bool], params: &MlpParams) -> Result<MlpModel> {
    train_mlp_traced(input, x, y, params).map(|(m, _)| m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|a - n| / max(|a|, |n|, 1e-8)` over checked parameters.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation moved some ReLU across its kink, where
    /// central differences are meaningless.
    pub skipped: usize,
}

fn relu_pattern(model: &MlpModel, x: &[f64]) -> Vec<bool> {
    let t = model.trace(x);
    t.pre[..t.pre.len() - 1].iter().flatten().map(|&v| v > 0.0).collect()
}

/// Compares backpropagated gradients with central differences of step `h`.
pub fn grad_check(model: &MlpModel, x: &[f64], y: bool, h: f64) -> Result<GradCheck> {
    model.check_width(x.len())?;
    if !(h > 0.0) {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let (_, analytic) = model.gradients(x, y);
    let base = relu_pattern(model, x);
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for l in 0..model.layers.len() {
        let nw = model.layers[l].weights.len();
        for k in 0..nw + model.layers[l].bias.len() {
            let a = if k < nw {
                analytic[l].weights[k]
            } else {
                analytic[l].bias[k - nw]
            };
            let orig = if k < nw {
                model.layers[l].weights[k]
            } else {
                model.layers[l].bias[k - nw]
            };
            let mut eval_at = |v: f64| {
                if k < nw {
                    probe.layers[l].weights[k] = v;
                } else {
                    probe.layers[l].bias[k - nw] = v;
                }
                (relu_pattern(&probe, x), probe.loss(x, y))
            };
            let (plus_pattern, plus) = eval_at(orig + h);
            let (minus_pattern, minus) = eval_at(orig - h);
            eval_at(orig);
            if plus_pattern != base || minus_pattern != base {
                out.skipped += 1;
                continue;
            }
            let n = (plus - minus) / (2.0 * h);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            out.max_rel_error = out.max_rel_error.max(rel);
            out.checked += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize) -> InputSpec {
        InputSpec {
            kind: InputKind::Reply,
            embedding_dim: dim,
            provenance: "test".into(),
        }
    }

    fn small(seed: u64) -> MlpParams {
        MlpParams {
            hidden: vec![8, 4],
            epochs: 60,
            batch: 16,
            learning_rate: 1e-2,
            seed,
            ..MlpParams::default()
        }
    }

    fn blobs(seed: u64) -> (Vec<Vec<f32>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let c = if i % 2 == 0 { 2.0 } else { -2.0 };
            x.push(vec![c + rng.random_range(-1.0f32..1.0), c + rng.random_range(-1.0f32..1.0)]);
            y.push(i % 2 == 0);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs() {
        let (x, y) = blobs(1);
        let (m, log) = train_mlp_traced(spec(2), &x, &y, &small(4)).unwrap();
        let ok = x.iter().zip(&y).filter(|(r, &v)| (m.predict(r).unwrap() >= 0.5) == v).count();
        assert!(ok as f64 / 200.0 >= 0.99);
        assert!(*log.epoch_losses.last().unwrap() < log.initial_loss);
    }

    #[test]
    fn deterministic_and_order_free() {
        let (x, y) = blobs(2);
        let a = train_mlp(spec(2), &x, &y, &small(5)).unwrap();
        let b = train_mlp(spec(2), &x, &y, &small(5)).unwrap();
        assert_eq!(a, b);
        let mut pairs: Vec<_> = x.into_iter().zip(y).collect();
        pairs.reverse();
        let (xr, yr): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        assert_eq!(train_mlp(spec(2), &xr, &yr, &small(5)).unwrap(), a);
    }

    #[test]
    fn rejects_bad_input() {
        let x = vec![vec![0.0f32, 1.0], vec![1.0, 0.0]];
        assert!(train_mlp(spec(2), &x, &[true, true], &small(0)).is_err());
        assert!(train_mlp(spec(3), &x, &[true, false], &small(0)).is_err());
    }

    #[test]
    fn zero_weights_bias_gradient_closed_form() {
        let mut m = MlpModel::initialize(spec(3), small(0)).unwrap();
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
        }
        m.layers.last_mut().unwrap().bias[0] = 0.3;
        let (_, g) = m.gradients(&[0.5, -1.0, 2.0], true);
        assert!((g.last().unwrap().bias[0] - (sigmoid(0.3) - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_forward() {
        // one hidden layer of width 2, identity-like weights
        let mut m = MlpModel::initialize(
            spec(2),
            MlpParams {
                hidden: vec![2],
                ..small(0)
            },
        )
        .unwrap();
        m.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        m.layers[0].bias = vec![0.0, 0.0];
        m.layers[1].weights = vec![1.0, -1.0];
        m.layers[1].bias = vec![0.5];
        // relu(2) - relu(-1) + 0.5 = 2.5
        assert!((m.predict(&[2.0, -1.0]).unwrap() - sigmoid(2.5)).abs() < 1e-15);
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = MlpModel::initialize(spec(4), small(11)).unwrap();
        let g = grad_check(&m, &[0.3, -0.7, 1.1, 0.05], true, 1e-4).unwrap();
        assert!(g.max_rel_error < 1e-4, "{g:?}");
        assert!(g.checked > 0);
    }
}
