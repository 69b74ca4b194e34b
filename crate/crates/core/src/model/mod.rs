//! A small feed-forward softmax classifier trained with per-example
//! weighted cross-entropy.
//!
//! Parameters live in one flat vector. Layer `l` (mapping `n_in -> n_out`)
//! occupies `n_out * n_in` weights in row-major order (`W[j][i]` at
//! `offset + j * n_in + i`) followed by `n_out` biases. Gradients use the
//! same layout, which keeps the optimizer and checkpoints layout-agnostic.

mod checkpoint;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use optim::{OptimizerKind, OptimizerState};

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cartography::Observation;
use crate::dataset::ExampleId;
use crate::rng;

/// Floor applied to a predicted probability before taking its log.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("expected {expected} features, got {found}")]
    InputDim { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: expected {expected} values, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },
    #[error("invalid learning rate {0}")]
    LearningRate(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// Parameters of one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierState {
    layer_sizes: Vec<usize>,
    activation: Activation,
    seed: u64,
    params: Vec<f64>,
}

/// Gradient of a loss with respect to [`ClassifierState::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<(), ModelError> {
    if layer_sizes.len() < 2 {
        return Err(ModelError::Architecture("need at least input and output sizes".into()));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(ModelError::Architecture(format!("zero-width layer in {layer_sizes:?}")));
    }
    Ok(())
}

impl ClassifierState {
    /// Fresh parameters: weights ~ N(0, 1/fan_in), biases zero.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self, ModelError> {
        validate_sizes(layer_sizes)?;
        let mut rng = rng::seeded(seed);
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt())
                .expect("positive standard deviation");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(ClassifierState { layer_sizes: layer_sizes.to_vec(), activation, seed, params })
    }

    /// All-zero parameters; predicts the uniform distribution.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self, ModelError> {
        validate_sizes(layer_sizes)?;
        Ok(ClassifierState {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            seed: 0,
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    pub fn from_params(
        layer_sizes: &[usize],
        activation: Activation,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self, ModelError> {
        validate_sizes(layer_sizes)?;
        let expected = param_count(layer_sizes);
        if params.len() != expected {
            return Err(ModelError::Shape { expected, found: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite("parameters"));
        }
        Ok(ClassifierState { layer_sizes: layer_sizes.to_vec(), activation, seed, params })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated sizes")
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::InputDim { expected: self.input_dim(), found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("features"));
        }
        Ok(())
    }

    /// Forward pass keeping every layer's pre-activation and output.
    /// `outputs[0]` is the input; the last entry is the softmax.
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let depth = self.layer_sizes.len() - 1;
        let mut pre = Vec::with_capacity(depth);
        let mut outputs = Vec::with_capacity(depth + 1);
        outputs.push(x.to_vec());
        let mut offset = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let input = &outputs[l];
            let z: Vec<f64> = (0..n_out)
                .map(|j| {
                    let row = &weights[j * n_in..(j + 1) * n_in];
                    bias[j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let a = if l + 1 == depth {
                softmax(&z)
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            outputs.push(a);
        }
        (pre, outputs)
    }

    /// Softmax distribution over the K classes.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_input(x)?;
        let (_, mut outputs) = self.forward_trace(x);
        Ok(outputs.pop().expect("at least one layer"))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelError> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Unweighted per-example cross-entropy, `-ln max(p[y], LOG_CLAMP)`.
    pub fn per_example_losses(&self, features: &[&[f64]], labels: &[usize]) -> Result<Vec<f64>, ModelError> {
        if features.len() != labels.len() {
            return Err(ModelError::Batch("features and labels differ in length".into()));
        }
        features
            .iter()
            .zip(labels)
            .map(|(x, &y)| {
                let p = self.predict_proba(x)?;
                let py = *p.get(y).ok_or(ModelError::Label { label: y, num_classes: p.len() })?;
                Ok(-py.max(LOG_CLAMP).ln())
            })
            .collect()
    }

    /// Add the gradient of `scale * CE(y, softmax)` for one example to `grad`.
    fn accumulate_gradient(
        &self,
        pre: &[Vec<f64>],
        outputs: &[Vec<f64>],
        label: usize,
        scale: f64,
        grad: &mut [f64],
    ) {
        let depth = self.layer_sizes.len() - 1;
        let mut offsets = Vec::with_capacity(depth);
        let mut o = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(o);
            o += w[0] * w[1] + w[1];
        }
        let probs = &outputs[depth];
        let mut delta: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(k, &p)| scale * (p - if k == label { 1.0 } else { 0.0 }))
            .collect();
        for l in (0..depth).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let input = &outputs[l];
            for j in 0..n_out {
                let row = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += delta[j] * a;
                }
                grad[off + n_in * n_out + j] += delta[j];
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = (0..n_out).map(|j| weights[j * n_in + i] * delta[j]).sum();
                        back * self.activation.derivative(pre[l - 1][i], outputs[l][i])
                    })
                    .collect();
            }
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// A mini-batch of examples with their loss weights.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub ids: Vec<ExampleId>,
    pub features: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
}

impl<'a> Batch<'a> {
    pub fn new(
        ids: Vec<ExampleId>,
        features: Vec<&'a [f64]>,
        labels: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let b = Batch { ids, features, labels, weights };
        b.validate()?;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn validate(&self) -> Result<(), ModelError> {
        let n = self.ids.len();
        if n == 0 {
            return Err(ModelError::Batch("empty batch".into()));
        }
        if self.features.len() != n || self.labels.len() != n || self.weights.len() != n {
            return Err(ModelError::Batch("ids, features, labels and weights differ in length".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(ModelError::Batch(format!("weight {w} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Result of one weighted forward/backward pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub gradients: Gradients,
    /// Full predicted distribution per batch member, from the same forward pass.
    pub probabilities: Vec<Vec<f64>>,
}

impl BatchLoss {
    /// Probability of the assigned label and whether it is the argmax, per member.
    pub fn observations(&self, labels: &[usize]) -> Vec<Observation> {
        self.probabilities
            .iter()
            .zip(labels)
            .map(|(p, &y)| Observation { prob: p[y], correct: argmax(p) == y })
            .collect()
    }
}

/// `loss = (1/|B|) * sum_i w_i * -ln p(y_i | x_i)`, with gradients by
/// backpropagation. Members with zero weight add nothing to either.
///
/// The gradient is that of the unclamped cross-entropy; the clamp only
/// keeps the reported loss finite.
pub fn weighted_ce_loss(state: &ClassifierState, batch: &Batch<'_>) -> Result<BatchLoss, ModelError> {
    batch.validate()?;
    let k = state.num_classes();
    let inv_n = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; state.params.len()];
    let mut loss = 0.0;
    let mut probabilities = Vec::with_capacity(batch.len());
    for ((x, &y), &w) in batch.features.iter().zip(&batch.labels).zip(&batch.weights) {
        if y >= k {
            return Err(ModelError::Label { label: y, num_classes: k });
        }
        state.check_input(x)?;
        let (pre, outputs) = state.forward_trace(x);
        if w > 0.0 {
            let p = outputs.last().expect("output layer")[y];
            loss += w * -p.max(LOG_CLAMP).ln();
            state.accumulate_gradient(&pre, &outputs, y, w * inv_n, &mut grad);
        }
        probabilities.push(outputs.last().cloned().expect("output layer"));
    }
    Ok(BatchLoss { loss: loss * inv_n, gradients: Gradients(grad), probabilities })
}

/// Outcome of one pass over a list of batches.
#[derive(Debug, Clone, Default)]
pub struct EpochOutcome {
    /// Mean of the per-batch losses.
    pub mean_loss: f64,
    /// For each example seen, `p(y|x)` from the forward pass that produced
    /// its batch loss, i.e. before that batch's parameter update.
    pub observations: BTreeMap<ExampleId, Observation>,
}

/// One pass over `batches` in the given order, stepping after each batch.
pub fn train_epoch(
    state: &mut ClassifierState,
    optimizer: &mut OptimizerState,
    batches: &[Batch<'_>],
) -> Result<EpochOutcome, ModelError> {
    let mut outcome = EpochOutcome::default();
    let mut total = 0.0;
    for batch in batches {
        let out = weighted_ce_loss(state, batch)?;
        total += out.loss;
        for (id, obs) in batch.ids.iter().zip(out.observations(&batch.labels)) {
            outcome.observations.insert(*id, obs);
        }
        optimizer.step(state, &out.gradients)?;
    }
    if !batches.is_empty() {
        outcome.mean_loss = total / batches.len() as f64;
    }
    Ok(outcome)
}
