//! Shared training plumbing: batch assembly, supervised fitting with early
//! stopping on dev macro F1, evaluation, and the per-epoch metrics log.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ExampleId};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::model::{self, Batch, ClassifierState, OptimizerKind, OptimizerState};
use crate::rng::Rng;

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: String,
    pub epoch: usize,
    /// Mean batch loss per classifier.
    pub train_loss: Vec<f64>,
    /// Dev macro F1 per classifier (empty when there is no dev set).
    pub dev_macro_f1: Vec<f64>,
}

pub fn write_log<W: Write>(log: &[EpochLog], mut w: W) -> Result<()> {
    for entry in log {
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Ids in a fresh random order.
pub fn shuffled(ids: &BTreeSet<ExampleId>, rng: &mut Rng) -> Vec<ExampleId> {
    let mut order: Vec<ExampleId> = ids.iter().copied().collect();
    order.shuffle(rng);
    order
}

/// Chunk `order` into batches of `batch_size`, weighting each member with `weight`.
pub fn make_batches<'a>(
    d: &'a Dataset,
    order: &[ExampleId],
    batch_size: usize,
    mut weight: impl FnMut(ExampleId) -> Result<f64>,
) -> Result<Vec<Batch<'a>>> {
    let mut batches = Vec::with_capacity(order.len().div_ceil(batch_size.max(1)));
    for chunk in order.chunks(batch_size.max(1)) {
        let mut features = Vec::with_capacity(chunk.len());
        let mut labels = Vec::with_capacity(chunk.len());
        let mut weights = Vec::with_capacity(chunk.len());
        for &id in chunk {
            let e = d
                .get(id)
                .ok_or_else(|| Error::Config(format!("example {id} is not in the dataset")))?;
            features.push(e.features.as_slice());
            labels.push(e.assigned_label);
            weights.push(weight(id)?);
        }
        batches.push(Batch::new(chunk.to_vec(), features, labels, weights)?);
    }
    Ok(batches)
}

/// Anything that maps features to a class distribution.
pub trait Predict {
    fn distribution(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn label(&self, x: &[f64]) -> Result<usize> {
        Ok(model::argmax(&self.distribution(x)?))
    }
}

impl Predict for ClassifierState {
    fn distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_proba(x)?)
    }
}

/// Score a predictor on the given examples against their assigned labels.
pub fn evaluate<'a>(
    p: &impl Predict,
    d: &'a Dataset,
    ids: impl IntoIterator<Item = &'a ExampleId>,
) -> Result<MetricsReport> {
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for e in d.select(ids) {
        preds.push(p.label(&e.features)?);
        golds.push(e.assigned_label);
    }
    Ok(MetricsReport::from_predictions(&preds, &golds, d.num_classes())?)
}

/// Score on every example of `d`.
pub fn evaluate_all(p: &impl Predict, d: &Dataset) -> Result<MetricsReport> {
    let ids: Vec<ExampleId> = d.examples().iter().map(|e| e.id).collect();
    evaluate(p, d, &ids)
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// `None` disables early stopping.
    pub patience: Option<usize>,
}

/// Tracks the best dev score seen and decides when to stop.
///
/// An epoch improves only if its score is strictly above the best so far.
/// Training stops once `patience` consecutive epochs fail to improve
/// (with patience 0, the first non-improving epoch stops it).
#[derive(Debug, Clone)]
pub struct EarlyStopping<T = ClassifierState> {
    patience: Option<usize>,
    best_score: f64,
    best_state: T,
    wait: usize,
}

impl<T: Clone> EarlyStopping<T> {
    pub fn new(patience: Option<usize>, initial_score: f64, initial: &T) -> Self {
        EarlyStopping { patience, best_score: initial_score, best_state: initial.clone(), wait: 0 }
    }

    /// Record an epoch's score; returns true when training should stop.
    pub fn observe(&mut self, score: f64, state: &T) -> bool {
        if score > self.best_score {
            self.best_score = score;
            self.best_state = state.clone();
            self.wait = 0;
            false
        } else {
            self.wait += 1;
            self.patience.is_some_and(|p| self.wait >= p)
        }
    }

    pub fn best_score(&self) -> f64 {
        self.best_score
    }

    pub fn into_best(self) -> T {
        self.best_state
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub state: ClassifierState,
    pub epochs_run: usize,
    pub log: Vec<EpochLog>,
}

/// Unweighted supervised training on `train` with early stopping on the
/// macro F1 of `dev`. With an empty dev set or `patience: None` it runs all
/// epochs and returns the final state; otherwise the best dev state.
///
/// `on_epoch` sees the state at the end of every epoch, before any restore.
pub fn fit(
    mut state: ClassifierState,
    d: &Dataset,
    train: &BTreeSet<ExampleId>,
    dev: &BTreeSet<ExampleId>,
    opts: &FitOptions,
    phase: &str,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(usize, &ClassifierState) -> Result<()>,
) -> Result<FitOutcome> {
    if train.is_empty() {
        return Err(Error::Config(format!("{phase}: empty training set")));
    }
    let mut optimizer = OptimizerState::new(opts.optimizer, opts.learning_rate)?;
    let use_dev = !dev.is_empty() && opts.patience.is_some();
    let initial = if use_dev { evaluate(&state, d, dev)?.macro_f1 } else { 0.0 };
    let mut stopper = EarlyStopping::new(opts.patience, initial, &state);
    let mut log = Vec::new();
    let mut epochs_run = 0;
    for epoch in 1..=opts.epochs {
        let order = shuffled(train, rng);
        let batches = make_batches(d, &order, opts.batch_size, |_| Ok(1.0))?;
        let out = model::train_epoch(&mut state, &mut optimizer, &batches)?;
        epochs_run = epoch;
        on_epoch(epoch, &state)?;
        let dev_f1 = if dev.is_empty() { None } else { Some(evaluate(&state, d, dev)?.macro_f1) };
        log.push(EpochLog {
            phase: phase.to_string(),
            epoch,
            train_loss: vec![out.mean_loss],
            dev_macro_f1: dev_f1.into_iter().collect(),
        });
        if use_dev && stopper.observe(dev_f1.expect("dev set present"), &state) {
            break;
        }
    }
    let state = if use_dev { stopper.into_best() } else { state };
    Ok(FitOutcome { state, epochs_run, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;

    #[test]
    fn patience_semantics() {
        let s = ClassifierState::zeros(&[1, 2], Activation::Relu).unwrap();
        let mut zero = EarlyStopping::new(Some(0), 0.5, &s);
        assert!(zero.observe(0.4, &s));

        let mut two = EarlyStopping::new(Some(2), 0.5, &s);
        assert!(!two.observe(0.6, &s));
        assert!(!two.observe(0.6, &s));
        assert!(two.observe(0.55, &s));

        let mut never = EarlyStopping::new(None, 0.5, &s);
        for _ in 0..10 {
            assert!(!never.observe(0.1, &s));
        }
    }

    #[test]
    fn batches_cover_order() {
        let d = crate::dataset::generate_synthetic(2, 5, 2, 1.0, 0).unwrap();
        let order: Vec<u64> = (0..10).rev().collect();
        let b = make_batches(&d, &order, 4, |_| Ok(0.5)).unwrap();
        assert_eq!(b.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_eq!(b[0].ids, vec![9, 8, 7, 6]);
        assert!(make_batches(&d, &[99], 4, |_| Ok(1.0)).is_err());
    }
}
