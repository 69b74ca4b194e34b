//! Co-teaching: each classifier picks the small-loss part of every batch and
//! its peer trains on that selection.

use std::collections::BTreeSet;

use crate::cotrain::{HumanSplits, Predictor, RunConfig, RunOutcome};
use crate::dataset::{Dataset, ExampleId};
use crate::error::{Error, Result};
use crate::model::{self, Batch, ClassifierState, OptimizerState};
use crate::rng::{self, derive_seed};
use crate::training::{self, EarlyStopping, EpochLog};

/// How the keep rate moves from 1 to `1 - noise_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeepSchedule {
    Constant,
    /// Linear decay over this many epochs, measured in fractional batch progress.
    LinearDecay(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoTeachingConfig {
    /// Estimated noise rate, in [0, 1).
    pub noise_rate: f64,
    pub schedule: KeepSchedule,
    pub epochs: usize,
}

impl Default for CoTeachingConfig {
    fn default() -> Self {
        CoTeachingConfig { noise_rate: 0.15, schedule: KeepSchedule::LinearDecay(1.0), epochs: 5 }
    }
}

impl CoTeachingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!("noise rate {} outside [0, 1)", self.noise_rate)));
        }
        if let KeepSchedule::LinearDecay(k) = self.schedule {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::Config(format!("decay length {k} must be positive")));
            }
        }
        Ok(())
    }

    /// Keep rate after `progress` epochs (fractional).
    pub fn keep_rate(&self, progress: f64) -> f64 {
        match self.schedule {
            KeepSchedule::Constant => 1.0 - self.noise_rate,
            KeepSchedule::LinearDecay(k) => 1.0 - self.noise_rate * (progress / k).min(1.0),
        }
    }
}

/// `ceil(rate * n)`, with a small tolerance so that products like `0.85 * 60`
/// that land a hair above an integer do not round up.
pub fn keep_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Positions of the `k` smallest losses, ties broken by id, returned in
/// ascending position order.
pub fn small_loss_selection(ids: &[ExampleId], losses: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(ids[a].cmp(&ids[b])));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Which classifier picked a set of examples and which one trained on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub selector: usize,
    pub trainer: usize,
    pub ids: Vec<ExampleId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoTeachingTrace {
    pub entries: Vec<TraceEntry>,
}

/// Two classifiers trained on the auto set by small-loss exchange, with
/// early stopping on the ensemble's macro F1 over the human dev parts.
pub fn run_coteaching(
    d: &Dataset,
    cfg: &RunConfig,
    ct: &CoTeachingConfig,
    mut trace: Option<&mut CoTeachingTrace>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    ct.validate()?;
    let auto = d.auto_ids();
    if auto.is_empty() {
        return Err(Error::Config("auto set is empty".into()));
    }
    let splits = if d.human_ids().len() >= 2 {
        HumanSplits::new(d, cfg.dev_fraction, cfg.seeds.split, false)?
    } else {
        HumanSplits { parts: Default::default() }
    };
    let dev: BTreeSet<ExampleId> = splits.all_dev();
    let sizes = cfg.layer_sizes(d);
    let mut states = [
        ClassifierState::init(&sizes, cfg.activation, derive_seed(cfg.seeds.init1, "step2"))?,
        ClassifierState::init(&sizes, cfg.activation, derive_seed(cfg.seeds.init2, "step2"))?,
    ];
    let mut optimizers = [
        OptimizerState::new(cfg.optimizer, cfg.learning_rate)?,
        OptimizerState::new(cfg.optimizer, cfg.learning_rate)?,
    ];
    let use_dev = !dev.is_empty() && cfg.patience.is_some();
    let score = |s: &[ClassifierState; 2]| -> Result<f64> {
        let p = Predictor::Ensemble(s[0].clone(), s[1].clone());
        Ok(training::evaluate(&p, d, &dev)?.macro_f1)
    };
    let initial = if use_dev { score(&states)? } else { 0.0 };
    let mut stopper = EarlyStopping::new(cfg.patience, initial, &states);

    let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, "step2"));
    let n_batches = auto.len().div_ceil(cfg.batch_size);
    let mut log = Vec::new();
    for epoch in 1..=ct.epochs {
        let order = training::shuffled(&auto, &mut rng);
        let mut loss_sums = [0.0; 2];
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let progress = (epoch - 1) as f64 + b as f64 / n_batches as f64;
            let k = keep_count(ct.keep_rate(progress), chunk.len());
            let examples: Vec<_> = chunk.iter().map(|id| d.get(*id).expect("auto ids come from the dataset")).collect();
            let features: Vec<&[f64]> = examples.iter().map(|e| e.features.as_slice()).collect();
            let labels: Vec<usize> = examples.iter().map(|e| e.assigned_label).collect();

            let mut selections = Vec::with_capacity(2);
            for state in &states {
                let losses = state.per_example_losses(&features, &labels)?;
                selections.push(small_loss_selection(chunk, &losses, k));
            }
            // Both selections are made before either classifier steps.
            for trainer in 0..2 {
                let selector = 1 - trainer;
                let picked = &selections[selector];
                let ids: Vec<ExampleId> = picked.iter().map(|&i| chunk[i]).collect();
                if let Some(t) = trace.as_deref_mut() {
                    t.entries.push(TraceEntry { selector, trainer, ids: ids.clone() });
                }
                let batch = Batch::new(
                    ids,
                    picked.iter().map(|&i| features[i]).collect(),
                    picked.iter().map(|&i| labels[i]).collect(),
                    vec![1.0; picked.len()],
                )?;
                let out = model::weighted_ce_loss(&states[trainer], &batch)?;
                optimizers[trainer].step(&mut states[trainer], &out.gradients)?;
                loss_sums[trainer] += out.loss;
            }
        }
        let dev_f1 = if dev.is_empty() { None } else { Some(score(&states)?) };
        log.push(EpochLog {
            phase: "coteaching".into(),
            epoch,
            train_loss: loss_sums.iter().map(|l| l / n_batches as f64).collect(),
            dev_macro_f1: dev_f1.into_iter().collect(),
        });
        if use_dev && stopper.observe(dev_f1.expect("dev set present"), &states) {
            break;
        }
    }
    let states = if use_dev { stopper.into_best() } else { states };
    Ok(RunOutcome {
        classifiers: states.to_vec(),
        table: None,
        dynamics: Vec::new(),
        log,
        checkpoints: vec![("coteaching".into(), states.to_vec())],
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_counts() {
        assert_eq!(keep_count(0.85, 64), 55);
        assert_eq!(keep_count(1.0, 64), 64);
        assert_eq!(keep_count(0.85, 60), 51);
        assert_eq!(keep_count(0.5, 3), 2);
        assert_eq!(keep_count(0.0, 3), 0);
    }

    #[test]
    fn schedule() {
        let ct = CoTeachingConfig::default();
        assert_eq!(ct.keep_rate(0.0), 1.0);
        assert!((ct.keep_rate(0.5) - 0.925).abs() < 1e-12);
        assert_eq!(ct.keep_rate(1.0), 0.85);
        assert_eq!(ct.keep_rate(3.0), 0.85);
        let constant = CoTeachingConfig { schedule: KeepSchedule::Constant, ..ct };
        assert_eq!(constant.keep_rate(0.0), 0.85);
        assert!(CoTeachingConfig { noise_rate: 1.0, ..CoTeachingConfig::default() }.validate().is_err());
    }

    #[test]
    fn selection_breaks_ties_by_id() {
        let ids = [5, 3, 9, 1];
        let losses = [0.2, 0.2, 0.1, 0.2];
        assert_eq!(small_loss_selection(&ids, &losses, 2), vec![2, 3]);
        assert_eq!(small_loss_selection(&ids, &losses, 3), vec![1, 2, 3]);
    }

    #[test]
    fn planted_outlier_is_excluded() {
        let ids: Vec<u64> = (0..10).collect();
        let mut losses = vec![0.5; 10];
        losses[4] = 50.0;
        let sel = small_loss_selection(&ids, &losses, 9);
        assert!(!sel.contains(&4));
    }
}
