//! Weighted co-training in three steps.
//!
//! 1. Two classifiers are trained on disjoint halves of the human set. After
//!    every epoch each one's `p(y|x)` on every auto example is recorded, and
//!    the resulting confidences and variabilities give the initial weights.
//! 2. Both classifiers are re-initialized and trained on the auto set. For
//!    each mini-batch, classifier 1's loss is scaled by the second weight set
//!    and classifier 2's by the first. After the losses are computed the
//!    dynamics and raw weights of the batch members are updated, then both
//!    parameter vectors step.
//! 3. Each classifier is fine-tuned on its human half at a lower learning
//!    rate, with early stopping on dev macro F1.
//!
//! Prediction averages the two softmax outputs.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::cartography::{self, CartographyStats, DynamicsMap, Observation};
use crate::dataset::{Dataset, ExampleId};
use crate::error::{Error, Result};
use crate::model::{
    self, Activation, Batch, BatchLoss, ClassifierState, ModelError, OptimizerKind, OptimizerState,
};
use crate::rng::{self, derive_seed};
use crate::training::{self, EpochLog, FitOptions, Predict};
use crate::weighting::{NormalizationSchedule, WeightRule, WeightSet, WeightTable};

/// Named seeds; every random draw in a run comes from one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    /// Human-set halves and dev carving.
    pub split: u64,
    pub init1: u64,
    pub init2: u64,
    /// Batch order.
    pub shuffle: u64,
    /// Per-example coin of random-rule self-training.
    pub coin: u64,
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Seeds {
            split: derive_seed(seed, "split"),
            init1: derive_seed(seed, "init1"),
            init2: derive_seed(seed, "init2"),
            shuffle: derive_seed(seed, "shuffle"),
            coin: derive_seed(seed, "coin"),
        }
    }

    fn init(&self, classifier: usize) -> u64 {
        [self.init1, self.init2][classifier]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Contrasting weights `c + v` / `c - v`.
    WctCv,
    /// Confidence-only weights for both classifiers.
    WctCc,
    /// Contrasting weights, with human examples mixed into the co-training
    /// batches at full weight.
    WctCvh,
    /// Contrasting weights, both classifiers use the whole human set in
    /// steps 1 and 3.
    WctBoth2k,
}

impl Variant {
    pub fn rule(self) -> WeightRule {
        match self {
            Variant::WctCc => WeightRule::ConfidenceOnly,
            _ => WeightRule::Contrast,
        }
    }
}

/// Hyperparameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Step-3 rate; must be below `learning_rate`. Zero skips fine-tuning.
    pub finetune_learning_rate: f64,
    pub batch_size: usize,
    pub step1_epochs: usize,
    /// Step-2 epochs, also the auto-set budget of the other two-model methods.
    pub cotrain_epochs: usize,
    pub finetune_epochs: usize,
    /// Epoch budget of the single-model distant-supervision baseline.
    pub ds_epochs: usize,
    /// `None` disables early stopping.
    pub patience: Option<usize>,
    /// Fraction of each human half held out as its dev set.
    pub dev_fraction: f64,
    pub seeds: Seeds,
    pub variant: Variant,
    pub normalization: NormalizationSchedule,
    /// Re-draw the human halves for step 3 instead of reusing step 1's.
    pub resplit_finetune: bool,
    /// Loss weight of human examples mixed into step 2 (`WctCvh`).
    pub human_weight: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hidden: vec![64],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            finetune_learning_rate: 1e-4,
            batch_size: 64,
            step1_epochs: 10,
            cotrain_epochs: 5,
            finetune_epochs: 10,
            ds_epochs: 10,
            patience: Some(2),
            dev_fraction: 0.15,
            seeds: Seeds::from_base(0),
            variant: Variant::WctCv,
            normalization: NormalizationSchedule::PerEpoch,
            resplit_finetune: false,
            human_weight: 1.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.finetune_learning_rate >= 0.0 && self.finetune_learning_rate < self.learning_rate) {
            return fail(format!(
                "fine-tune rate {} must be in [0, {})",
                self.finetune_learning_rate, self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.dev_fraction >= 0.0 && self.dev_fraction < 1.0) {
            return fail(format!("dev fraction {} outside [0, 1)", self.dev_fraction));
        }
        if !(0.0..=1.0).contains(&self.human_weight) {
            return fail(format!("human weight {} outside [0, 1]", self.human_weight));
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn layer_sizes(&self, d: &Dataset) -> Vec<usize> {
        let mut sizes = vec![d.dim()];
        sizes.extend(&self.hidden);
        sizes.push(d.num_classes());
        sizes
    }

    pub(crate) fn fit_options(&self, epochs: usize, learning_rate: f64) -> FitOptions {
        FitOptions {
            epochs,
            optimizer: self.optimizer,
            learning_rate,
            batch_size: self.batch_size,
            patience: self.patience,
        }
    }
}

/// One classifier's share of the human set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HumanPart {
    pub train: BTreeSet<ExampleId>,
    pub dev: BTreeSet<ExampleId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HumanSplits {
    pub parts: [HumanPart; 2],
}

impl HumanSplits {
    /// Two disjoint halves (or, with `shared`, the whole set for both),
    /// each with `dev_fraction` of its ids held out for early stopping.
    pub fn new(d: &Dataset, dev_fraction: f64, seed: u64, shared: bool) -> Result<Self> {
        let human = d.human_ids();
        if shared {
            if human.is_empty() {
                return Err(Error::Config("human set is empty".into()));
            }
            let part = carve_dev(&human, dev_fraction, derive_seed(seed, "dev"));
            return Ok(HumanSplits { parts: [part.clone(), part] });
        }
        let (a, b) = crate::dataset::split_halves(&human, seed)?;
        Ok(HumanSplits {
            parts: [
                carve_dev(&a, dev_fraction, derive_seed(seed, "dev1")),
                carve_dev(&b, dev_fraction, derive_seed(seed, "dev2")),
            ],
        })
    }

    pub fn all_dev(&self) -> BTreeSet<ExampleId> {
        self.parts[0].dev.union(&self.parts[1].dev).copied().collect()
    }

    pub fn all_train(&self) -> BTreeSet<ExampleId> {
        self.parts[0].train.union(&self.parts[1].train).copied().collect()
    }
}

fn carve_dev(ids: &BTreeSet<ExampleId>, fraction: f64, seed: u64) -> HumanPart {
    let n_dev = ((fraction * ids.len() as f64).round() as usize).min(ids.len().saturating_sub(1));
    let mut order: Vec<ExampleId> = ids.iter().copied().collect();
    order.shuffle(&mut rng::seeded(seed));
    let train = order.split_off(n_dev);
    HumanPart { train: train.into_iter().collect(), dev: order.into_iter().collect() }
}

/// Softmax average of two classifiers; ties in the argmax go to the lower class.
pub fn ensemble_predict(
    a: &ClassifierState,
    b: &ClassifierState,
    x: &[f64],
) -> Result<(usize, Vec<f64>)> {
    if a.num_classes() != b.num_classes() {
        return Err(ModelError::Shape { expected: a.num_classes(), found: b.num_classes() }.into());
    }
    let pa = a.predict_proba(x)?;
    let pb = b.predict_proba(x)?;
    let avg: Vec<f64> = pa.iter().zip(&pb).map(|(p, q)| (p + q) / 2.0).collect();
    Ok((model::argmax(&avg), avg))
}

/// A single classifier or a two-classifier ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Single(ClassifierState),
    Ensemble(ClassifierState, ClassifierState),
}

impl Predict for Predictor {
    fn distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Predictor::Single(s) => s.distribution(x),
            Predictor::Ensemble(a, b) => Ok(ensemble_predict(a, b, x)?.1),
        }
    }
}

/// Which weight set each classifier's loss reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exchange {
    /// Classifier 1 reads the second set, classifier 2 the first.
    Cross,
    /// Each classifier reads the set built from its own dynamics.
    Own,
}

impl Exchange {
    pub fn loss_set(self, classifier: usize) -> WeightSet {
        match (self, classifier) {
            (Exchange::Cross, 0) | (Exchange::Own, 1) => WeightSet::Second,
            _ => WeightSet::First,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step1Output {
    pub table: WeightTable,
    /// Full per-epoch histories over the auto set, per classifier.
    pub dynamics: [DynamicsMap; 2],
    /// Last recorded observation per auto example, per classifier.
    pub last: [BTreeMap<ExampleId, Observation>; 2],
    pub states: [ClassifierState; 2],
    pub log: Vec<EpochLog>,
}

fn stats_for(map: &DynamicsMap, ids: &[ExampleId]) -> Result<Vec<CartographyStats>> {
    ids.iter()
        .map(|id| {
            map.get(id)
                .ok_or_else(|| Error::Config(format!("no dynamics recorded for example {id}")))?
                .stats()
                .map_err(Error::from)
        })
        .collect()
}

/// Step 1: initial weights from classifiers trained on the human halves.
pub fn step1_initial_weights(d: &Dataset, cfg: &RunConfig, splits: &HumanSplits) -> Result<Step1Output> {
    cfg.validate()?;
    let auto = d.auto_ids();
    if auto.is_empty() {
        return Err(Error::Config("auto set is empty; nothing to weight".into()));
    }
    let sizes = cfg.layer_sizes(d);
    let opts = cfg.fit_options(cfg.step1_epochs, cfg.learning_rate);
    let mut dynamics = [DynamicsMap::new(), DynamicsMap::new()];
    let mut states = Vec::with_capacity(2);
    let mut log = Vec::new();
    for (c, part) in splits.parts.iter().enumerate() {
        let init = ClassifierState::init(&sizes, cfg.activation, cfg.seeds.init(c))?;
        let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, &format!("step1-{c}")));
        let map = &mut dynamics[c];
        let fitted = training::fit(init, d, &part.train, &part.dev, &opts, "step1", &mut rng, |_, s| {
            for (id, obs) in cartography::observe(s, d, &auto)? {
                cartography::record(map, id, obs)?;
            }
            Ok(())
        })?;
        log.extend(fitted.log.into_iter().map(|mut e| {
            e.phase = format!("step1/{}", c + 1);
            e
        }));
        states.push(fitted.state);
    }
    let ids: Vec<ExampleId> = auto.iter().copied().collect();
    let table = WeightTable::from_stats(
        cfg.variant.rule(),
        cfg.normalization,
        &ids,
        &stats_for(&dynamics[0], &ids)?,
        &stats_for(&dynamics[1], &ids)?,
    )?;
    let last = [0, 1].map(|c| {
        dynamics[c].iter().filter_map(|(id, r)| Some((*id, r.last()?))).collect()
    });
    let states: [ClassifierState; 2] = states.try_into().expect("two classifiers");
    Ok(Step1Output { table, dynamics, last, states, log })
}

/// What a step-2 observer sees for each mini-batch, before any update.
#[derive(Debug)]
pub struct BatchEvent<'a> {
    pub epoch: usize,
    pub batch_index: usize,
    pub ids: &'a [ExampleId],
    pub states: [&'a ClassifierState; 2],
    pub weights: [&'a [f64]; 2],
    pub losses: [&'a BatchLoss; 2],
}

#[derive(Debug, Clone)]
pub struct Step2Output {
    pub states: [ClassifierState; 2],
    pub table: WeightTable,
    pub dynamics: [DynamicsMap; 2],
    pub log: Vec<EpochLog>,
}

/// Step 2 with cross-scaled losses.
pub fn step2_cotrain(
    d: &Dataset,
    cfg: &RunConfig,
    table: WeightTable,
    init: &[BTreeMap<ExampleId, Observation>; 2],
    splits: &HumanSplits,
) -> Result<Step2Output> {
    step2_with(d, cfg, table, init, splits, Exchange::Cross, None)
}

/// Step 2 with a choice of weight exchange and an optional per-batch observer.
pub fn step2_with(
    d: &Dataset,
    cfg: &RunConfig,
    mut table: WeightTable,
    init: &[BTreeMap<ExampleId, Observation>; 2],
    splits: &HumanSplits,
    exchange: Exchange,
    mut observer: Option<&mut dyn FnMut(&BatchEvent<'_>)>,
) -> Result<Step2Output> {
    cfg.validate()?;
    let auto = d.auto_ids();
    if auto.is_empty() {
        return Err(Error::Config("auto set is empty".into()));
    }
    if !table.covers(auto.iter().copied()) {
        return Err(Error::Config("weight table does not cover the auto set".into()));
    }
    let human: BTreeSet<ExampleId> =
        if cfg.variant == Variant::WctCvh { splits.all_train() } else { BTreeSet::new() };

    // Histories restart from the last step-1 probability.
    let mut dynamics = [DynamicsMap::new(), DynamicsMap::new()];
    for c in 0..2 {
        for id in &auto {
            let obs = init[c]
                .get(id)
                .ok_or_else(|| Error::Config(format!("no initial probability for example {id}")))?;
            cartography::record(&mut dynamics[c], *id, *obs)?;
        }
    }

    let sizes = cfg.layer_sizes(d);
    let mut states = [
        ClassifierState::init(&sizes, cfg.activation, derive_seed(cfg.seeds.init1, "step2"))?,
        ClassifierState::init(&sizes, cfg.activation, derive_seed(cfg.seeds.init2, "step2"))?,
    ];
    let mut optimizers = [
        OptimizerState::new(cfg.optimizer, cfg.learning_rate)?,
        OptimizerState::new(cfg.optimizer, cfg.learning_rate)?,
    ];

    let pool: BTreeSet<ExampleId> = auto.union(&human).copied().collect();
    let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, "step2"));
    let mut log = Vec::new();
    for epoch in 1..=cfg.cotrain_epochs {
        let order = training::shuffled(&pool, &mut rng);
        let mut loss_sums = [0.0; 2];
        let mut n_batches = 0;
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut features = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for id in chunk {
                let e = d.get(*id).expect("pool ids come from the dataset");
                features.push(e.features.as_slice());
                labels.push(e.assigned_label);
            }
            let mut weights = [Vec::with_capacity(chunk.len()), Vec::with_capacity(chunk.len())];
            for (c, w) in weights.iter_mut().enumerate() {
                for id in chunk {
                    w.push(if human.contains(id) {
                        cfg.human_weight
                    } else {
                        table.read(exchange.loss_set(c), c, *id)?
                    });
                }
            }
            let mut outs = Vec::with_capacity(2);
            for c in 0..2 {
                let batch = Batch::new(chunk.to_vec(), features.clone(), labels.clone(), weights[c].clone())?;
                outs.push(model::weighted_ce_loss(&states[c], &batch)?);
            }
            if let Some(obs) = observer.as_mut() {
                obs(&BatchEvent {
                    epoch,
                    batch_index,
                    ids: chunk,
                    states: [&states[0], &states[1]],
                    weights: [&weights[0], &weights[1]],
                    losses: [&outs[0], &outs[1]],
                });
            }

            let mut auto_ids = Vec::with_capacity(chunk.len());
            for (i, id) in chunk.iter().enumerate() {
                if human.contains(id) {
                    continue;
                }
                auto_ids.push(*id);
                for c in 0..2 {
                    let p = &outs[c].probabilities[i];
                    let obs = Observation {
                        prob: p[labels[i]],
                        correct: model::argmax(p) == labels[i],
                    };
                    cartography::record(&mut dynamics[c], *id, obs)?;
                }
            }
            table.update_weights(
                &auto_ids,
                &stats_for(&dynamics[0], &auto_ids)?,
                &stats_for(&dynamics[1], &auto_ids)?,
            )?;

            for c in 0..2 {
                optimizers[c].step(&mut states[c], &outs[c].gradients)?;
                loss_sums[c] += outs[c].loss;
            }
            n_batches += 1;
        }
        table.end_epoch();
        let denom = n_batches.max(1) as f64;
        let mut dev_f1 = Vec::new();
        for c in 0..2 {
            if !splits.parts[c].dev.is_empty() {
                dev_f1.push(training::evaluate(&states[c], d, &splits.parts[c].dev)?.macro_f1);
            }
        }
        log.push(EpochLog {
            phase: "step2".into(),
            epoch,
            train_loss: loss_sums.iter().map(|l| l / denom).collect(),
            dev_macro_f1: dev_f1,
        });
    }
    Ok(Step2Output { states, table, dynamics, log })
}

/// Step 3: fine-tune each classifier on its own human part at the lower rate.
pub fn step3_finetune(
    states: [ClassifierState; 2],
    d: &Dataset,
    cfg: &RunConfig,
    splits: &HumanSplits,
) -> Result<([ClassifierState; 2], Vec<EpochLog>)> {
    cfg.validate()?;
    for part in &splits.parts {
        if part.train.is_empty() {
            return Err(Error::Config("fine-tuning half is empty".into()));
        }
    }
    if cfg.finetune_learning_rate == 0.0 {
        return Ok((states, Vec::new()));
    }
    let opts = cfg.fit_options(cfg.finetune_epochs, cfg.finetune_learning_rate);
    let mut out = Vec::with_capacity(2);
    let mut log = Vec::new();
    for (c, state) in states.into_iter().enumerate() {
        let part = &splits.parts[c];
        let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, &format!("step3-{c}")));
        let fitted = training::fit(state, d, &part.train, &part.dev, &opts, "step3", &mut rng, |_, _| Ok(()))?;
        log.extend(fitted.log.into_iter().map(|mut e| {
            e.phase = format!("step3/{}", c + 1);
            e
        }));
        out.push(fitted.state);
    }
    Ok((out.try_into().expect("two classifiers"), log))
}

/// Everything a training method produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// One classifier, or the two ensemble members.
    pub classifiers: Vec<ClassifierState>,
    pub table: Option<WeightTable>,
    /// Final training dynamics per classifier (empty for unweighted methods).
    pub dynamics: Vec<DynamicsMap>,
    pub log: Vec<EpochLog>,
    /// Classifier states at the end of each phase.
    pub checkpoints: Vec<(String, Vec<ClassifierState>)>,
    pub splits: HumanSplits,
}

pub type CoTrainResult = RunOutcome;

impl RunOutcome {
    pub fn predictor(&self) -> Predictor {
        match self.classifiers.as_slice() {
            [a, b] => Predictor::Ensemble(a.clone(), b.clone()),
            [a] => Predictor::Single(a.clone()),
            _ => unreachable!("methods produce one or two classifiers"),
        }
    }
}

/// The full three-step pipeline with cross-scaled losses.
pub fn run_wct(d: &Dataset, cfg: &RunConfig) -> Result<CoTrainResult> {
    run_weighted(d, cfg, Exchange::Cross)
}

/// Steps 1-3 with the given weight exchange (`Own` gives ensembled
/// weighted self-training).
pub fn run_weighted(d: &Dataset, cfg: &RunConfig, exchange: Exchange) -> Result<RunOutcome> {
    cfg.validate()?;
    if d.human_ids().len() < 2 || d.auto_ids().is_empty() {
        return Err(Error::Config("need at least two human examples and a non-empty auto set".into()));
    }
    let shared = cfg.variant == Variant::WctBoth2k;
    let splits = HumanSplits::new(d, cfg.dev_fraction, cfg.seeds.split, shared)?;
    let step1 = step1_initial_weights(d, cfg, &splits)?;
    let mut log = step1.log.clone();
    let mut checkpoints = vec![("step1".to_string(), step1.states.to_vec())];

    let step2 = step2_with(d, cfg, step1.table, &step1.last, &splits, exchange, None)?;
    log.extend(step2.log);
    checkpoints.push(("step2".to_string(), step2.states.to_vec()));

    let ft_splits = if cfg.resplit_finetune {
        HumanSplits::new(d, cfg.dev_fraction, derive_seed(cfg.seeds.split, "finetune"), shared)?
    } else {
        splits.clone()
    };
    let (states, ft_log) = step3_finetune(step2.states, d, cfg, &ft_splits)?;
    log.extend(ft_log);
    checkpoints.push(("step3".to_string(), states.to_vec()));

    Ok(RunOutcome {
        classifiers: states.to_vec(),
        table: Some(step2.table),
        dynamics: step2.dynamics.to_vec(),
        log,
        checkpoints,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{carve_human_set, generate_synthetic, inject_noise, NoiseSpec};

    pub(crate) fn small_dataset(seed: u64) -> Dataset {
        let d = generate_synthetic(3, 40, 4, 2.5, seed).unwrap();
        let d = carve_human_set(&d, 8, seed).unwrap();
        inject_noise(&d, &NoiseSpec::symmetric(0.2, seed)).unwrap()
    }

    fn quick_cfg() -> RunConfig {
        RunConfig {
            hidden: vec![8],
            batch_size: 16,
            step1_epochs: 3,
            cotrain_epochs: 2,
            finetune_epochs: 2,
            learning_rate: 1e-2,
            finetune_learning_rate: 1e-3,
            seeds: Seeds::from_base(5),
            ..RunConfig::default()
        }
    }

    #[test]
    fn splits_are_disjoint_with_dev() {
        let d = small_dataset(1);
        let s = HumanSplits::new(&d, 0.25, 3, false).unwrap();
        assert_eq!(s.parts[0].train.len() + s.parts[0].dev.len(), 12);
        assert_eq!(s.parts[0].dev.len(), 3);
        assert!(s.all_train().is_disjoint(&s.all_dev()));
        assert!(s.parts[0].train.is_disjoint(&s.parts[1].train));
        let shared = HumanSplits::new(&d, 0.25, 3, true).unwrap();
        assert_eq!(shared.parts[0], shared.parts[1]);
        assert_eq!(shared.parts[0].train.len() + shared.parts[0].dev.len(), 24);
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig { finetune_learning_rate: 1e-3, ..RunConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RunConfig { batch_size: 0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exchange_sets() {
        assert_eq!(Exchange::Cross.loss_set(0), WeightSet::Second);
        assert_eq!(Exchange::Cross.loss_set(1), WeightSet::First);
        assert_eq!(Exchange::Own.loss_set(0), WeightSet::First);
        assert_eq!(Exchange::Own.loss_set(1), WeightSet::Second);
    }

    #[test]
    fn ensemble_examples() {
        let a = ClassifierState::init(&[2, 3], Activation::Relu, 1).unwrap();
        let (label, p) = ensemble_predict(&a, &a, &[0.3, -0.2]).unwrap();
        assert_eq!(p, a.predict_proba(&[0.3, -0.2]).unwrap());
        assert_eq!(label, a.predict(&[0.3, -0.2]).unwrap());

        // Saturated one-hot classifiers: (1,0) and (0,1).
        let big = 1e3;
        let left = ClassifierState::from_params(&[1, 2], Activation::Relu, 0, vec![0.0, 0.0, big, -big]).unwrap();
        let right = ClassifierState::from_params(&[1, 2], Activation::Relu, 0, vec![0.0, 0.0, -big, big]).unwrap();
        let (label, p) = ensemble_predict(&left, &right, &[0.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(label, 0);

        let other = ClassifierState::init(&[2, 4], Activation::Relu, 1).unwrap();
        assert!(ensemble_predict(&a, &other, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn step1_single_epoch_has_zero_variability() {
        let d = small_dataset(2);
        let cfg = RunConfig { step1_epochs: 1, ..quick_cfg() };
        let splits = HumanSplits::new(&d, cfg.dev_fraction, cfg.seeds.split, false).unwrap();
        let out = step1_initial_weights(&d, &cfg, &splits).unwrap();
        for c in 0..2 {
            for r in out.dynamics[c].values() {
                assert_eq!(r.len(), 1);
                assert_eq!(r.variability().unwrap(), 0.0);
            }
        }
        for (id, e) in out.table.entries() {
            assert_eq!(e.raw[0], out.last[0][id].prob);
            assert_eq!(e.raw[1], out.last[1][id].prob);
        }
    }

    #[test]
    fn step1_requires_auto_examples() {
        let d = small_dataset(2);
        let human_only = d.subset(&d.human_ids());
        let cfg = quick_cfg();
        let splits = HumanSplits::new(&human_only, cfg.dev_fraction, 1, false).unwrap();
        assert!(matches!(step1_initial_weights(&human_only, &cfg, &splits), Err(Error::Config(_))));
    }

    #[test]
    fn step3_zero_rate_and_empty_half() {
        let d = small_dataset(3);
        let cfg = RunConfig { finetune_learning_rate: 0.0, ..quick_cfg() };
        let splits = HumanSplits::new(&d, cfg.dev_fraction, 1, false).unwrap();
        let s = [
            ClassifierState::init(&cfg.layer_sizes(&d), Activation::Relu, 1).unwrap(),
            ClassifierState::init(&cfg.layer_sizes(&d), Activation::Relu, 2).unwrap(),
        ];
        let (after, log) = step3_finetune(s.clone(), &d, &cfg, &splits).unwrap();
        assert_eq!(after, s);
        assert!(log.is_empty());

        let mut empty = splits.clone();
        empty.parts[1].train.clear();
        assert!(step3_finetune(s, &d, &quick_cfg(), &empty).is_err());
    }

    #[test]
    fn step3_patience_zero_stops_on_first_bad_epoch() {
        let d = small_dataset(4);
        // A huge fine-tune rate wrecks a good classifier, so dev F1 drops at once.
        let cfg = RunConfig {
            learning_rate: 100.0,
            finetune_learning_rate: 50.0,
            optimizer: OptimizerKind::Sgd,
            patience: Some(0),
            finetune_epochs: 5,
            ..quick_cfg()
        };
        let splits = HumanSplits::new(&d, 0.5, 1, false).unwrap();
        let trained = training::fit(
            ClassifierState::init(&cfg.layer_sizes(&d), Activation::Relu, 1).unwrap(),
            &d,
            &d.human_ids(),
            &BTreeSet::new(),
            &quick_cfg().fit_options(30, 1e-2),
            "pre",
            &mut rng::seeded(0),
            |_, _| Ok(()),
        )
        .unwrap()
        .state;
        let (after, log) = step3_finetune([trained.clone(), trained.clone()], &d, &cfg, &splits).unwrap();
        let first: Vec<_> = log.iter().filter(|e| e.phase == "step3/1").collect();
        assert_eq!(first.len(), 1);
        assert_eq!(after[0], trained);
    }

    #[test]
    fn run_is_deterministic_and_reinitializes() {
        let d = small_dataset(6);
        let cfg = quick_cfg();
        let a = run_wct(&d, &cfg).unwrap();
        let b = run_wct(&d, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.classifiers, b.classifiers);
        assert_eq!(a.table, b.table);
        assert_eq!(a.checkpoints.len(), 3);
        // step-2 start differs from the end of step 1
        let fresh = ClassifierState::init(&cfg.layer_sizes(&d), cfg.activation, derive_seed(cfg.seeds.init1, "step2")).unwrap();
        assert_ne!(fresh.params(), a.checkpoints[0].1[0].params());
        assert_ne!(a.classifiers[0].params(), a.classifiers[1].params());
    }

    #[test]
    fn cc_and_cv_tables_differ() {
        let d = small_dataset(7);
        let cv = run_wct(&d, &quick_cfg()).unwrap();
        let cc = run_wct(&d, &RunConfig { variant: Variant::WctCc, ..quick_cfg() }).unwrap();
        assert_ne!(cv.table, cc.table);
        for e in cc.table.as_ref().unwrap().entries().values() {
            assert!(e.raw[0] >= 0.0 && e.raw[0] <= 1.0);
        }
    }
}
