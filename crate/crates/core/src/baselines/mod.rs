//! Reference methods sharing the co-training plumbing.
//!
//! All of them draw splits, initializations and batch orders from the same
//! named seeds as [`run_wct`], so runs with the same [`RunConfig`] are paired.
//! A human-only baseline is `run_ds_baseline` on the human subset relabeled
//! as auto.

mod coteaching;

pub use coteaching::{keep_count, run_coteaching, small_loss_selection, CoTeachingConfig, CoTeachingTrace, KeepSchedule, TraceEntry};

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::cartography::{self, DynamicsMap};
use crate::cotrain::{
    run_weighted, run_wct, step3_finetune, Exchange, HumanSplits, RunConfig, RunOutcome, Variant,
};
use crate::dataset::{Dataset, ExampleId};
use crate::error::{Error, Result};
use crate::model::{self, Batch, ClassifierState, OptimizerState};
use crate::rng::{self, derive_seed};
use crate::training::{self, EpochLog};
use crate::weighting::{WeightRule, WeightSet, WeightTable};

use rand::Rng as _;

/// Every trainable method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ds,
    SimpleFt,
    WstEnsembled,
    WstR,
    CoTeaching,
    Wct(Variant),
}

impl Method {
    pub const NAMES: [&'static str; 9] = [
        "ds",
        "simple-ft",
        "wst-ensembled",
        "wst-r",
        "coteaching",
        "wct-cv",
        "wct-cc",
        "wct-cvh",
        "wct-both",
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ds => "ds",
            Method::SimpleFt => "simple-ft",
            Method::WstEnsembled => "wst-ensembled",
            Method::WstR => "wst-r",
            Method::CoTeaching => "coteaching",
            Method::Wct(Variant::WctCv) => "wct-cv",
            Method::Wct(Variant::WctCc) => "wct-cc",
            Method::Wct(Variant::WctCvh) => "wct-cvh",
            Method::Wct(Variant::WctBoth2k) => "wct-both",
        }
    }

    /// Whether the method maintains a weight table.
    pub fn is_weighted(self) -> bool {
        matches!(self, Method::WstEnsembled | Method::WstR | Method::Wct(_))
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ds" => Method::Ds,
            "simple-ft" => Method::SimpleFt,
            "wst-ensembled" => Method::WstEnsembled,
            "wst-r" => Method::WstR,
            "coteaching" => Method::CoTeaching,
            "wct-cv" => Method::Wct(Variant::WctCv),
            "wct-cc" => Method::Wct(Variant::WctCc),
            "wct-cvh" => Method::Wct(Variant::WctCvh),
            "wct-both" => Method::Wct(Variant::WctBoth2k),
            other => return Err(format!("unknown method `{other}`; expected one of {}", Method::NAMES.join(", "))),
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn run_method(method: Method, d: &Dataset, cfg: &RunConfig, ct: &CoTeachingConfig) -> Result<RunOutcome> {
    match method {
        Method::Ds => run_ds_baseline(d, cfg),
        Method::SimpleFt => run_simple_ft(d, cfg),
        Method::WstEnsembled => run_wst_ensembled(d, cfg),
        Method::WstR => run_wst_r(d, cfg),
        Method::CoTeaching => run_coteaching(d, cfg, ct, None),
        Method::Wct(variant) => run_wct(d, &RunConfig { variant, ..cfg.clone() }),
    }
}

fn human_splits_or_empty(d: &Dataset, cfg: &RunConfig) -> Result<HumanSplits> {
    if d.human_ids().len() >= 2 {
        HumanSplits::new(d, cfg.dev_fraction, cfg.seeds.split, false)
    } else {
        Ok(HumanSplits { parts: Default::default() })
    }
}

/// One classifier trained directly on the auto labels, early stopping on
/// the union of the two human dev parts.
pub fn run_ds_baseline(d: &Dataset, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let auto = d.auto_ids();
    if auto.is_empty() {
        return Err(Error::Config("auto set is empty".into()));
    }
    let splits = human_splits_or_empty(d, cfg)?;
    let init = ClassifierState::init(&cfg.layer_sizes(d), cfg.activation, derive_seed(cfg.seeds.init1, "step2"))?;
    let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, "step2"));
    let opts = cfg.fit_options(cfg.ds_epochs, cfg.learning_rate);
    let fitted = training::fit(init, d, &auto, &splits.all_dev(), &opts, "ds", &mut rng, |_, _| Ok(()))?;
    Ok(RunOutcome {
        classifiers: vec![fitted.state.clone()],
        table: None,
        dynamics: Vec::new(),
        log: fitted.log,
        checkpoints: vec![("ds".into(), vec![fitted.state])],
        splits,
    })
}

/// Two classifiers trained unweighted on the auto set, then fine-tuned on
/// the human halves and ensembled.
pub fn run_simple_ft(d: &Dataset, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let auto = d.auto_ids();
    if auto.is_empty() || d.human_ids().len() < 2 {
        return Err(Error::Config("need a non-empty auto set and at least two human examples".into()));
    }
    let splits = HumanSplits::new(d, cfg.dev_fraction, cfg.seeds.split, false)?;
    let sizes = cfg.layer_sizes(d);
    let opts = cfg.fit_options(cfg.cotrain_epochs, cfg.learning_rate);
    let mut states = Vec::with_capacity(2);
    let mut log = Vec::new();
    for (c, seed) in [cfg.seeds.init1, cfg.seeds.init2].into_iter().enumerate() {
        let init = ClassifierState::init(&sizes, cfg.activation, derive_seed(seed, "step2"))?;
        let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, "step2"));
        let fitted = training::fit(init, d, &auto, &BTreeSet::new(), &opts, "auto", &mut rng, |_, _| Ok(()))?;
        log.extend(fitted.log.into_iter().map(|mut e| {
            e.phase = format!("auto/{}", c + 1);
            e
        }));
        states.push(fitted.state);
    }
    let auto_states: [ClassifierState; 2] = states.try_into().expect("two classifiers");
    let mut checkpoints = vec![("auto".to_string(), auto_states.to_vec())];
    let (states, ft_log) = step3_finetune(auto_states, d, cfg, &splits)?;
    log.extend(ft_log);
    checkpoints.push(("finetune".to_string(), states.to_vec()));
    Ok(RunOutcome { classifiers: states.to_vec(), table: None, dynamics: Vec::new(), log, checkpoints, splits })
}

/// The co-training pipeline with each classifier reading its own weights.
pub fn run_wst_ensembled(d: &Dataset, cfg: &RunConfig) -> Result<RunOutcome> {
    run_weighted(d, cfg, Exchange::Own)
}

/// One fair coin per id: true selects `c + v`, false `c - v`.
pub fn coin_flips(ids: impl IntoIterator<Item = ExampleId>, seed: u64) -> BTreeMap<ExampleId, bool> {
    let mut rng = rng::seeded(seed);
    ids.into_iter().map(|id| (id, rng.random_bool(0.5))).collect()
}

/// Single-classifier weighted self-training where a seeded per-example coin
/// fixes which of `c + v` and `c - v` the example is weighted by.
///
/// The classifier is trained on the whole human set (minus its dev part) in
/// the first and last step.
pub fn run_wst_r(d: &Dataset, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let auto = d.auto_ids();
    if auto.is_empty() || d.human_ids().len() < 2 {
        return Err(Error::Config("need a non-empty auto set and at least two human examples".into()));
    }
    let splits = HumanSplits::new(d, cfg.dev_fraction, cfg.seeds.split, true)?;
    let part = &splits.parts[0];
    let sizes = cfg.layer_sizes(d);
    let ids: Vec<ExampleId> = auto.iter().copied().collect();
    let mut log = Vec::new();

    // Initial dynamics.
    let init = ClassifierState::init(&sizes, cfg.activation, cfg.seeds.init1)?;
    let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, "step1-0"));
    let mut step1_map = DynamicsMap::new();
    let opts = cfg.fit_options(cfg.step1_epochs, cfg.learning_rate);
    let fitted = training::fit(init, d, &part.train, &part.dev, &opts, "step1", &mut rng, |_, s| {
        for (id, obs) in cartography::observe(s, d, &auto)? {
            cartography::record(&mut step1_map, id, obs)?;
        }
        Ok(())
    })?;
    log.extend(fitted.log);
    let mut checkpoints = vec![("step1".to_string(), vec![fitted.state])];

    let stats = stats_of(&step1_map, &ids)?;
    let rule = WeightRule::Coin(coin_flips(ids.iter().copied(), cfg.seeds.coin));
    let mut table = WeightTable::from_stats(rule, cfg.normalization, &ids, &stats, &stats)?;

    // Weighted training on the auto set.
    let mut dynamics = DynamicsMap::new();
    for (id, r) in &step1_map {
        let last = r.last().expect("step 1 recorded every auto example");
        cartography::record(&mut dynamics, *id, last)?;
    }
    let mut state = ClassifierState::init(&sizes, cfg.activation, derive_seed(cfg.seeds.init1, "step2"))?;
    let mut optimizer = OptimizerState::new(cfg.optimizer, cfg.learning_rate)?;
    let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, "step2"));
    for epoch in 1..=cfg.cotrain_epochs {
        let order = training::shuffled(&auto, &mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let weights = chunk.iter().map(|id| table.read(WeightSet::First, 0, *id)).collect::<Result<Vec<_>, _>>()?;
            let (features, labels): (Vec<&[f64]>, Vec<usize>) = chunk
                .iter()
                .map(|id| {
                    let e = d.get(*id).expect("auto ids come from the dataset");
                    (e.features.as_slice(), e.assigned_label)
                })
                .unzip();
            let batch = Batch::new(chunk.to_vec(), features, labels, weights)?;
            let out = model::weighted_ce_loss(&state, &batch)?;
            for (id, obs) in chunk.iter().zip(out.observations(&batch.labels)) {
                cartography::record(&mut dynamics, *id, obs)?;
            }
            let stats = stats_of(&dynamics, chunk)?;
            table.update_weights(chunk, &stats, &stats)?;
            optimizer.step(&mut state, &out.gradients)?;
            loss_sum += out.loss;
            n_batches += 1;
        }
        table.end_epoch();
        let dev_macro_f1 = if part.dev.is_empty() {
            Vec::new()
        } else {
            vec![training::evaluate(&state, d, &part.dev)?.macro_f1]
        };
        log.push(EpochLog {
            phase: "step2".into(),
            epoch,
            train_loss: vec![loss_sum / n_batches.max(1) as f64],
            dev_macro_f1,
        });
    }
    checkpoints.push(("step2".to_string(), vec![state.clone()]));

    let state = if cfg.finetune_learning_rate > 0.0 {
        let opts = cfg.fit_options(cfg.finetune_epochs, cfg.finetune_learning_rate);
        let mut rng = rng::seeded(derive_seed(cfg.seeds.shuffle, "step3-0"));
        let fitted = training::fit(state, d, &part.train, &part.dev, &opts, "step3", &mut rng, |_, _| Ok(()))?;
        log.extend(fitted.log);
        fitted.state
    } else {
        state
    };
    checkpoints.push(("step3".to_string(), vec![state.clone()]));

    Ok(RunOutcome {
        classifiers: vec![state],
        table: Some(table),
        dynamics: vec![dynamics],
        log,
        checkpoints,
        splits,
    })
}

fn stats_of(map: &DynamicsMap, ids: &[ExampleId]) -> Result<Vec<cartography::CartographyStats>> {
    ids.iter()
        .map(|id| {
            map.get(id)
                .ok_or_else(|| Error::Config(format!("no dynamics recorded for example {id}")))?
                .stats()
                .map_err(Error::from)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cotrain::Seeds;
    use crate::dataset::{carve_human_set, generate_synthetic, inject_noise, NoiseSpec};

    fn data(seed: u64) -> Dataset {
        let d = generate_synthetic(3, 40, 4, 2.5, seed).unwrap();
        let d = carve_human_set(&d, 8, seed).unwrap();
        inject_noise(&d, &NoiseSpec::symmetric(0.2, seed)).unwrap()
    }

    fn cfg() -> RunConfig {
        RunConfig {
            hidden: vec![8],
            batch_size: 16,
            step1_epochs: 3,
            cotrain_epochs: 2,
            finetune_epochs: 2,
            ds_epochs: 3,
            learning_rate: 1e-2,
            finetune_learning_rate: 1e-3,
            seeds: Seeds::from_base(9),
            ..RunConfig::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for name in Method::NAMES {
            assert_eq!(name.parse::<Method>().unwrap().name(), name);
        }
        assert!("wct".parse::<Method>().is_err());
        assert!(!Method::Ds.is_weighted());
        assert!(Method::Wct(Variant::WctCc).is_weighted());
    }

    #[test]
    fn every_method_is_deterministic() {
        let d = data(1);
        let ct = CoTeachingConfig { epochs: 2, ..CoTeachingConfig::default() };
        for name in Method::NAMES {
            let m: Method = name.parse().unwrap();
            let a = run_method(m, &d, &cfg(), &ct).unwrap();
            let b = run_method(m, &d, &cfg(), &ct).unwrap();
            assert_eq!(a.classifiers, b.classifiers, "{name}");
            assert_eq!(a.log, b.log, "{name}");
            assert_eq!(a.table.is_some(), m.is_weighted(), "{name}");
        }
    }

    #[test]
    fn simple_ft_needs_human_set() {
        let d = data(2);
        let auto_only = d.subset(&d.auto_ids());
        assert!(matches!(run_simple_ft(&auto_only, &cfg()), Err(Error::Config(_))));
        assert!(run_ds_baseline(&auto_only, &cfg()).is_ok());
        let human_only = d.subset(&d.human_ids());
        assert!(matches!(run_ds_baseline(&human_only, &cfg()), Err(Error::Config(_))));
    }

    #[test]
    fn simple_ft_zero_rate_is_plain_auto_ensemble() {
        let d = data(3);
        let c = RunConfig { finetune_learning_rate: 0.0, ..cfg() };
        let out = run_simple_ft(&d, &c).unwrap();
        assert_eq!(out.checkpoints[0].1, out.classifiers);
    }

    #[test]
    fn wst_ensembled_reads_only_own_weights() {
        let d = data(4);
        let c = cfg();
        let splits = HumanSplits::new(&d, c.dev_fraction, c.seeds.split, false).unwrap();
        let s1 = crate::cotrain::step1_initial_weights(&d, &c, &splits).unwrap();
        let out = crate::cotrain::step2_with(&d, &c, s1.table, &s1.last, &splits, Exchange::Own, None).unwrap();
        let reads = out.table.read_counts();
        assert_eq!(reads[0][1], 0);
        assert_eq!(reads[1][0], 0);
        assert!(reads[0][0] > 0 && reads[1][1] > 0);
    }

    #[test]
    fn coins_are_seeded() {
        let a = coin_flips(0..100, 3);
        assert_eq!(a, coin_flips(0..100, 3));
        assert_ne!(a, coin_flips(0..100, 4));
    }
}
