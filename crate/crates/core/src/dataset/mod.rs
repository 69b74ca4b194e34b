//! Classification examples, the human/auto partition, and the tools that
//! build and perturb datasets: file ingestion, synthetic Gaussian clusters,
//! symmetric label noise, and class-balanced carving of a clean human set.

mod io;
mod synth;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, Format};
pub use synth::{generate_synthetic, holdout_split};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub type ExampleId = u64;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} features, found {found}")]
    Schema { line: usize, expected: usize, found: usize },
    #[error("example {id}: label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { id: ExampleId, label: usize, num_classes: usize },
    #[error("duplicate example id {0}")]
    DuplicateId(ExampleId),
    #[error("class {class} has only {available} clean auto examples, {requested} requested")]
    Capacity { class: usize, available: usize, requested: usize },
    #[error("cannot split {0} ids into two halves")]
    Split(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Auto,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Human => "human",
            Provenance::Auto => "auto",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Provenance::Human),
            "auto" => Ok(Provenance::Auto),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

/// One classification instance.
///
/// `gold_label` is bookkeeping for injected noise and evaluation. Training
/// code reads `assigned_label` only.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: ExampleId,
    pub features: Vec<f64>,
    pub assigned_label: usize,
    pub provenance: Provenance,
    pub gold_label: Option<usize>,
}

impl Example {
    /// True when the assigned label is known to differ from the gold label.
    pub fn is_corrupted(&self) -> bool {
        self.gold_label.is_some_and(|g| g != self.assigned_label)
    }
}

/// An ordered collection of examples over `num_classes` labels, split into
/// the human-labeled set and the automatically labeled set by provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    num_classes: usize,
    index: BTreeMap<ExampleId, usize>,
}

impl Dataset {
    /// Validates feature width, label range and id uniqueness.
    pub fn new(examples: Vec<Example>, num_classes: usize) -> Result<Self, DatasetError> {
        if num_classes == 0 {
            return Err(DatasetError::InvalidParameter("num_classes must be positive".into()));
        }
        let dim = examples.first().map(|e| e.features.len());
        let mut index = BTreeMap::new();
        for (pos, ex) in examples.iter().enumerate() {
            if Some(ex.features.len()) != dim {
                return Err(DatasetError::Schema {
                    line: pos + 1,
                    expected: dim.unwrap_or(0),
                    found: ex.features.len(),
                });
            }
            for label in std::iter::once(ex.assigned_label).chain(ex.gold_label) {
                if label >= num_classes {
                    return Err(DatasetError::LabelOutOfRange { id: ex.id, label, num_classes });
                }
            }
            if index.insert(ex.id, pos).is_some() {
                return Err(DatasetError::DuplicateId(ex.id));
            }
        }
        let d = Dataset { examples, num_classes, index };
        let (n, m) = (d.human_ids().len(), d.auto_ids().len());
        if n > m {
            log::warn!("human set ({n}) is larger than auto set ({m})");
        }
        Ok(d)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.examples.first().map_or(0, |e| e.features.len())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: ExampleId) -> Option<&Example> {
        self.index.get(&id).map(|&i| &self.examples[i])
    }

    pub fn contains(&self, id: ExampleId) -> bool {
        self.index.contains_key(&id)
    }

    fn ids_with(&self, provenance: Provenance) -> BTreeSet<ExampleId> {
        self.examples.iter().filter(|e| e.provenance == provenance).map(|e| e.id).collect()
    }

    /// D^l
    pub fn human_ids(&self) -> BTreeSet<ExampleId> {
        self.ids_with(Provenance::Human)
    }

    /// D^a
    pub fn auto_ids(&self) -> BTreeSet<ExampleId> {
        self.ids_with(Provenance::Auto)
    }

    pub fn corrupted_ids(&self) -> BTreeSet<ExampleId> {
        self.examples.iter().filter(|e| e.is_corrupted()).map(|e| e.id).collect()
    }

    /// Examples with the given ids, in id order. Unknown ids are skipped.
    pub fn select<'a>(&'a self, ids: impl IntoIterator<Item = &'a ExampleId>) -> Vec<&'a Example> {
        ids.into_iter().filter_map(|id| self.get(*id)).collect()
    }

    /// A new dataset holding only the given ids (provenance kept).
    pub fn subset(&self, ids: &BTreeSet<ExampleId>) -> Dataset {
        let examples: Vec<Example> =
            self.examples.iter().filter(|e| ids.contains(&e.id)).cloned().collect();
        let index = examples.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        Dataset { examples, num_classes: self.num_classes, index }
    }

    /// Per-class count of examples in the given id set, by assigned label.
    pub fn class_counts(&self, ids: &BTreeSet<ExampleId>) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for e in self.select(ids) {
            counts[e.assigned_label] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    SymmetricUniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub rate: f64,
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn symmetric(rate: f64, seed: u64) -> Self {
        NoiseSpec { rate, kind: NoiseKind::SymmetricUniform, seed }
    }
}

/// Number of examples corrupted for `rate` over a population of `m`
/// (`f64::round` rounds half away from zero).
pub fn corruption_count(rate: f64, m: usize) -> usize {
    (rate * m as f64).round() as usize
}

/// Corrupt exactly `round(rate * |D^a|)` auto labels, each resampled
/// uniformly from the other `K - 1` classes. The pre-corruption label is
/// kept in `gold_label` unless one was already recorded.
pub fn inject_noise(d: &Dataset, spec: &NoiseSpec) -> Result<Dataset, DatasetError> {
    if !(0.0..=1.0).contains(&spec.rate) {
        return Err(DatasetError::InvalidParameter(format!(
            "noise rate {} outside [0, 1]",
            spec.rate
        )));
    }
    let auto: Vec<ExampleId> = d.auto_ids().into_iter().collect();
    let count = corruption_count(spec.rate, auto.len());
    if count > 0 && d.num_classes < 2 {
        return Err(DatasetError::InvalidParameter(
            "label noise needs at least two classes".into(),
        ));
    }
    let mut rng = rng::seeded(spec.seed);
    let chosen: BTreeSet<ExampleId> =
        auto.choose_multiple(&mut rng, count).copied().collect();

    let mut out = d.clone();
    // Iterate in id order so label draws do not depend on sampling order.
    for ex in out.examples.iter_mut().filter(|e| chosen.contains(&e.id)) {
        let original = ex.assigned_label;
        let draw = rand::Rng::random_range(&mut rng, 0..d.num_classes - 1);
        ex.assigned_label = if draw < original { draw } else { draw + 1 };
        ex.gold_label.get_or_insert(original);
    }
    Ok(out)
}

/// Move `per_class` uncorrupted auto examples of every class into the human
/// set. Existing human examples stay where they are.
pub fn carve_human_set(d: &Dataset, per_class: usize, seed: u64) -> Result<Dataset, DatasetError> {
    if per_class == 0 {
        log::warn!("carving an empty human set (per_class = 0)");
        return Ok(d.clone());
    }
    let mut by_class: Vec<Vec<ExampleId>> = vec![Vec::new(); d.num_classes];
    for e in d.examples.iter().filter(|e| e.provenance == Provenance::Auto && !e.is_corrupted()) {
        by_class[e.assigned_label].push(e.id);
    }
    let mut rng = rng::seeded(seed);
    let mut picked = BTreeSet::new();
    for (class, mut pool) in by_class.into_iter().enumerate() {
        if pool.len() < per_class {
            return Err(DatasetError::Capacity {
                class,
                available: pool.len(),
                requested: per_class,
            });
        }
        pool.shuffle(&mut rng);
        picked.extend(pool.into_iter().take(per_class));
    }
    let mut out = d.clone();
    for ex in out.examples.iter_mut().filter(|e| picked.contains(&e.id)) {
        ex.provenance = Provenance::Human;
    }
    Ok(out)
}

/// Random partition into two halves; with an odd count the first half gets
/// the extra element.
pub fn split_halves(
    ids: &BTreeSet<ExampleId>,
    seed: u64,
) -> Result<(BTreeSet<ExampleId>, BTreeSet<ExampleId>), DatasetError> {
    if ids.len() < 2 {
        return Err(DatasetError::Split(ids.len()));
    }
    let mut order: Vec<ExampleId> = ids.iter().copied().collect();
    order.shuffle(&mut rng::seeded(seed));
    let first_len = order.len().div_ceil(2);
    let second = order.split_off(first_len);
    Ok((order.into_iter().collect(), second.into_iter().collect()))
}
