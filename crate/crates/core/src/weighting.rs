//! Importance weights derived from training dynamics.
//!
//! Two weight sets are kept per example. Under the contrasting rule the
//! first is `confidence + variability` and the second is
//! `confidence - variability`, so easy examples score high in both, hard
//! examples low in both, and high-variability examples high in one and low
//! in the other. Each set is min-max normalized to [0, 1] on its own.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::cartography::CartographyStats;
use crate::dataset::ExampleId;

#[derive(Debug, Error)]
pub enum WeightingError {
    #[error("cannot normalize an empty list")]
    EmptyInput,
    #[error("example {0} has no weight entry")]
    UnknownId(ExampleId),
    #[error("{ids} ids but {stats} statistics")]
    LengthMismatch { ids: usize, stats: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `(c1 + v1, c2 - v2)`, un-normalized.
pub fn raw_weights(c1: f64, v1: f64, c2: f64, v2: f64) -> (f64, f64) {
    (c1 + v1, c2 - v2)
}

fn scale(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((x - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Min-max normalization to [0, 1]. A constant list maps to all ones.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>, WeightingError> {
    let (min, max) = bounds_of(raw.iter().copied()).ok_or(WeightingError::EmptyInput)?;
    Ok(raw.iter().map(|&x| scale(x, min, max)).collect())
}

fn bounds_of(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

/// How raw weights are derived from the two classifiers' statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// First set `c1 + v1`, second set `c2 - v2`.
    Contrast,
    /// Both sets use confidence alone: `c1` and `c2`.
    ConfidenceOnly,
    /// Single-classifier rule: a fixed per-example coin picks `c + v`
    /// (true) or `c - v` (false). Both sets carry the chosen value, computed
    /// from the first classifier's statistics.
    Coin(BTreeMap<ExampleId, bool>),
}

impl WeightRule {
    pub fn raw(&self, id: ExampleId, s1: &CartographyStats, s2: &CartographyStats) -> (f64, f64) {
        match self {
            WeightRule::Contrast => raw_weights(s1.confidence, s1.variability, s2.confidence, s2.variability),
            WeightRule::ConfidenceOnly => (s1.confidence, s2.confidence),
            WeightRule::Coin(coins) => {
                let (plus, minus) = raw_weights(s1.confidence, s1.variability, s1.confidence, s1.variability);
                let w = if coins.get(&id).copied().unwrap_or(true) { plus } else { minus };
                (w, w)
            }
        }
    }
}

/// When normalization bounds are recomputed over the whole table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationSchedule {
    /// Bounds refreshed at epoch boundaries; values updated mid-epoch are
    /// scaled against the frozen bounds and clamped to [0, 1].
    PerEpoch,
    /// Bounds refreshed after every update.
    PerBatch,
}

impl std::str::FromStr for NormalizationSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epoch" => Ok(NormalizationSchedule::PerEpoch),
            "batch" => Ok(NormalizationSchedule::PerBatch),
            other => Err(format!("unknown normalization schedule `{other}`")),
        }
    }
}

/// Which of the two weight sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSet {
    /// λ₁
    First,
    /// λ₂
    Second,
}

impl WeightSet {
    fn index(self) -> usize {
        match self {
            WeightSet::First => 0,
            WeightSet::Second => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEntry {
    pub raw: [f64; 2],
    pub norm: [f64; 2],
}

/// Counts of weight reads, indexed `[reader][set]`, where `reader` is the
/// classifier (0 or 1) whose loss consumed the weight.
#[derive(Debug, Default)]
struct ReadAudit([[AtomicU64; 2]; 2]);

impl ReadAudit {
    fn snapshot(&self) -> [[u64; 2]; 2] {
        let g = |r: usize, s: usize| self.0[r][s].load(Ordering::Relaxed);
        [[g(0, 0), g(0, 1)], [g(1, 0), g(1, 1)]]
    }

    fn from_snapshot(s: [[u64; 2]; 2]) -> Self {
        let a = ReadAudit::default();
        for (r, row) in s.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                a.0[r][k].store(*v, Ordering::Relaxed);
            }
        }
        a
    }
}

#[derive(Debug)]
pub struct WeightTable {
    entries: BTreeMap<ExampleId, WeightEntry>,
    bounds: [(f64, f64); 2],
    rule: WeightRule,
    schedule: NormalizationSchedule,
    frozen: bool,
    audit: ReadAudit,
}

impl Clone for WeightTable {
    fn clone(&self) -> Self {
        WeightTable {
            entries: self.entries.clone(),
            bounds: self.bounds,
            rule: self.rule.clone(),
            schedule: self.schedule,
            frozen: self.frozen,
            audit: ReadAudit::from_snapshot(self.audit.snapshot()),
        }
    }
}

impl PartialEq for WeightTable {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.bounds == other.bounds && self.frozen == other.frozen
    }
}

impl WeightTable {
    /// Build from aligned ids and per-classifier statistics, then normalize.
    pub fn from_stats(
        rule: WeightRule,
        schedule: NormalizationSchedule,
        ids: &[ExampleId],
        stats1: &[CartographyStats],
        stats2: &[CartographyStats],
    ) -> Result<Self, WeightingError> {
        check_aligned(ids, stats1, stats2)?;
        if ids.is_empty() {
            return Err(WeightingError::EmptyInput);
        }
        let mut entries = BTreeMap::new();
        for ((id, s1), s2) in ids.iter().zip(stats1).zip(stats2) {
            let (l1, l2) = rule.raw(*id, s1, s2);
            entries.insert(*id, WeightEntry { raw: [l1, l2], norm: [0.0; 2] });
        }
        let mut table = WeightTable {
            entries,
            bounds: [(0.0, 0.0); 2],
            rule,
            schedule,
            frozen: false,
            audit: ReadAudit::default(),
        };
        table.refresh_bounds();
        Ok(table)
    }

    /// Every example gets `value` in both sets; updates leave it untouched.
    pub fn constant(ids: impl IntoIterator<Item = ExampleId>, value: f64) -> Self {
        let entries = ids
            .into_iter()
            .map(|id| (id, WeightEntry { raw: [value; 2], norm: [value; 2] }))
            .collect();
        WeightTable {
            entries,
            bounds: [(value, value); 2],
            rule: WeightRule::Contrast,
            schedule: NormalizationSchedule::PerEpoch,
            frozen: true,
            audit: ReadAudit::default(),
        }
    }

    pub fn rule(&self) -> &WeightRule {
        &self.rule
    }

    pub fn schedule(&self) -> NormalizationSchedule {
        self.schedule
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<ExampleId, WeightEntry> {
        &self.entries
    }

    pub fn entry(&self, id: ExampleId) -> Option<&WeightEntry> {
        self.entries.get(&id)
    }

    pub fn covers(&self, ids: impl IntoIterator<Item = ExampleId>) -> bool {
        ids.into_iter().all(|id| self.entries.contains_key(&id))
    }

    /// `(min, max)` of the raw values the current normalization uses.
    pub fn bounds(&self, set: WeightSet) -> (f64, f64) {
        self.bounds[set.index()]
    }

    /// Normalized weight of `id` in `set`, recorded as read by classifier `reader`.
    pub fn read(&self, set: WeightSet, reader: usize, id: ExampleId) -> Result<f64, WeightingError> {
        let e = self.entries.get(&id).ok_or(WeightingError::UnknownId(id))?;
        self.audit.0[reader][set.index()].fetch_add(1, Ordering::Relaxed);
        Ok(e.norm[set.index()])
    }

    /// Read counts indexed `[reader][set]`.
    pub fn read_counts(&self) -> [[u64; 2]; 2] {
        self.audit.snapshot()
    }

    /// Recompute raw weights for `ids` from fresh statistics and rescale
    /// them against the current bounds (or fresh bounds under `PerBatch`).
    pub fn update_weights(
        &mut self,
        ids: &[ExampleId],
        stats1: &[CartographyStats],
        stats2: &[CartographyStats],
    ) -> Result<(), WeightingError> {
        check_aligned(ids, stats1, stats2)?;
        if let Some(id) = ids.iter().find(|id| !self.entries.contains_key(id)) {
            return Err(WeightingError::UnknownId(*id));
        }
        if self.frozen {
            return Ok(());
        }
        for ((id, s1), s2) in ids.iter().zip(stats1).zip(stats2) {
            let (l1, l2) = self.rule.raw(*id, s1, s2);
            let e = self.entries.get_mut(id).expect("checked above");
            e.raw = [l1, l2];
            for k in 0..2 {
                e.norm[k] = scale(e.raw[k], self.bounds[k].0, self.bounds[k].1);
            }
        }
        if self.schedule == NormalizationSchedule::PerBatch {
            self.refresh_bounds();
        }
        Ok(())
    }

    /// Epoch boundary: recompute bounds over the whole table.
    pub fn end_epoch(&mut self) {
        if !self.frozen {
            self.refresh_bounds();
        }
    }

    fn refresh_bounds(&mut self) {
        for k in 0..2 {
            let (lo, hi) = bounds_of(self.entries.values().map(|e| e.raw[k])).unwrap_or((0.0, 0.0));
            self.bounds[k] = (lo, hi);
            for e in self.entries.values_mut() {
                e.norm[k] = scale(e.raw[k], lo, hi);
            }
        }
    }

    /// CSV `id,raw_l1,raw_l2,norm_l1,norm_l2`, id order, six decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), WeightingError> {
        writeln!(w, "id,raw_l1,raw_l2,norm_l1,norm_l2")?;
        for (id, e) in &self.entries {
            writeln!(w, "{id},{:.6},{:.6},{:.6},{:.6}", e.raw[0], e.raw[1], e.norm[0], e.norm[1])?;
        }
        Ok(())
    }

    pub fn write_csv_to_path(&self, path: impl AsRef<Path>) -> Result<(), WeightingError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn check_aligned(
    ids: &[ExampleId],
    stats1: &[CartographyStats],
    stats2: &[CartographyStats],
) -> Result<(), WeightingError> {
    if stats1.len() != ids.len() {
        return Err(WeightingError::LengthMismatch { ids: ids.len(), stats: stats1.len() });
    }
    if stats2.len() != ids.len() {
        return Err(WeightingError::LengthMismatch { ids: ids.len(), stats: stats2.len() });
    }
    Ok(())
}
