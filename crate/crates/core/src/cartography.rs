//! Training dynamics per example: the history of `p(y|x)` across recorded
//! steps, and the data-map statistics derived from it.
//!
//! - confidence: mean of the probability history
//! - variability: population standard deviation of the history (divide by e)
//! - correctness: fraction of steps whose argmax prediction was the assigned label
//!
//! Histories are kept in full so statistics can always be recomputed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::dataset::{Dataset, ExampleId};
use crate::model::{ClassifierState, ModelError};

#[derive(Debug, Error)]
pub enum CartographyError {
    #[error("example {0} has an empty history")]
    EmptyHistory(ExampleId),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("example {0} is not in the dataset")]
    UnknownExample(ExampleId),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One recorded step for one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Probability assigned to the example's assigned label.
    pub prob: f64,
    /// Whether the argmax prediction equals the assigned label.
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartographyStats {
    pub confidence: f64,
    pub variability: f64,
    pub correctness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRecord {
    id: ExampleId,
    probs: Vec<f64>,
    correct: Vec<bool>,
}

pub type DynamicsMap = BTreeMap<ExampleId, DynamicsRecord>;

impl DynamicsRecord {
    pub fn new(id: ExampleId) -> Self {
        DynamicsRecord { id, probs: Vec::new(), correct: Vec::new() }
    }

    pub fn from_history(id: ExampleId, history: &[Observation]) -> Result<Self, CartographyError> {
        let mut r = Self::new(id);
        for obs in history {
            r.append(*obs)?;
        }
        Ok(r)
    }

    pub fn id(&self) -> ExampleId {
        self.id
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn correct_history(&self) -> &[bool] {
        &self.correct
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn last(&self) -> Option<Observation> {
        Some(Observation { prob: *self.probs.last()?, correct: *self.correct.last()? })
    }

    pub fn append(&mut self, obs: Observation) -> Result<(), CartographyError> {
        if !(0.0..=1.0).contains(&obs.prob) {
            return Err(CartographyError::ProbabilityOutOfRange(obs.prob));
        }
        self.probs.push(obs.prob);
        self.correct.push(obs.correct);
        Ok(())
    }

    fn non_empty(&self) -> Result<(), CartographyError> {
        if self.probs.is_empty() {
            Err(CartographyError::EmptyHistory(self.id))
        } else {
            Ok(())
        }
    }

    pub fn confidence(&self) -> Result<f64, CartographyError> {
        self.non_empty()?;
        Ok(self.probs.iter().sum::<f64>() / self.probs.len() as f64)
    }

    pub fn variability(&self) -> Result<f64, CartographyError> {
        let c = self.confidence()?;
        let ss: f64 = self.probs.iter().map(|p| (p - c) * (p - c)).sum();
        Ok((ss / self.probs.len() as f64).sqrt())
    }

    pub fn correctness(&self) -> Result<f64, CartographyError> {
        self.non_empty()?;
        Ok(self.correct.iter().filter(|c| **c).count() as f64 / self.correct.len() as f64)
    }

    pub fn stats(&self) -> Result<CartographyStats, CartographyError> {
        Ok(CartographyStats {
            confidence: self.confidence()?,
            variability: self.variability()?,
            correctness: self.correctness()?,
        })
    }
}

/// Append `obs` to the record of `id`, creating it if needed.
pub fn record(map: &mut DynamicsMap, id: ExampleId, obs: Observation) -> Result<(), CartographyError> {
    map.entry(id).or_insert_with(|| DynamicsRecord::new(id)).append(obs)
}

/// Full forward pass of `state` over the given examples of `d`.
pub fn observe<'a>(
    state: &ClassifierState,
    d: &Dataset,
    ids: impl IntoIterator<Item = &'a ExampleId>,
) -> Result<BTreeMap<ExampleId, Observation>, CartographyError> {
    let mut out = BTreeMap::new();
    for id in ids {
        let e = d.get(*id).ok_or(CartographyError::UnknownExample(*id))?;
        let p = state.predict_proba(&e.features)?;
        let obs = Observation {
            prob: p[e.assigned_label],
            correct: crate::model::argmax(&p) == e.assigned_label,
        };
        out.insert(*id, obs);
    }
    Ok(out)
}

pub const MAP_HEADER: &str = "id,confidence,variability,correctness,assigned_label,provenance";

/// Write the data map as CSV, one row per record in id order, six decimals.
pub fn export_map<W: Write>(records: &DynamicsMap, d: &Dataset, mut w: W) -> Result<(), CartographyError> {
    writeln!(w, "{MAP_HEADER}")?;
    for (id, r) in records {
        let e = d.get(*id).ok_or(CartographyError::UnknownExample(*id))?;
        let s = r.stats()?;
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{},{}",
            id,
            s.confidence,
            s.variability,
            s.correctness,
            e.assigned_label,
            e.provenance.as_str()
        )?;
    }
    Ok(())
}

pub fn export_map_to_path(
    records: &DynamicsMap,
    d: &Dataset,
    path: impl AsRef<Path>,
) -> Result<(), CartographyError> {
    let mut w = BufWriter::new(File::create(path)?);
    export_map(records, d, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;
    use proptest::prelude::*;

    fn rec(probs: &[f64]) -> DynamicsRecord {
        let h: Vec<Observation> =
            probs.iter().map(|&p| Observation { prob: p, correct: p > 0.5 }).collect();
        DynamicsRecord::from_history(0, &h).unwrap()
    }

    #[test]
    fn append_keeps_order_and_bounds() {
        let mut r = DynamicsRecord::new(3);
        r.append(Observation { prob: 0.9, correct: true }).unwrap();
        assert_eq!(r.len(), 1);
        r.append(Observation { prob: 0.2, correct: false }).unwrap();
        assert_eq!(r.probabilities(), &[0.9, 0.2]);
        assert_eq!(r.correct_history(), &[true, false]);
        assert!(matches!(
            r.append(Observation { prob: 1.2, correct: true }),
            Err(CartographyError::ProbabilityOutOfRange(_))
        ));
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn confidence_examples() {
        assert!((rec(&[0.9, 0.8, 1.0]).confidence().unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(rec(&[0.4]).confidence().unwrap(), 0.4);
    }

    #[test]
    fn variability_examples() {
        assert_eq!(rec(&[0.5, 0.5, 0.5]).variability().unwrap(), 0.0);
        assert_eq!(rec(&[0.0, 1.0]).variability().unwrap(), 0.5);
    }

    #[test]
    fn correctness_examples() {
        let mk = |c: &[bool]| {
            let h: Vec<_> = c.iter().map(|&c| Observation { prob: 0.5, correct: c }).collect();
            DynamicsRecord::from_history(1, &h).unwrap()
        };
        assert_eq!(mk(&[true, true, false, false]).correctness().unwrap(), 0.5);
        assert_eq!(mk(&[true; 3]).correctness().unwrap(), 1.0);
        assert_eq!(mk(&[false; 3]).correctness().unwrap(), 0.0);
    }

    #[test]
    fn empty_history_errors() {
        let r = DynamicsRecord::new(5);
        assert!(matches!(r.confidence(), Err(CartographyError::EmptyHistory(5))));
        assert!(r.variability().is_err());
        assert!(r.correctness().is_err());
    }

    #[test]
    fn export_layout() {
        let d = generate_synthetic(2, 2, 2, 1.0, 0).unwrap();
        let mut map = DynamicsMap::new();
        let mut out = Vec::new();
        export_map(&map, &d, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{MAP_HEADER}\n"));

        for id in [2u64, 0, 1] {
            record(&mut map, id, Observation { prob: 0.25, correct: false }).unwrap();
            record(&mut map, id, Observation { prob: 0.75, correct: true }).unwrap();
        }
        let mut out = Vec::new();
        export_map(&map, &d, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0.500000,0.250000,0.500000,0,auto");
        assert!(lines[3].starts_with("2,"));

        let mut again = Vec::new();
        export_map(&map, &d, &mut again).unwrap();
        assert_eq!(again, text.into_bytes());
    }

    proptest! {
        #[test]
        fn stats_stay_in_range(probs in prop::collection::vec(0.0f64..=1.0, 1..30)) {
            let s = rec(&probs).stats().unwrap();
            prop_assert!((0.0..=1.0).contains(&s.confidence));
            prop_assert!((0.0..=0.5).contains(&s.variability));
            prop_assert!((0.0..=1.0).contains(&s.correctness));
        }

        #[test]
        fn stats_are_symmetric(probs in prop::collection::vec(0.0f64..=1.0, 1..30), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = probs.clone();
            shuffled.shuffle(&mut crate::rng::seeded(seed));
            let (a, b) = (rec(&probs).stats().unwrap(), rec(&shuffled).stats().unwrap());
            prop_assert!((a.confidence - b.confidence).abs() < 1e-12);
            prop_assert!((a.variability - b.variability).abs() < 1e-12);
            prop_assert_eq!(a.correctness, b.correctness);
        }
    }
}
