use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, DatasetError, Example, ExampleId, Provenance};
use crate::rng;

/// Isotropic unit-variance Gaussian clusters, one per class.
///
/// When `dim >= num_classes` the class means sit on scaled basis vectors so
/// every pair is exactly `class_separation` apart. With fewer dimensions
/// than classes the means are laid out along the first axis, `class_separation`
/// apart between neighbours. Examples are interleaved by class, ids `0..N`,
/// all in the auto set with `gold_label == assigned_label`.
pub fn generate_synthetic(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    class_separation: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if num_classes < 2 || per_class < 1 || dim < 1 {
        return Err(DatasetError::InvalidParameter(format!(
            "need num_classes >= 2, per_class >= 1, dim >= 1 (got {num_classes}, {per_class}, {dim})"
        )));
    }
    if !class_separation.is_finite() || class_separation < 0.0 {
        return Err(DatasetError::InvalidParameter(format!(
            "class_separation must be finite and non-negative, got {class_separation}"
        )));
    }
    let means = class_means(num_classes, dim, class_separation);
    let mut rng = rng::seeded(seed);
    let mut examples = Vec::with_capacity(num_classes * per_class);
    for _ in 0..per_class {
        for (class, mean) in means.iter().enumerate() {
            let features = mean
                .iter()
                .map(|m| m + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            examples.push(Example {
                id: examples.len() as ExampleId,
                features,
                assigned_label: class,
                provenance: Provenance::Auto,
                gold_label: Some(class),
            });
        }
    }
    Dataset::new(examples, num_classes)
}

fn class_means(k: usize, dim: usize, sep: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|class| {
            let mut mean = vec![0.0; dim];
            if dim >= k {
                mean[class] = sep / std::f64::consts::SQRT_2;
            } else {
                mean[0] = class as f64 * sep;
            }
            mean
        })
        .collect()
}

/// Stratified hold-out: moves `per_class` examples of every class (by
/// assigned label) into a second dataset.
pub fn holdout_split(
    d: &Dataset,
    per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    let mut by_class: Vec<Vec<ExampleId>> = vec![Vec::new(); d.num_classes()];
    for e in d.examples() {
        by_class[e.assigned_label].push(e.id);
    }
    let mut rng = rng::seeded(seed);
    let mut held = BTreeSet::new();
    for (class, mut pool) in by_class.into_iter().enumerate() {
        if pool.len() < per_class {
            return Err(DatasetError::Capacity { class, available: pool.len(), requested: per_class });
        }
        pool.shuffle(&mut rng);
        held.extend(pool.into_iter().take(per_class));
    }
    let rest: BTreeSet<ExampleId> =
        d.examples().iter().map(|e| e.id).filter(|id| !held.contains(id)).collect();
    Ok((d.subset(&rest), d.subset(&held)))
}
