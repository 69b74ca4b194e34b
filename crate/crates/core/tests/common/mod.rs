//! Independent reference implementations and fixtures shared by the
//! integration tests.

#![allow(dead_code)]

use wct::cotrain::{RunConfig, Seeds};
use wct::dataset::{carve_human_set, generate_synthetic, inject_noise, Dataset, NoiseSpec};
use wct::model::{weighted_ce_loss, Batch, ClassifierState};

/// Mean, population std and hit rate, summing in reverse order.
pub fn brute_stats(probs: &[f64], correct: &[bool]) -> (f64, f64, f64) {
    let n = probs.len() as f64;
    let mean = probs.iter().rev().fold(0.0, |a, p| a + p) / n;
    let var = probs.iter().rev().map(|p| (p - mean) * (p - mean)).fold(0.0, |a, x| a + x) / n;
    let hits = correct.iter().filter(|c| **c).count() as f64;
    (mean, var.sqrt(), hits / n)
}

/// Min-max scaling with a degenerate list mapped to ones.
pub fn brute_normalize(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    xs.iter().map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 1.0 }).collect()
}

/// Indices of the `k` smallest `(loss, id)` pairs, by counting for each
/// element how many others precede it.
pub fn brute_bottom_k(ids: &[u64], losses: &[f64], k: usize) -> Vec<usize> {
    (0..ids.len())
        .filter(|&i| {
            let rank = (0..ids.len())
                .filter(|&j| losses[j] < losses[i] || (losses[j] == losses[i] && ids[j] < ids[i]))
                .count();
            rank < k
        })
        .collect()
}

/// Central finite-difference gradient of the weighted batch loss.
pub fn numeric_gradient(state: &ClassifierState, batch: &Batch<'_>, h: f64) -> Vec<f64> {
    let mut probe = state.clone();
    (0..state.params().len())
        .map(|i| {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + h;
            let up = weighted_ce_loss(&probe, batch).unwrap().loss;
            probe.params_mut()[i] = orig - h;
            let down = weighted_ce_loss(&probe, batch).unwrap().loss;
            probe.params_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / (||a|| + ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()) + norm(&mut b.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// 3 classes, 40 per class, 8 of them human per class, 20% noise on the rest.
pub fn small_noisy(seed: u64) -> Dataset {
    let d = generate_synthetic(3, 40, 4, 2.5, seed).unwrap();
    let d = carve_human_set(&d, 8, seed).unwrap();
    inject_noise(&d, &NoiseSpec::symmetric(0.2, seed)).unwrap()
}

pub fn quick_config(seed: u64) -> RunConfig {
    RunConfig {
        hidden: vec![8],
        batch_size: 16,
        step1_epochs: 3,
        cotrain_epochs: 2,
        finetune_epochs: 2,
        ds_epochs: 3,
        learning_rate: 1e-2,
        finetune_learning_rate: 1e-3,
        seeds: Seeds::from_base(seed),
        ..RunConfig::default()
    }
}
