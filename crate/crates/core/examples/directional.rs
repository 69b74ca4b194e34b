//! Compare every method on a noisy synthetic 4-class problem.
//!
//! ```text
//! cargo run --release --example directional -- [separation] [noise] [seeds] [test-per-class]
//! ```

use std::time::Instant;

use wct::baselines::{run_method, CoTeachingConfig, Method};
use wct::cotrain::{RunConfig, Seeds};
use wct::dataset::{carve_human_set, generate_synthetic, holdout_split, inject_noise, Dataset, NoiseSpec};
use wct::training::evaluate_all;

fn build(separation: f64, noise: f64, test_per_class: usize, seed: u64) -> (Dataset, Dataset) {
    let all = generate_synthetic(4, 1350 + test_per_class, 10, separation, seed).unwrap();
    let (rest, test) = holdout_split(&all, test_per_class, seed + 1).unwrap();
    let carved = carve_human_set(&rest, 100, seed + 2).unwrap();
    (inject_noise(&carved, &NoiseSpec::symmetric(noise, seed + 3)).unwrap(), test)
}

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).map_or(default, |s| s.parse().unwrap_or_else(|_| panic!("bad argument {s:?}")))
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let separation = arg(&args, 0, 3.5);
    let noise = arg(&args, 1, 0.2);
    let n_seeds: u64 = arg(&args, 2, 3);
    let test_per_class = arg(&args, 3, 2500);

    for name in Method::NAMES {
        let method: Method = name.parse().unwrap();
        let start = Instant::now();
        let mut scores = Vec::new();
        for seed in 0..n_seeds {
            let (d, test) = build(separation, noise, test_per_class, 100 * seed);
            let cfg = RunConfig { seeds: Seeds::from_base(seed), ..RunConfig::default() };
            let out = run_method(method, &d, &cfg, &CoTeachingConfig::default()).unwrap();
            scores.push(100.0 * evaluate_all(&out.predictor(), &test).unwrap().macro_f1);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        println!("{name:>14}: macro F1 {mean:6.2}  {scores:.2?}  ({:.1?})", start.elapsed());
    }
}
