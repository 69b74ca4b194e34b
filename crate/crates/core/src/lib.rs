//! Training-dynamics-weighted co-training for classification with noisy
//! labels.
//!
//! Two classifiers are first trained on disjoint halves of a small clean
//! set while their predictions on a large noisily labeled set are
//! recorded. Per-example confidence and variability from those dynamics
//! become two contrasting weight sets, and the classifiers are then
//! re-initialized and trained on the noisy set with each one's loss scaled
//! by the weights the *other* classifier produced. A final low learning rate
//! pass on the clean halves and a softmax-average ensemble finish the run.
//!
//! Module map:
//! - [`dataset`]: examples, file formats, synthetic data, label noise, splits
//! - [`model`]: MLP classifier, weighted cross-entropy, optimizers
//! - [`cartography`]: training-dynamics records and data-map export
//! - [`weighting`]: weight rules, min-max normalization, weight tables
//! - [`cotrain`]: the three-step weighted co-training pipeline and ensembling
//! - [`baselines`]: distant supervision, fine-tuned ensembles, weighted
//!   self-training, co-teaching
//! - [`eval`]: confusion matrices, macro F1, seed aggregation
//! - [`cli`]: the `wct` command-line tool

pub mod baselines;
pub mod cartography;
pub mod cli;
pub mod cotrain;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod training;
pub mod weighting;

pub use error::{Error, Result};
