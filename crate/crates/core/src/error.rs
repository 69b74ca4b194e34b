use thiserror::Error;

use crate::cartography::CartographyError;
use crate::dataset::DatasetError;
use crate::eval::EvalError;
use crate::model::ModelError;
use crate::weighting::WeightingError;

/// Errors from the training pipelines, which compose every other module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cartography(#[from] CartographyError),
    #[error(transparent)]
    Weighting(#[from] WeightingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
