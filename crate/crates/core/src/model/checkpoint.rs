//! Checkpoints are JSON objects:
//! `{"layer_sizes": [...], "activation": "relu"|"tanh", "seed": n, "params": [...]}`
//! with `params` in the flat row-major layout described in the module docs.
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::{ClassifierState, ModelError};

pub fn save_checkpoint(state: &ClassifierState, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, state)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ClassifierState, ModelError> {
    let raw: ClassifierState = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    // Re-validate shape and finiteness.
    ClassifierState::from_params(&raw.layer_sizes, raw.activation, raw.seed, raw.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_exact(seed in any::<u64>(), hidden in 1usize..6, scale in -1e6f64..1e6) {
            let mut s = ClassifierState::init(&[3, hidden, 2], Activation::Tanh, seed).unwrap();
            for p in s.params_mut() {
                *p *= scale;
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.json");
            save_checkpoint(&s, &path).unwrap();
            prop_assert_eq!(load_checkpoint(&path).unwrap(), s);
        }
    }

    #[test]
    fn rejects_wrong_param_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"layer_sizes":[2,2],"activation":"relu","seed":0,"params":[1.0]}"#)
            .unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::Shape { expected: 6, found: 1 })));
    }
}
