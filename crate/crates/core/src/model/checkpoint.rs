use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::Layout;
use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::vocab::Vocab;
use crate::Scalar;

pub const CHECKPOINT_FORMAT: &str = "figlang-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord<T> {
    name: String,
    shape: [usize; 2],
    data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile<T> {
    format: String,
    version: u32,
    dtype: String,
    config: ModelConfig,
    vocab: Vocab,
    tensors: Vec<TensorRecord<T>>,
}

/// Writes config, vocabulary and every tensor as JSON.
pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        dtype: T::DTYPE.into(),
        config: params.config,
        vocab: params.vocab.clone(),
        tensors: params
            .layout
            .specs
            .iter()
            .zip(&params.tensors)
            .map(|(spec, t)| TensorRecord {
                name: spec.name.clone(),
                shape: [spec.shape.0, spec.shape.1],
                data: t.iter().copied().collect(),
            })
            .collect(),
    };
    crate::error::write_file(path, &serde_json::to_vec(&file)?)
}

/// Reads a checkpoint, checking dtype, names and shapes against the layout
/// implied by its config.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile<T> = serde_json::from_slice(&bytes)?;
    let bad = |m: String| Err(Error::Checkpoint(format!("{}: {m}", path.display())));
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return bad(format!(
            "unsupported format {} v{}",
            file.format, file.version
        ));
    }
    if file.dtype != T::DTYPE {
        return bad(format!("stored as {}, requested {}", file.dtype, T::DTYPE));
    }
    file.config.validate()?;
    if file.config.vocab_size != file.vocab.len() {
        return bad("vocabulary size does not match config".into());
    }
    let layout = Layout::new(&file.config);
    if layout.specs.len() != file.tensors.len() {
        return bad(format!(
            "expected {} tensors, found {}",
            layout.specs.len(),
            file.tensors.len()
        ));
    }
    let mut tensors = Vec::with_capacity(file.tensors.len());
    for (spec, rec) in layout.specs.iter().zip(file.tensors) {
        let shape = (rec.shape[0], rec.shape[1]);
        if rec.name != spec.name || shape != spec.shape {
            return bad(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                rec.name, shape, spec.name, spec.shape
            ));
        }
        let t = Array2::from_shape_vec(shape, rec.data)
            .map_err(|e| Error::Checkpoint(format!("{}: {}: {e}", path.display(), spec.name)))?;
        tensors.push(t);
    }
    Ok(ModelParams::from_parts(
        file.config,
        file.vocab,
        layout,
        tensors,
    ))
}
