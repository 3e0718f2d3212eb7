use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::{Matrix, ParamSet};
use crate::{Error, Result};

/// One tensor file inside a checkpoint directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
    pub sha256: String,
}

/// Writes every parameter as `<name>.bin` (little-endian f64, row-major).
pub fn save_params(params: &ParamSet, dir: &Path) -> Result<Vec<TensorEntry>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    params
        .iter()
        .map(|(_, name, m)| {
            let file = format!("{name}.bin");
            let bytes: Vec<u8> = m.iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join(&file);
            std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            Ok(TensorEntry {
                name: name.to_string(),
                rows: m.nrows(),
                cols: m.ncols(),
                file,
                sha256: hex::encode(Sha256::digest(&bytes)),
            })
        })
        .collect()
}

/// Loads the listed tensors into `params`. Every parameter must be listed
/// and every shape must agree.
pub fn load_params(params: &mut ParamSet, dir: &Path, entries: &[TensorEntry]) -> Result<()> {
    let missing: Vec<String> = params
        .iter()
        .map(|(_, n, _)| n.to_string())
        .filter(|n| !entries.iter().any(|e| &e.name == n))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("checkpoint lacks tensors {missing:?}")));
    }
    for e in entries {
        load_entry(params, dir, e)?;
    }
    Ok(())
}

fn load_entry(params: &mut ParamSet, dir: &Path, e: &TensorEntry) -> Result<()> {
    {
        let path = dir.join(&e.file);
        let bytes = std::fs::read(&path).map_err(|err| Error::io(&path, err))?;
        if bytes.len() != e.rows * e.cols * 8 {
            return Err(Error::Shape(format!(
                "{} holds {} bytes, expected {}x{} f64",
                e.file,
                bytes.len(),
                e.rows,
                e.cols
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let m = Matrix::from_shape_vec((e.rows, e.cols), values).expect("length checked");
        params.assign(&e.name, m)
    }
}

/// Loads the entries whose names exist in `params` and returns how many
/// were loaded. Used to initialise part of a model from exported weights.
pub fn load_params_matching(params: &mut ParamSet, dir: &Path, entries: &[TensorEntry]) -> Result<usize> {
    let known: Vec<TensorEntry> = entries.iter().filter(|e| params.id(&e.name).is_some()).cloned().collect();
    for e in &known {
        load_entry(params, dir, e)?;
    }
    Ok(known.len())
}
