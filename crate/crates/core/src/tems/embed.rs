use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::Vocabulary;
use crate::{Error, Result};

/// Half-width of the uniform range used for tokens missing from the table.
pub const OOV_INIT_RANGE: f64 = 0.05;

/// Reads a GloVe-style text table (token followed by `dim` floats per line)
/// into a `|vocab| × dim` matrix.
///
/// Rows for tokens absent from the table are drawn uniformly from
/// `[-0.05, 0.05]` with the given seed; the padding row is zero. The width is
/// taken from the first data line unless `expected_dim` is given. A leading
/// word2vec-style `count dim` header line is skipped.
pub fn load_embeddings(
    vocab: &Vocabulary,
    table: &Path,
    expected_dim: Option<usize>,
    seed: u64,
) -> Result<Array2<f64>> {
    let file = File::open(table).map_err(|e| Error::io(table, e))?;
    let reader = BufReader::new(file);

    let mut dim = expected_dim;
    let mut found: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(table, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if line_no == 1 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        let values = rest
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Embedding {
                line: line_no,
                message: e.to_string(),
            })?;
        let width = *dim.get_or_insert(values.len());
        if values.len() != width {
            return Err(Error::Embedding {
                line: line_no,
                message: format!("expected {width} values, found {}", values.len()),
            });
        }
        if vocab.contains(token) {
            found[vocab.index_of(token)] = Some(values);
        }
    }
    let dim = dim.ok_or_else(|| Error::Embedding {
        line: 0,
        message: "empty embedding table".into(),
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::zeros((vocab.len(), dim));
    for (row, values) in found.into_iter().enumerate() {
        if row == vocab.pad_index() {
            continue;
        }
        match values {
            Some(v) => m.row_mut(row).iter_mut().zip(v).for_each(|(dst, x)| *dst = x),
            None => m
                .row_mut(row)
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-OOV_INIT_RANGE..=OOV_INIT_RANGE)),
        }
    }
    Ok(m)
}
