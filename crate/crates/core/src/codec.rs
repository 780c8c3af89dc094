//! JSON encodings shared by the model and POVM file formats.
//!
//! Complex numbers are two-element arrays `[re, im]`; matrices are row-major
//! grids of those pairs.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::operators::{c64, CMatrix, CVector};

pub type ComplexPair = [f64; 2];

pub fn vector_to_pairs(v: &CVector) -> Vec<ComplexPair> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn pairs_to_vector(pairs: &[ComplexPair]) -> CVector {
    CVector::from_iterator(pairs.len(), pairs.iter().map(|p| c64(p[0], p[1])))
}

pub fn matrix_to_grid(m: &CMatrix) -> Vec<Vec<ComplexPair>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

/// Decodes a row-major grid, rejecting ragged or non-square input.
pub fn grid_to_matrix(grid: &[Vec<ComplexPair>], what: &str) -> Result<CMatrix> {
    let n = grid.len();
    if let Some((row, r)) = grid.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Parse(format!(
            "{what}: row {row} has {} entries, expected {n} for a square matrix",
            r.len()
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        c64(grid[i][j][0], grid[i][j][1])
    }))
}

/// Parses JSON, reporting the failing field path together with line/column.
pub fn from_json_str<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        Error::Parse(format!(
            "{origin}: field `{path}`: {inner} (line {}, column {})",
            inner.line(),
            inner.column()
        ))
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn check_format(found: &str, expected: &str, origin: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Parse(format!(
            "{origin}: unsupported format `{found}`, expected `{expected}`"
        )));
    }
    Ok(())
}
