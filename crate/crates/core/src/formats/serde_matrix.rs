//! Matrices as nested JSON arrays (one inner array per row).

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::numerics::{Matrix, Vector};

#[derive(Serialize, Deserialize)]
struct Repr {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
    Repr {
        rows: m.nrows(),
        cols: m.ncols(),
        data: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
    let r = Repr::deserialize(d)?;
    if r.data.len() != r.rows || r.data.iter().any(|row| row.len() != r.cols) {
        return Err(D::Error::custom(format!(
            "matrix declared {}x{} does not match its data",
            r.rows, r.cols
        )));
    }
    let m = Matrix::from_fn(r.rows, r.cols, |i, j| r.data[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(D::Error::custom("non-finite matrix entry"));
    }
    Ok(m)
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(D::Error::custom("non-finite vector entry"));
        }
        Ok(Vector::from_vec(v))
    }
}
