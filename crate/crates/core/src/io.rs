//! JSON conventions: matrices are row-major arrays, complex entries are
//! `[re, im]` pairs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};

pub fn ser_rmat<S: Serializer>(m: &RMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

pub fn ser_cmat<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<[f64; 2]> = m.row(r).iter().map(|z| [z.re, z.im]).collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

pub fn rmat_to_json(m: &RMat) -> Value {
    Value::Array((0..m.nrows()).map(|r| Value::from(m.row(r).iter().copied().collect::<Vec<f64>>())).collect())
}

pub fn cmat_to_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array(m.row(r).iter().map(|z| Value::from(vec![z.re, z.im])).collect()))
            .collect(),
    )
}

fn rows(v: &Value) -> Result<&Vec<Value>> {
    v.as_array().ok_or_else(|| Error::InvalidInput("matrix must be an array of rows".into()))
}

fn number(v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::InvalidInput(format!("expected a number, got {v}")))
}

/// Entry may be a plain number or an `[re, im]` pair.
pub fn complex_from_json(v: &Value) -> Result<Complex64> {
    match v {
        Value::Array(pair) if pair.len() == 2 => Ok(Complex64::new(number(&pair[0])?, number(&pair[1])?)),
        other => Ok(Complex64::new(number(other)?, 0.0)),
    }
}

pub fn rmat_from_json(v: &Value) -> Result<RMat> {
    let rows = rows(v)?;
    let nr = rows.len();
    let nc = rows.first().and_then(|r| r.as_array()).map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(nr * nc);
    for row in rows {
        let row = row.as_array().ok_or_else(|| Error::InvalidInput("row must be an array".into()))?;
        if row.len() != nc {
            return Err(Error::InvalidInput("ragged matrix".into()));
        }
        for x in row {
            data.push(number(x)?);
        }
    }
    Ok(DMatrix::from_row_slice(nr, nc, &data))
}

pub fn cmat_from_json(v: &Value) -> Result<CMat> {
    let rows = rows(v)?;
    let nr = rows.len();
    let nc = rows.first().and_then(|r| r.as_array()).map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(nr * nc);
    for row in rows {
        let row = row.as_array().ok_or_else(|| Error::InvalidInput("row must be an array".into()))?;
        if row.len() != nc {
            return Err(Error::InvalidInput("ragged matrix".into()));
        }
        for x in row {
            data.push(complex_from_json(x)?);
        }
    }
    Ok(DMatrix::from_row_slice(nr, nc, &data))
}

/// Accepts either a bare matrix or an object with the matrix under `key`.
pub fn matrix_field<'a>(v: &'a Value, key: &str) -> &'a Value {
    v.get(key).unwrap_or(v)
}

/// On-disk description of a holomorphic lattice family together with its
/// polarization.
///
/// ```json
/// { "n": 1,
///   "base": { "intervals": [[-0.5, 0.5], [-0.5, 0.5]] },
///   "q": [[0, 1], [-1, 0]],
///   "lattice": [ [{"c": [1, 0], "p": [0]}],
///                [{"c": [0, 1], "p": [0]}, {"c": [0.1, 0], "p": [2]}] ] }
/// ```
///
/// `lattice` lists the n×2n entries row-major; each entry is a polynomial
/// (array of terms) or `{"num": [...], "den": [...]}`. Instead of `lattice`,
/// `period` may list the n×n entries of `Z(y)`, meaning `T(y) = (1, Z(y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub n: usize,
    pub base: crate::period::BaseBox,
    pub q: Option<Vec<Vec<f64>>>,
    pub lattice: Option<Vec<crate::period::HoloFn>>,
    pub period: Option<Vec<crate::period::HoloFn>>,
}

impl FamilyFile {
    pub fn family(&self) -> Result<crate::period::EntrywiseFamily> {
        use crate::period::EntrywiseFamily;
        match (&self.lattice, &self.period) {
            (Some(entries), None) => EntrywiseFamily::new(self.n, self.base.clone(), entries.clone()),
            (None, Some(z)) => EntrywiseFamily::from_period(self.n, self.base.clone(), z.clone()),
            _ => Err(Error::InvalidInput("family file needs exactly one of `lattice` or `period`".into())),
        }
    }

    /// Polarization; defaults to the standard form.
    pub fn form(&self) -> Result<crate::lattice::SkewForm> {
        match &self.q {
            None => Ok(crate::lattice::SkewForm::standard(self.n)),
            Some(rows) => {
                let dim = rows.len();
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                if flat.len() != dim * dim {
                    return Err(Error::InvalidInput("q must be square".into()));
                }
                crate::lattice::SkewForm::detect(DMatrix::from_row_slice(dim, dim, &flat))
            }
        }
    }
}

/// Serializes any report as pretty JSON.
pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn complex_matrix_roundtrip() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 2.0), c(0.0, -1.0), c(3.5, 0.0), c(0.0, 0.0)]);
        let v = cmat_to_json(&m);
        assert_eq!(cmat_from_json(&v).unwrap(), m);
        let bare = serde_json::json!([[1, [0, 1]]]);
        let m = cmat_from_json(&bare).unwrap();
        assert_eq!(m[(0, 1)], c(0.0, 1.0));
    }

    #[test]
    fn family_file_parses_period_form() {
        let text = r#"{ "n": 1, "base": {"intervals": [[-0.5, 0.5], [-0.5, 0.5]]},
                        "period": [[{"c": [0, 1], "p": [0]}, {"c": [0.1, 0], "p": [2]}]] }"#;
        let f: FamilyFile = serde_json::from_str(text).unwrap();
        let fam = f.family().unwrap();
        use crate::period::HolomorphicLatticeFamily;
        let t = fam.jet(&[c(0.5, 0.0)]).value;
        assert!((t[(0, 1)] - c(0.025, 1.0)).norm() < 1e-15);
        assert_eq!(f.form().unwrap(), crate::lattice::SkewForm::standard(1));
    }
}
