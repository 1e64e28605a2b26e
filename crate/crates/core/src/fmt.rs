//! Fixed 17-significant-digit number formatting for CSV and JSON output.

use nalgebra::DMatrix;
use serde::ser::{SerializeSeq, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

/// Formats `v` with 17 significant digits (`-1.2345678901234567e-3`).
/// Non-finite values print as `nan`, `inf` and `-inf`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_owned()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{v:.16e}")
    }
}

fn raw(v: f64) -> Box<RawValue> {
    let text = if v.is_finite() { format_f64(v) } else { "null".to_owned() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&raw(*v), s)
}

pub fn ser_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&raw(*x))?;
    }
    seq.end()
}

pub fn ser_rows<S: Serializer>(rows: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    struct Row<'a>(&'a [f64]);
    impl serde::Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            ser_vec(self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for r in rows {
        seq.serialize_element(&Row(r))?;
    }
    seq.end()
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ShapeMismatch(format!("{name} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
