//! Shared text encoding for reals in checkpoint, dataset, and CSV files.

use crate::error::{Error, Result};

/// Scientific notation with 17 significant digits; parses back to the same
/// `f64` bit pattern.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn join_reals<'a>(values: impl IntoIterator<Item = &'a f64>, sep: &str) -> String {
    values.into_iter().map(|v| real(*v)).collect::<Vec<_>>().join(sep)
}

pub fn parse_real(token: &str, line: usize) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("not a real number: {token:?}")))
}

pub fn parse_reals(tokens: &[&str], line: usize) -> Result<Vec<f64>> {
    tokens.iter().map(|t| parse_real(t, line)).collect()
}
