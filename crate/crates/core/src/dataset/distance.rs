use ndarray::ArrayView1;

use super::encode::EncodedTable;
use crate::error::{Error, Result};

/// ℓ2 distance between two encoded rows.
pub fn euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(squared(x, y).sqrt())
}

#[inline]
pub fn squared(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub fn squared_view(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Fails unless both tables share schema, encoding and normalization.
pub fn ensure_same_space(a: &EncodedTable, b: &EncodedTable) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if !a.same_space(b) {
        return Err(Error::Encoding(
            "tables are encoded in different coordinate systems".into(),
        ));
    }
    Ok(())
}

/// Squared distances from `row` to every row of `table`.
pub fn squared_to_all(row: ArrayView1<f64>, table: &EncodedTable) -> Vec<f64> {
    table
        .matrix
        .rows()
        .into_iter()
        .map(|r| squared_view(row, r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_geometry() {
        assert_eq!(euclidean(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2f64.sqrt());
        assert!(matches!(
            euclidean(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }
}
