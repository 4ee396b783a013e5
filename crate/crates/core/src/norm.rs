//! Per-dimension standardization fitted on training features.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_STD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    /// Identity transform for `dims` features.
    pub fn identity(dims: usize) -> Self {
        Self { mean: vec![0.0; dims], std: vec![1.0; dims] }
    }

    /// Mean and population standard deviation over every row of every matrix.
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Self> {
        let mut sum: Option<Array1<f64>> = None;
        let mut sum_sq: Option<Array1<f64>> = None;
        let mut rows = 0usize;
        for m in matrices {
            let s = m.sum_axis(Axis(0));
            let q = m.mapv(|v| v * v).sum_axis(Axis(0));
            match (&mut sum, &mut sum_sq) {
                (Some(a), Some(b)) => {
                    if a.len() != s.len() {
                        return Err(Error::InvalidInput(format!(
                            "feature widths differ: {} vs {}",
                            a.len(),
                            s.len()
                        )));
                    }
                    *a += &s;
                    *b += &q;
                }
                _ => {
                    sum = Some(s);
                    sum_sq = Some(q);
                }
            }
            rows += m.nrows();
        }
        let (Some(sum), Some(sum_sq)) = (sum, sum_sq) else {
            return Err(Error::InvalidInput("no feature rows to fit normalization on".into()));
        };
        if rows == 0 {
            return Err(Error::InvalidInput("no feature rows to fit normalization on".into()));
        }
        let n = rows as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n - m * m).max(0.0).sqrt();
                if sd < MIN_STD { 1.0 } else { sd }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, m: &Array2<f64>) -> Result<Array2<f64>> {
        if m.ncols() != self.dims() {
            return Err(Error::InvalidInput(format!(
                "features have {} columns, normalization expects {}",
                m.ncols(),
                self.dims()
            )));
        }
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            for ((v, mu), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fitted_features_are_standardized() {
        let a = array![[1.0, 5.0], [3.0, 5.0]];
        let b = array![[5.0, 5.0]];
        let norm = FeatureNorm::fit([&a, &b]).unwrap();
        assert_eq!(norm.mean, vec![3.0, 5.0]);
        assert_eq!(norm.std[1], 1.0);
        let z = norm.apply(&array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]]).unwrap();
        let col: Vec<f64> = z.column(0).to_vec();
        assert!((col.iter().sum::<f64>()).abs() < 1e-12);
        assert!((col.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let norm = FeatureNorm::identity(3);
        assert!(norm.apply(&Array2::zeros((2, 4))).is_err());
    }
}
