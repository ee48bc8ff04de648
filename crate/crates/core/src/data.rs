use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;

/// `n x p` sample matrix: rows are observations, columns are nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("data matrix contains non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn column_means(&self) -> Array1<f64> {
        self.values
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(self.n_nodes()))
    }

    /// Copy of the data with every column shifted to mean zero.
    pub fn centered(&self) -> Array2<f64> {
        let means = self.column_means();
        &self.values - &means.insert_axis(Axis(0))
    }

    /// Centered copy with every column scaled to unit variance (divisor
    /// `n`). Constant columns stay zero.
    pub fn standardized(&self) -> DataMatrix {
        let mut x = self.centered();
        let n = self.n_samples().max(1) as f64;
        for mut col in x.columns_mut() {
            let sd = (col.dot(&col) / n).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
        DataMatrix { values: x }
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        DataMatrix {
            values: self.values.select(Axis(0), rows),
        }
    }

    /// New matrix with columns permuted: column `k` of the result is column
    /// `perm[k]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> DataMatrix {
        DataMatrix {
            values: self.values.select(Axis(1), perm),
        }
    }
}

/// `(1/n) X_c^T X_c` on column-centered data.
pub fn sample_covariance(data: &DataMatrix) -> SymmetricMatrix {
    let n = data.n_samples();
    let p = data.n_nodes();
    if n == 0 {
        return SymmetricMatrix::symmetrize(Array2::zeros((p.max(1), p.max(1)))).expect("square by construction");
    }
    let xc = data.centered();
    let s = xc.t().dot(&xc) / n as f64;
    SymmetricMatrix::symmetrize(s).expect("square by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_columns_have_zero_covariance() {
        let d = DataMatrix::new(array![[3.0, -1.0], [3.0, -1.0], [3.0, -1.0]]).unwrap();
        assert_eq!(sample_covariance(&d).as_array(), &Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn two_row_hand_computation() {
        let d = DataMatrix::new(array![[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(sample_covariance(&d).as_array(), &array![[1.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn large_sample_covariance_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((10_000, 4), |_| StandardNormal.sample(&mut rng));
        let s = sample_covariance(&DataMatrix::new(x).unwrap());
        let err = (s.as_array() - &Array2::<f64>::eye(4))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 0.1, "max deviation {err}");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(DataMatrix::new(array![[f64::NAN]]).is_err());
    }
}
