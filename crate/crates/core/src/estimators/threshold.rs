use super::EdgeSet;
use crate::data::{sample_covariance, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg::{invert_spd, SymmetricMatrix};

/// `rho_ij = -Theta_ij / sqrt(Theta_ii Theta_jj)` with `Theta` the inverse
/// sample covariance; unit diagonal.
pub fn partial_correlations(data: &DataMatrix) -> Result<SymmetricMatrix> {
    let (n, p) = (data.n_samples(), data.n_nodes());
    if n <= p {
        return Err(Error::RequiresMoreSamples { n, p });
    }
    let theta = invert_spd(&sample_covariance(data)).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::RequiresMoreSamples { n, p },
        other => other,
    })?;
    let t = theta.as_array();
    let rho = ndarray::Array2::from_shape_fn((p, p), |(i, j)| {
        if i == j {
            1.0
        } else {
            (-t[[i, j]] / (t[[i, i]] * t[[j, j]]).sqrt()).clamp(-1.0, 1.0)
        }
    });
    SymmetricMatrix::symmetrize(rho)
}

/// Edges where `|rho_ij| > threshold`.
pub fn estimate_thr(data: &DataMatrix, threshold: f64) -> Result<EdgeSet> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!("threshold {threshold} outside [0, 1]")));
    }
    let rho = partial_correlations(data)?;
    Ok(threshold_edges(&rho, threshold))
}

pub(crate) fn threshold_edges(rho: &SymmetricMatrix, threshold: f64) -> EdgeSet {
    let p = rho.dim();
    let mut edges = EdgeSet::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if rho.get(i, j).abs() > threshold {
                edges.insert(i, j).expect("in range");
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(seed: u64, n: usize, p: usize) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn threshold_limits() {
        let d = gaussian(1, 50, 5);
        assert!(estimate_thr(&d, 1.0).unwrap().is_empty());
        assert_eq!(estimate_thr(&d, 0.0).unwrap().len(), 10);
        assert!(estimate_thr(&d, 1.5).is_err());
    }

    #[test]
    fn refuses_when_n_not_above_p() {
        let d = gaussian(2, 5, 5);
        assert!(matches!(
            estimate_thr(&d, 0.1),
            Err(Error::RequiresMoreSamples { n: 5, p: 5 })
        ));
        // n > p but centering leaves rank n - 1 = p - 1... here n = p + 1 gives rank p
        let d = gaussian(3, 6, 5);
        assert!(estimate_thr(&d, 0.1).is_ok());
    }

    #[test]
    fn population_two_node_partial_correlation() {
        // Data whose sample covariance is exactly [[1, rho], [rho, 1]]:
        // whiten a sample, then color it with the Cholesky factor.
        let rho = 0.6;
        let raw = gaussian(4, 200, 2);
        let xc = raw.centered();
        let s = SymmetricMatrix::symmetrize(xc.t().dot(&xc) / 200.0).unwrap();
        let ls = cholesky(&s).unwrap();
        let target = cholesky(&SymmetricMatrix::new(array![[1.0, rho], [rho, 1.0]]).unwrap()).unwrap();
        // x_new = x L_s^{-T} L_t^T
        let l = ls.lower();
        let inv = array![
            [1.0 / l[[0, 0]], 0.0],
            [-l[[1, 0]] / (l[[0, 0]] * l[[1, 1]]), 1.0 / l[[1, 1]]]
        ];
        let colored = xc.dot(&inv.t()).dot(&target.lower().t());
        let r = partial_correlations(&DataMatrix::new(colored).unwrap()).unwrap();
        assert!((r.get(0, 1) - rho).abs() < 1e-10, "{}", r.get(0, 1));
    }
}
