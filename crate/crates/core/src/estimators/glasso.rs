//! Graphical lasso by block coordinate descent on the covariance estimate.
//!
//! Only off-diagonal entries of the precision matrix are penalized:
//! minimize `-log det T + tr(S T) + lambda * sum_{i != j} |T_ij|`. The
//! covariance estimate `W` therefore keeps `W_ii = S_ii`, and a diagonal `S`
//! is solved exactly by `T = diag(1 / S_ii)`. Each column update is a
//! weighted-lasso problem in Gram form with Gram matrix `W_11`.

use ndarray::{Array1, Array2};

use super::{is_nonzero, EdgeSet};
use crate::data::{sample_covariance, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, SymmetricMatrix};
use crate::solver::GramLasso;

const INNER_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct GlassoFit {
    pub lambda: f64,
    pub edges: EdgeSet,
    pub precision: SymmetricMatrix,
    /// Final covariance estimate `W`.
    pub covariance: Array2<f64>,
    pub sweeps: usize,
}

/// Column coefficients and covariance iterate, reused as a warm start.
#[derive(Debug, Clone)]
struct State {
    w: Array2<f64>,
    /// Column `j` holds the lasso coefficients of the block update for `j`.
    b: Array2<f64>,
}

impl State {
    /// `S` with off-diagonals soft-thresholded by `lambda`: the nearest point
    /// of the dual box `|W_ij - S_ij| <= lambda`, and `diag(S)` once
    /// `lambda` reaches [`glasso_lambda_max`].
    fn cold(s: &Array2<f64>, lambda: f64) -> Self {
        let p = s.nrows();
        let w = Array2::from_shape_fn((p, p), |(i, j)| {
            let v = s[[i, j]];
            if i == j {
                v
            } else {
                v.signum() * (v.abs() - lambda).max(0.0)
            }
        });
        Self {
            w,
            b: Array2::zeros((p, p)),
        }
    }
}

/// Smallest `lambda` giving an empty graph: the largest off-diagonal
/// `|S_ij|`.
pub fn glasso_lambda_max(s: &SymmetricMatrix) -> f64 {
    let p = s.dim();
    let mut m = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            m = m.max(s.get(i, j).abs());
        }
    }
    m
}

pub fn estimate_glasso(data: &DataMatrix, lambda: f64, tol: f64, max_sweeps: usize) -> Result<GlassoFit> {
    let s = sample_covariance(data);
    let mut fits = glasso_path(&s, &[lambda], tol, max_sweeps)?;
    Ok(fits.remove(0))
}

/// Solves along `lambdas` (sparsest first), warm-starting each point from
/// the previous one. Convergence: the largest change of any `W` entry over
/// a sweep is at most `tol` times the mean diagonal of `S`.
pub fn glasso_path(s: &SymmetricMatrix, lambdas: &[f64], tol: f64, max_sweeps: usize) -> Result<Vec<GlassoFit>> {
    let p = s.dim();
    let sa = s.as_array();
    if let Some(i) = (0..p).find(|&i| !(sa[[i, i]] > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "sample variance of node {i} is zero; graphical lasso needs positive variances"
        )));
    }
    if !(tol > 0.0) || max_sweeps == 0 {
        return Err(Error::InvalidInput("tol must be > 0 and max_sweeps >= 1".into()));
    }
    let unit = sa.diag().mean().unwrap_or(1.0);
    let mut state = State::cold(sa, lambdas.first().copied().unwrap_or(0.0).max(0.0));
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let sweeps = solve(sa, lambda, tol * unit, max_sweeps, &mut state)?;
        out.push(finish(lambda, &state, sweeps)?);
    }
    Ok(out)
}

fn solve(s: &Array2<f64>, lambda: f64, tol: f64, max_sweeps: usize, st: &mut State) -> Result<usize> {
    let p = s.nrows();
    let mut weights = Array1::from_elem(p, lambda);
    let mut beta = Array1::<f64>::zeros(p);
    let inner_tol = 0.1 * tol;
    for sweep in 1..=max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..p {
            weights[j] = f64::INFINITY;
            beta.assign(&st.b.column(j));
            let linear = s.column(j);
            let out = GramLasso::new(st.w.view(), linear, weights.view()).solve(&mut beta, inner_tol, INNER_MAX_SWEEPS);
            weights[j] = lambda;
            if !out.converged {
                return Err(Error::GlassoDidNotConverge { lambda, sweeps: sweep });
            }
            st.b.column_mut(j).assign(&beta);
            // w12 = W11 beta
            let mut w12 = Array1::<f64>::zeros(p);
            for (k, &bk) in beta.iter().enumerate() {
                if bk != 0.0 {
                    w12.scaled_add(bk, &st.w.row(k));
                }
            }
            for i in 0..p {
                if i == j {
                    continue;
                }
                let change = (w12[i] - st.w[[i, j]]).abs();
                max_change = max_change.max(change);
                st.w[[i, j]] = w12[i];
                st.w[[j, i]] = w12[i];
            }
        }
        if max_change <= tol {
            return Ok(sweep);
        }
    }
    Err(Error::GlassoDidNotConverge {
        lambda,
        sweeps: max_sweeps,
    })
}

fn finish(lambda: f64, st: &State, sweeps: usize) -> Result<GlassoFit> {
    let p = st.w.nrows();
    let mut theta = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let bj = st.b.column(j);
        let mut quad = 0.0;
        for (k, &bk) in bj.iter().enumerate() {
            if k != j && bk != 0.0 {
                quad += st.w[[j, k]] * bk;
            }
        }
        let tjj = 1.0 / (st.w[[j, j]] - quad);
        theta[[j, j]] = tjj;
        for (k, &bk) in bj.iter().enumerate() {
            if k != j {
                theta[[k, j]] = -bk * tjj;
            }
        }
    }
    let precision = SymmetricMatrix::symmetrize(theta)?;
    cholesky(&precision).map_err(|_| Error::GlassoDidNotConverge { lambda, sweeps })?;
    let mut edges = EdgeSet::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if is_nonzero(precision.get(i, j)) {
                edges.insert(i, j).expect("in range");
            }
        }
    }
    Ok(GlassoFit {
        lambda,
        edges,
        precision,
        covariance: st.w.clone(),
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::invert_spd;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(seed: u64, n: usize, p: usize) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))).unwrap()
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn unpenalized_recovers_inverse_covariance() {
        let data = gaussian(1, 60, 5);
        let fit = estimate_glasso(&data, 0.0, 1e-10, 10_000).unwrap();
        let inv = invert_spd(&sample_covariance(&data)).unwrap();
        assert!(max_abs_diff(fit.precision.as_array(), inv.as_array()) < 1e-5);
        assert_eq!(fit.edges.len(), 10);
    }

    #[test]
    fn small_lambda_cold_start_on_correlated_data() {
        let z = gaussian(2, 200, 8);
        let mix = Array2::from_shape_fn((8, 8), |(i, j)| if j <= i { 1.0 } else { 0.0 });
        let data = DataMatrix::new(z.as_array().dot(&mix.t())).unwrap();
        let s = sample_covariance(&data);
        let fit = estimate_glasso(&data, 0.0, 1e-10, 10_000).unwrap();
        let inv = invert_spd(&s).unwrap();
        assert!(max_abs_diff(fit.precision.as_array(), inv.as_array()) < 1e-5);
        let lmax = glasso_lambda_max(&s);
        assert!(glasso_path(&s, &[0.05 * lmax], 1e-8, 1000).is_ok());
    }

    #[test]
    fn diagonal_covariance_is_exact() {
        let s = SymmetricMatrix::from_diagonal(&[2.0, 0.5, 4.0]);
        for lambda in [0.0, 0.1, 10.0] {
            let fit = &glasso_path(&s, &[lambda], 1e-8, 100).unwrap()[0];
            assert!(fit.edges.is_empty());
            assert!(max_abs_diff(fit.precision.as_array(), &Array2::from_diag(&array![0.5, 2.0, 0.25])) < 1e-14);
        }
    }

    #[test]
    fn lambda_at_max_gives_empty_graph() {
        let data = gaussian(2, 40, 6);
        let s = sample_covariance(&data);
        let lmax = glasso_lambda_max(&s);
        let fit = &glasso_path(&s, &[lmax], 1e-8, 100).unwrap()[0];
        assert!(fit.edges.is_empty());
        let fit = &glasso_path(&s, &[0.5 * lmax], 1e-8, 1000).unwrap()[0];
        assert!(!fit.edges.is_empty());
    }

    #[test]
    fn stationarity_holds() {
        // W = S + lambda * sign(T_ij) on the support,
        // |W_ij - S_ij| <= lambda off the support, W_ii = S_ii.
        let data = gaussian(3, 30, 8);
        let s = sample_covariance(&data);
        let lmax = glasso_lambda_max(&s);
        for frac in [0.7, 0.3, 0.1] {
            let lambda = frac * lmax;
            let fit = &glasso_path(&s, &[lambda], 1e-9, 10_000).unwrap()[0];
            let w = invert_spd(&fit.precision).unwrap();
            for i in 0..8 {
                assert!((w.get(i, i) - s.get(i, i)).abs() < 1e-5);
                for j in 0..8 {
                    if i == j {
                        continue;
                    }
                    let t = fit.precision.get(i, j);
                    let gap = w.get(i, j) - s.get(i, j);
                    if is_nonzero(t) {
                        assert!((gap - lambda * t.signum()).abs() < 1e-5, "gap {gap} lambda {lambda}");
                    } else {
                        assert!(gap.abs() <= lambda + 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn path_is_positive_definite_even_when_n_below_p() {
        let data = gaussian(4, 15, 20);
        let s = sample_covariance(&data);
        let lmax = glasso_lambda_max(&s);
        let grid: Vec<f64> = (0..10).map(|k| lmax * 0.6f64.powi(k)).collect();
        let fits = glasso_path(&s, &grid, 1e-6, 1000).unwrap();
        let mut prev = 0;
        for f in &fits {
            assert!(cholesky(&f.precision).is_ok());
            assert!(f.edges.len() + 3 >= prev);
            prev = f.edges.len();
        }
    }

    #[test]
    fn rejects_zero_variance() {
        let s = SymmetricMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(glasso_path(&s, &[0.1], 1e-6, 10).is_err());
    }
}
