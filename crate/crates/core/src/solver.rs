//! Weighted l1-penalized least squares by cyclic coordinate descent.
//!
//! Minimizes `0.5 * ||y - X b||^2 + sum_i w_i |b_i|`. Weights may be zero
//! (unpenalized coordinates). Internally the problem is carried in Gram form
//! (`G = X^T X`, `c = X^T y`), which lets node-wise regressions and the
//! graphical lasso share one solver.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_view, eigen_symmetric, SymmetricMatrix};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
/// Active-set sweeps between polishing steps.
const POLISH_EVERY: usize = 10;

#[derive(Debug, Clone)]
pub struct WeightedLassoProblem {
    design: Array2<f64>,
    response: Array1<f64>,
    weights: Array1<f64>,
}

impl WeightedLassoProblem {
    pub fn new(design: Array2<f64>, response: Array1<f64>, weights: Array1<f64>) -> Result<Self> {
        if design.nrows() != response.len() {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: design.nrows(),
                found: response.len(),
            });
        }
        if design.ncols() != weights.len() {
            return Err(Error::DimensionMismatch {
                what: "penalty weights",
                expected: design.ncols(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(
                "penalty weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            design,
            response,
            weights,
        })
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn response(&self) -> &Array1<f64> {
        &self.response
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn n_coefficients(&self) -> usize {
        self.weights.len()
    }

    /// `0.5 * ||y - X b||^2 + sum_i w_i |b_i|`.
    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        let r = &self.response - &self.design.dot(beta);
        0.5 * r.dot(&r) + weighted_l1(&self.weights, beta)
    }
}

fn weighted_l1(w: &Array1<f64>, beta: &Array1<f64>) -> f64 {
    w.iter().zip(beta.iter()).map(|(w, b)| w * b.abs()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub values: Array1<f64>,
    /// Largest KKT residual at return.
    pub kkt_violation: f64,
}

#[derive(Debug, Clone)]
pub struct BayesParams {
    noise_sd: f64,
    rates: Array1<f64>,
}

impl BayesParams {
    pub fn new(noise_sd: f64, rates: Array1<f64>) -> Result<Self> {
        if !(noise_sd.is_finite() && noise_sd > 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise sd must be positive, got {noise_sd}"
            )));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidInput("prior rates must be finite and nonnegative".into()));
        }
        Ok(Self { noise_sd, rates })
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn rates(&self) -> &Array1<f64> {
        &self.rates
    }
}

pub fn solve_weighted_lasso(
    prob: &WeightedLassoProblem,
    tol: f64,
    max_sweeps: usize,
    warm_start: Option<&Coefficients>,
) -> Result<Coefficients> {
    if !(tol > 0.0) || max_sweeps == 0 {
        return Err(Error::InvalidInput("tol must be > 0 and max_sweeps >= 1".into()));
    }
    let k = prob.n_coefficients();
    let gram = prob.design.t().dot(&prob.design);
    let linear = prob.design.t().dot(&prob.response);
    let mut beta = match warm_start {
        Some(c) if c.values.len() == k => c.values.clone(),
        Some(c) => {
            return Err(Error::DimensionMismatch {
                what: "warm start length",
                expected: k,
                found: c.values.len(),
            })
        }
        None => Array1::zeros(k),
    };
    let outcome = GramLasso::new(gram.view(), linear.view(), prob.weights.view()).solve(&mut beta, tol, max_sweeps);
    finish(beta, outcome)
}

fn finish(beta: Array1<f64>, outcome: SolveOutcome) -> Result<Coefficients> {
    let coefs = Coefficients {
        values: beta,
        kkt_violation: outcome.kkt,
    };
    if outcome.converged {
        Ok(coefs)
    } else {
        Err(Error::DidNotConverge {
            node: None,
            sweeps: outcome.sweeps,
            best: Box::new(coefs),
        })
    }
}

/// `(1/sigma^2) * (0.5 * ||y - X b||^2 + sum_i r_i |b_i|)`, the negative
/// log-posterior under a Gaussian likelihood with Laplace priors of rates
/// `r_i / sigma^2`, without its additive constant.
pub fn neg_log_posterior(beta: &Array1<f64>, prob: &WeightedLassoProblem, params: &BayesParams) -> Result<f64> {
    let k = prob.n_coefficients();
    if beta.len() != k {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: k,
            found: beta.len(),
        });
    }
    if params.rates.len() != k {
        return Err(Error::DimensionMismatch {
            what: "prior rates",
            expected: k,
            found: params.rates.len(),
        });
    }
    let r = &prob.response - &prob.design.dot(beta);
    let s2 = params.noise_sd * params.noise_sd;
    Ok((0.5 * r.dot(&r) + weighted_l1(&params.rates, beta)) / s2)
}

/// Largest per-coordinate violation of the weighted-lasso optimality
/// conditions, with `g = X^T (y - X b)`:
/// `max(|g_i| - w_i, 0)` where `b_i = 0`, `|g_i - w_i sign(b_i)|` otherwise.
pub fn kkt_residual(beta: &Array1<f64>, prob: &WeightedLassoProblem) -> f64 {
    let r = &prob.response - &prob.design.dot(beta);
    let g = prob.design.t().dot(&r);
    beta.iter()
        .zip(g.iter())
        .zip(prob.weights.iter())
        .map(|((&b, &g), &w)| coordinate_kkt(b, g, w))
        .fold(0.0, f64::max)
}

#[inline]
fn coordinate_kkt(b: f64, g: f64, w: f64) -> f64 {
    if b == 0.0 {
        (g.abs() - w).max(0.0)
    } else {
        (g - w * b.signum()).abs()
    }
}

#[inline]
pub(crate) fn soft_threshold(z: f64, w: f64) -> f64 {
    if z > w {
        z - w
    } else if z < -w {
        z + w
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolveOutcome {
    pub converged: bool,
    pub kkt: f64,
    pub sweeps: usize,
}

/// Gram-form weighted lasso: minimize `0.5 b^T G b - c^T b + sum_i w_i |b_i|`.
///
/// A weight of `f64::INFINITY` pins that coordinate at zero, which is how a
/// node's own coefficient is excluded from its regression.
pub(crate) struct GramLasso<'a> {
    gram: ArrayView2<'a, f64>,
    linear: ArrayView1<'a, f64>,
    weights: ArrayView1<'a, f64>,
}

impl<'a> GramLasso<'a> {
    pub fn new(gram: ArrayView2<'a, f64>, linear: ArrayView1<'a, f64>, weights: ArrayView1<'a, f64>) -> Self {
        debug_assert_eq!(gram.nrows(), linear.len());
        debug_assert_eq!(gram.nrows(), weights.len());
        Self { gram, linear, weights }
    }

    /// Exact `c - G b`.
    pub fn gradient(&self, beta: &Array1<f64>) -> Array1<f64> {
        let mut g = self.linear.to_owned();
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                g.scaled_add(-b, &self.gram.row(k));
            }
        }
        g
    }

    pub fn kkt(&self, beta: &Array1<f64>, grad: &Array1<f64>) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..beta.len() {
            if self.gram[[k, k]] <= 0.0 || self.weights[k].is_infinite() {
                continue;
            }
            worst = worst.max(coordinate_kkt(beta[k], grad[k], self.weights[k]));
        }
        worst
    }

    #[cfg(test)]
    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        let gb = self.gram.dot(beta);
        let mut pen = 0.0;
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                pen += self.weights[k] * b.abs();
            }
        }
        0.5 * beta.dot(&gb) - self.linear.dot(beta) + pen
    }

    pub fn solve(&self, beta: &mut Array1<f64>, tol: f64, max_sweeps: usize) -> SolveOutcome {
        self.solve_observed(beta, tol, max_sweeps, &mut |_| {})
    }

    /// Full sweeps alternate with sweeps restricted to the nonzero set;
    /// `observe` sees the iterate after every sweep of either kind.
    pub fn solve_observed(
        &self,
        beta: &mut Array1<f64>,
        tol: f64,
        max_sweeps: usize,
        observe: &mut dyn FnMut(&Array1<f64>),
    ) -> SolveOutcome {
        let k = beta.len();
        for i in 0..k {
            if self.weights[i].is_infinite() || self.gram[[i, i]] <= 0.0 {
                beta[i] = 0.0;
            }
        }
        let mut grad = self.gradient(beta);
        let mut sweeps = 0usize;
        let mut active: Vec<usize> = Vec::with_capacity(k);
        loop {
            for i in 0..k {
                self.update(i, beta, &mut grad);
            }
            sweeps += 1;
            observe(beta);
            grad = self.gradient(beta);
            let kkt = self.kkt(beta, &grad);
            if kkt <= tol {
                return SolveOutcome {
                    converged: true,
                    kkt,
                    sweeps,
                };
            }
            if sweeps >= max_sweeps {
                return SolveOutcome {
                    converged: false,
                    kkt,
                    sweeps,
                };
            }

            active.clear();
            active.extend((0..k).filter(|&i| beta[i] != 0.0));
            while sweeps < max_sweeps {
                let mut worst = 0.0f64;
                for &i in &active {
                    self.update(i, beta, &mut grad);
                }
                sweeps += 1;
                observe(beta);
                for &i in &active {
                    worst = worst.max(coordinate_kkt(beta[i], grad[i], self.weights[i]));
                }
                if worst <= 0.5 * tol {
                    break;
                }
                if sweeps % POLISH_EVERY == 0 && self.polish(beta) {
                    observe(beta);
                    grad = self.gradient(beta);
                    active.retain(|&i| beta[i] != 0.0);
                }
            }
            if sweeps >= max_sweeps {
                grad = self.gradient(beta);
                let kkt = self.kkt(beta, &grad);
                return SolveOutcome {
                    converged: kkt <= tol,
                    kkt,
                    sweeps,
                };
            }
        }
    }

    /// Moves toward the exact minimizer over the current nonzero set with
    /// signs held fixed, stopping where the first coefficient reaches zero.
    /// The objective is quadratic along that segment, so it cannot increase.
    /// Returns whether `beta` changed.
    fn polish(&self, beta: &mut Array1<f64>) -> bool {
        let active: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] != 0.0).collect();
        if active.is_empty() {
            return false;
        }
        let m = active.len();
        let g = Array2::from_shape_fn((m, m), |(a, b)| self.gram[[active[a], active[b]]]);
        let Ok(factor) = cholesky_view(g.view()) else {
            return self.leave_flat_face(beta, &active, g);
        };
        let rhs = Array1::from_shape_fn(m, |a| {
            let i = active[a];
            self.linear[i] - self.weights[i] * beta[i].signum()
        });
        let target = factor.solve(&rhs);
        if target.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let mut step = 1.0f64;
        let mut blocking = None;
        for (a, &i) in active.iter().enumerate() {
            let (from, to) = (beta[i], target[a]);
            if to.signum() != from.signum() || to == 0.0 {
                let t = from / (from - to);
                if t < step {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        if step <= 0.0 {
            return false;
        }
        for (a, &i) in active.iter().enumerate() {
            beta[i] += step * (target[a] - beta[i]);
        }
        if let Some(i) = blocking {
            beta[i] = 0.0;
        }
        true
    }

    /// On a singular face the smooth part is constant along the null space
    /// of `G_AA`, so the objective is linear there. Steps along a null
    /// vector, in the direction where it does not increase, until one
    /// coefficient reaches zero.
    fn leave_flat_face(&self, beta: &mut Array1<f64>, active: &[usize], g: Array2<f64>) -> bool {
        let Ok(sym) = SymmetricMatrix::symmetrize(g) else {
            return false;
        };
        let Ok(eig) = eigen_symmetric(&sym) else {
            return false;
        };
        let top = eig.values[eig.values.len() - 1].abs().max(f64::MIN_POSITIVE);
        if eig.values[0].abs() > 1e-10 * top {
            return false;
        }
        let mut v = eig.vectors.column(0).to_owned();
        let grad = self.gradient(beta);
        let slope: f64 = active
            .iter()
            .zip(v.iter())
            .map(|(&i, &vi)| (self.weights[i] * beta[i].signum() - grad[i]) * vi)
            .sum();
        if slope > 0.0 {
            v.mapv_inplace(|x| -x);
        }
        let mut step = f64::INFINITY;
        let mut blocking = None;
        for (&i, &vi) in active.iter().zip(v.iter()) {
            if beta[i] * vi < 0.0 {
                let t = -beta[i] / vi;
                if t < step {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        let Some(b) = blocking else {
            return false;
        };
        for (&i, &vi) in active.iter().zip(v.iter()) {
            beta[i] += step * vi;
        }
        beta[b] = 0.0;
        true
    }

    #[inline]
    fn update(&self, i: usize, beta: &mut Array1<f64>, grad: &mut Array1<f64>) {
        let w = self.weights[i];
        let gii = self.gram[[i, i]];
        if w.is_infinite() || gii <= 0.0 {
            return;
        }
        let old = beta[i];
        let z = grad[i] + gii * old;
        let new = soft_threshold(z, w) / gii;
        let delta = new - old;
        if delta != 0.0 {
            beta[i] = new;
            grad.scaled_add(-delta, &self.gram.row(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, k), |_| rng.sample(StandardNormal))
    }

    #[test]
    fn large_weights_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_design(&mut rng, 30, 5);
        let y = Array1::from_shape_fn(30, |_| rng.sample::<f64, _>(StandardNormal));
        let lmax = x.t().dot(&y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let prob = WeightedLassoProblem::new(x, y, Array1::from_elem(5, lmax)).unwrap();
        let sol = solve_weighted_lasso(&prob, 1e-6, 100, None).unwrap();
        assert!(sol.values.iter().all(|b| *b == 0.0));
        assert_eq!(sol.kkt_violation, 0.0);
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        // columns e1, e2 scaled to unit norm; response projections (3, 0.5)
        let x = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let y = array![3.0, 0.5, 7.0];
        let prob = WeightedLassoProblem::new(x, y, array![1.0, 1.0]).unwrap();
        let sol = solve_weighted_lasso(&prob, 1e-9, 100, None).unwrap();
        assert_eq!(sol.values, array![2.0, 0.0]);
    }

    #[test]
    fn unpenalized_full_rank_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_design(&mut rng, 40, 4);
        let y = Array1::from_shape_fn(40, |_| rng.sample::<f64, _>(StandardNormal));
        // normal-equations oracle
        let gram = crate::linalg::SymmetricMatrix::symmetrize(x.t().dot(&x)).unwrap();
        let ols = crate::linalg::cholesky(&gram).unwrap().solve(&x.t().dot(&y));
        let prob = WeightedLassoProblem::new(x, y, Array1::zeros(4)).unwrap();
        let sol = solve_weighted_lasso(&prob, 1e-10, 10_000, None).unwrap();
        for (a, b) in sol.values.iter().zip(ols.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn kkt_residual_examples() {
        let x = array![[1.0, 0.0], [0.0, 2.0]];
        let prob = WeightedLassoProblem::new(x.clone(), array![0.0, 0.0], array![1.0, 1.0]).unwrap();
        assert_eq!(kkt_residual(&Array1::zeros(2), &prob), 0.0);
        // |X_1^T y| = 2 * 3 = 6 = w + 5
        let prob = WeightedLassoProblem::new(x, array![0.0, 3.0], array![1.0, 1.0]).unwrap();
        assert_eq!(kkt_residual(&Array1::zeros(2), &prob), 5.0);
    }

    #[test]
    fn zero_column_with_positive_weight_stays_zero() {
        let x = array![[1.0, 0.0], [2.0, 0.0], [0.5, 0.0]];
        let y = array![1.0, 1.0, 1.0];
        let prob = WeightedLassoProblem::new(x, y, array![0.1, 0.3]).unwrap();
        let warm = Coefficients {
            values: array![0.0, 4.0],
            kkt_violation: f64::NAN,
        };
        let sol = solve_weighted_lasso(&prob, 1e-8, 100, Some(&warm)).unwrap();
        assert_eq!(sol.values[1], 0.0);
        assert!(sol.values[0] > 0.0);
    }

    #[test]
    fn non_convergence_reports_best_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_design(&mut rng, 20, 2);
        // strongly correlated columns converge slowly
        let x = Array2::from_shape_fn((20, 2), |(i, j)| base[[i, 0]] + 0.05 * j as f64 * base[[i, 1]]);
        let y = Array1::from_shape_fn(20, |_| rng.sample::<f64, _>(StandardNormal));
        let prob = WeightedLassoProblem::new(x, y, Array1::zeros(2)).unwrap();
        match solve_weighted_lasso(&prob, 1e-12, 2, None) {
            Err(Error::DidNotConverge { best, sweeps, node }) => {
                assert_eq!(sweeps, 2);
                assert!(node.is_none());
                assert!(best.kkt_violation > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(WeightedLassoProblem::new(Array2::zeros((3, 2)), Array1::zeros(2), Array1::zeros(2)).is_err());
        assert!(WeightedLassoProblem::new(Array2::zeros((3, 2)), Array1::zeros(3), array![1.0, -1.0]).is_err());
        let prob = WeightedLassoProblem::new(Array2::eye(2), Array1::zeros(2), Array1::ones(2)).unwrap();
        assert!(solve_weighted_lasso(&prob, 0.0, 10, None).is_err());
        assert!(BayesParams::new(0.0, Array1::zeros(2)).is_err());
    }

    #[test]
    fn neg_log_posterior_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_design(&mut rng, 10, 3);
        let y = Array1::from_shape_fn(10, |_| rng.sample::<f64, _>(StandardNormal));
        let w = array![0.5, 1.0, 2.0];
        let prob = WeightedLassoProblem::new(x, y.clone(), w.clone()).unwrap();
        let zero = Array1::zeros(3);
        let sigma = 1.7;
        let params = BayesParams::new(sigma, w.clone()).unwrap();
        let v = neg_log_posterior(&zero, &prob, &params).unwrap();
        assert!((v - y.dot(&y) / (2.0 * sigma * sigma)).abs() < 1e-12);

        let beta = array![0.3, -0.2, 0.1];
        let unit = BayesParams::new(1.0, w.clone()).unwrap();
        assert!((neg_log_posterior(&beta, &prob, &unit).unwrap() - prob.objective(&beta)).abs() < 1e-12);
        let doubled = BayesParams::new(2.0, w).unwrap();
        let ratio = neg_log_posterior(&beta, &prob, &doubled).unwrap() / prob.objective(&beta);
        assert!((ratio - 0.25).abs() < 1e-12);
        assert!(neg_log_posterior(&array![1.0], &prob, &unit).is_err());
    }

    #[test]
    fn objective_never_increases_across_sweeps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = random_design(&mut rng, 25, 8);
            let y = Array1::from_shape_fn(25, |_| rng.sample::<f64, _>(StandardNormal));
            let w = Array1::from_shape_fn(8, |_| rng.gen_range(0.0..3.0));
            let gram = x.t().dot(&x);
            let lin = x.t().dot(&y);
            let solver = GramLasso::new(gram.view(), lin.view(), w.view());
            let mut beta = Array1::zeros(8);
            let mut trace = Vec::new();
            solver.solve_observed(&mut beta, 1e-9, 10_000, &mut |b| trace.push(solver.objective(b)));
            assert!(trace.len() >= 1);
            for pair in trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9 * pair[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn infinite_weight_pins_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_design(&mut rng, 30, 4);
        let gram = x.t().dot(&x);
        let lin = gram.column(2).to_owned();
        let w = array![0.1, 0.1, f64::INFINITY, 0.1];
        let mut beta = Array1::zeros(4);
        let out = GramLasso::new(gram.view(), lin.view(), w.view()).solve(&mut beta, 1e-9, 1000);
        assert!(out.converged);
        assert_eq!(beta[2], 0.0);
    }
}
