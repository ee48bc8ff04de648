//! Piecewise-linear weighted lasso path for one node regression in Gram
//! form. Between breakpoints the active coefficients are affine in the
//! scale, so the path is followed exactly with rank-one Cholesky updates.
//! Every requested point is checked against the KKT conditions and handed
//! to coordinate descent when the check fails.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::Result;
use crate::estimators::fit_node;

const PIVOT_FLOOR: f64 = 1e-10;

enum Event {
    Join(usize, f64),
    Leave(usize),
}

struct State<'a> {
    gram: &'a Array2<f64>,
    linear: ArrayView1<'a, f64>,
    weights: Array1<f64>,
    active: Vec<usize>,
    signs: Vec<f64>,
    member: Vec<bool>,
    /// Row-major Cholesky factor of the active block, row stride `p`.
    lower: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    gu: Vec<f64>,
    gv: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(gram: &'a Array2<f64>, j: usize, links: ArrayView1<'_, f64>) -> Self {
        let p = gram.nrows();
        let mut weights = links.to_owned();
        weights[j] = f64::INFINITY;
        for i in 0..p {
            if gram[[i, i]] <= 0.0 {
                weights[i] = f64::INFINITY;
            }
        }
        State {
            gram,
            linear: gram.row(j),
            weights,
            active: Vec::with_capacity(p),
            signs: Vec::with_capacity(p),
            member: vec![false; p],
            lower: vec![0.0; p * p],
            u: Vec::new(),
            v: Vec::new(),
            gu: vec![0.0; p],
            gv: vec![0.0; p],
        }
    }

    fn excluded(&self, i: usize) -> bool {
        self.weights[i].is_infinite()
    }

    /// Resets the active set to the unpenalized coordinates plus the
    /// support of `beta`. Fails on a singular active block.
    fn rebuild(&mut self, beta: &Array1<f64>) -> bool {
        self.active.clear();
        self.signs.clear();
        self.member.iter_mut().for_each(|m| *m = false);
        for i in 0..beta.len() {
            if self.excluded(i) {
                continue;
            }
            if self.weights[i] == 0.0 || beta[i] != 0.0 {
                let s = if self.weights[i] == 0.0 { 0.0 } else { beta[i].signum() };
                if !self.add(i, s) {
                    return false;
                }
            }
        }
        self.refresh();
        true
    }

    fn row(&self, a: usize) -> &[f64] {
        let p = self.gram.nrows();
        &self.lower[a * p..a * p + a + 1]
    }

    fn add(&mut self, i: usize, sign: f64) -> bool {
        let p = self.gram.nrows();
        let m = self.active.len();
        let mut y: Vec<f64> = self.active.iter().map(|&a| self.gram[[a, i]]).collect();
        self.forward(&mut y);
        let gii = self.gram[[i, i]];
        let d2 = gii - y.iter().map(|x| x * x).sum::<f64>();
        if !(d2 > PIVOT_FLOOR * gii) {
            return false;
        }
        self.lower[m * p..m * p + m].copy_from_slice(&y);
        self.lower[m * p + m] = d2.sqrt();
        self.active.push(i);
        self.signs.push(sign);
        self.member[i] = true;
        true
    }

    fn remove(&mut self, k: usize) {
        let p = self.gram.nrows();
        let m = self.active.len();
        for r in k..m - 1 {
            self.lower.copy_within((r + 1) * p..(r + 1) * p + r + 2, r * p);
        }
        for c in k..m - 1 {
            let (a, b) = (self.lower[c * p + c], self.lower[c * p + c + 1]);
            let r = a.hypot(b);
            let (cs, sn) = (a / r, b / r);
            for row in c..m - 1 {
                let (x, y) = (self.lower[row * p + c], self.lower[row * p + c + 1]);
                self.lower[row * p + c] = cs * x + sn * y;
                self.lower[row * p + c + 1] = cs * y - sn * x;
            }
            self.lower[c * p + c + 1] = 0.0;
        }
        self.lower[(m - 1) * p..m * p].iter_mut().for_each(|x| *x = 0.0);
        let i = self.active.remove(k);
        self.signs.remove(k);
        self.member[i] = false;
    }

    fn forward(&self, rhs: &mut [f64]) {
        for a in 0..rhs.len() {
            let row = self.row(a);
            let s: f64 = row[..a].iter().zip(&rhs[..a]).map(|(l, x)| l * x).sum();
            rhs[a] = (rhs[a] - s) / row[a];
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        self.forward(rhs);
        for a in (0..rhs.len()).rev() {
            let row = self.row(a);
            rhs[a] /= row[a];
            let x = rhs[a];
            rhs[..a].iter_mut().zip(&row[..a]).for_each(|(r, l)| *r -= l * x);
        }
    }

    fn refresh(&mut self) {
        let mut u: Vec<f64> = self.active.iter().map(|&i| self.linear[i]).collect();
        let mut v: Vec<f64> = self
            .active
            .iter()
            .zip(&self.signs)
            .map(|(&i, &s)| if s == 0.0 { 0.0 } else { self.weights[i] * s })
            .collect();
        self.solve(&mut u);
        self.solve(&mut v);
        self.gu.iter_mut().for_each(|x| *x = 0.0);
        self.gv.iter_mut().for_each(|x| *x = 0.0);
        for (k, &i) in self.active.iter().enumerate() {
            let row = self.gram.row(i);
            let row = row.as_slice().expect("gram is row-major");
            let (uk, vk) = (u[k], v[k]);
            for ((a, b), g) in self.gu.iter_mut().zip(self.gv.iter_mut()).zip(row) {
                *a += uk * g;
                *b += vk * g;
            }
        }
        self.u = u;
        self.v = v;
    }

    fn beta_at(&self, t: f64) -> Array1<f64> {
        let mut beta = Array1::zeros(self.gram.nrows());
        for (a, &i) in self.active.iter().enumerate() {
            beta[i] = self.u[a] - t * self.v[a];
        }
        beta
    }

    /// Residual correlation of inactive coordinate `i` is `a + t b`.
    fn affine(&self, i: usize) -> (f64, f64) {
        (self.linear[i] - self.gu[i], self.gv[i])
    }

    /// Largest scale at or below `t` where the active set changes.
    fn next_event(&self, t: f64, skip: Option<usize>) -> Option<(f64, Event)> {
        let ceiling = t * (1.0 + 1e-12);
        let mut best: Option<(f64, Event)> = None;
        let offer = |lam: f64, ev: Event, best: &mut Option<(f64, Event)>| {
            if lam > 0.0 && lam <= ceiling && best.as_ref().map_or(true, |(b, _)| lam > *b) {
                *best = Some((lam.min(t), ev));
            }
        };
        for i in 0..self.gram.nrows() {
            if self.member[i] || self.excluded(i) || Some(i) == skip {
                continue;
            }
            let w = self.weights[i];
            let (a, b) = self.affine(i);
            if w - b != 0.0 {
                offer(a / (w - b), Event::Join(i, 1.0), &mut best);
            }
            if w + b != 0.0 {
                offer(-a / (w + b), Event::Join(i, -1.0), &mut best);
            }
        }
        for (k, &i) in self.active.iter().enumerate() {
            if self.signs[k] == 0.0 || Some(i) == skip || self.v[k] == 0.0 {
                continue;
            }
            offer(self.u[k] / self.v[k], Event::Leave(k), &mut best);
        }
        best
    }

    fn kkt(&self, beta: &Array1<f64>, t: f64) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..beta.len() {
            if self.excluded(i) {
                continue;
            }
            let (a, b) = self.affine(i);
            let grad = a + t * b;
            let w = t * self.weights[i];
            let r = if beta[i] == 0.0 {
                (grad.abs() - w).max(0.0)
            } else {
                (grad - w * beta[i].signum()).abs()
            };
            worst = worst.max(r);
        }
        worst
    }
}

/// Visits the coefficients of node `j` at each of `scales` (decreasing),
/// the penalty on coefficient `i` being `scale * links[i]`. `tol` is the
/// relative KKT tolerance used by the node solver.
pub(crate) fn node_path(
    gram: &Array2<f64>,
    j: usize,
    links: ArrayView1<'_, f64>,
    scales: &[f64],
    tol: f64,
    max_sweeps: usize,
    mut visit: impl FnMut(usize, &Array1<f64>) -> Result<()>,
) -> Result<()> {
    let p = gram.nrows();
    let abs_tol = if gram[[j, j]] > 0.0 { tol * gram[[j, j]] } else { tol };
    let mut state = State::new(gram, j, links);
    let mut exact = state.rebuild(&Array1::zeros(p));
    let mut t = f64::INFINITY;
    let mut skip = None;
    let mut events = 0usize;
    let budget = 20 * p + 100;
    let mut beta = Array1::zeros(p);
    for (g, &tg) in scales.iter().enumerate() {
        if exact {
            while let Some((te, ev)) = state.next_event(t, skip) {
                if te <= tg {
                    break;
                }
                events += 1;
                t = te;
                match ev {
                    Event::Join(i, s) => {
                        if !state.add(i, s) {
                            exact = false;
                            break;
                        }
                        skip = Some(i);
                    }
                    Event::Leave(k) => {
                        skip = Some(state.active[k]);
                        state.remove(k);
                    }
                }
                state.refresh();
                if events > budget {
                    exact = false;
                    break;
                }
            }
        }
        if exact {
            let candidate = state.beta_at(tg);
            if candidate.iter().all(|b| b.is_finite()) && state.kkt(&candidate, tg) <= abs_tol {
                beta = candidate;
                t = tg;
                visit(g, &beta)?;
                continue;
            }
        }
        let w = links.mapv(|l| l * tg);
        fit_node(gram, j, w.view(), tol, max_sweeps, &mut beta)?;
        exact = state.rebuild(&beta);
        t = tg;
        skip = None;
        visit(g, &beta)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::centered_gram;
    use crate::solver::{DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
    use crate::DataMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gram(seed: u64, n: usize, p: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        centered_gram(&DataMatrix::new(x).unwrap())
    }

    fn grid(top: f64, k: usize) -> Vec<f64> {
        (0..k).map(|g| top * 0.01f64.powf(g as f64 / (k - 1) as f64)).collect()
    }

    fn compare(g: &Array2<f64>, j: usize, links: &Array1<f64>, scales: &[f64]) {
        let mut path = Vec::new();
        node_path(g, j, links.view(), scales, DEFAULT_TOL, DEFAULT_MAX_SWEEPS, |_, b| {
            path.push(b.clone());
            Ok(())
        })
        .unwrap();
        let mut beta = Array1::zeros(g.nrows());
        for (k, &s) in scales.iter().enumerate() {
            let w = links.mapv(|l| l * s);
            fit_node(g, j, w.view(), 1e-10, 100_000, &mut beta).unwrap();
            let gap = (&path[k] - &beta).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            assert!(gap < 1e-3, "scale {s}: gap {gap}");
        }
    }

    #[test]
    fn matches_coordinate_descent_when_n_exceeds_p() {
        let g = gram(1, 60, 12);
        let links = Array1::ones(12);
        compare(
            &g,
            2,
            &links,
            &grid(g.row(2).iter().map(|v| v.abs()).fold(0.0, f64::max), 40),
        );
    }

    #[test]
    fn matches_coordinate_descent_when_p_exceeds_n() {
        let g = gram(2, 20, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let links = Array1::from_shape_fn(40, |_| rng.gen_range(0.2..3.0));
        compare(&g, 5, &links, &grid(50.0, 60));
    }

    #[test]
    fn unpenalized_coordinates_stay_in() {
        let g = gram(3, 50, 8);
        let mut links = Array1::ones(8);
        links[4] = 0.0;
        links[6] = f64::INFINITY;
        compare(&g, 0, &links, &grid(100.0, 30));
        let mut seen = 0;
        node_path(&g, 0, links.view(), &[1e6], DEFAULT_TOL, DEFAULT_MAX_SWEEPS, |_, b| {
            assert!(b[4] != 0.0 && b[6] == 0.0);
            assert_eq!(b.iter().filter(|v| **v != 0.0).count(), 1);
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 1);
    }

    #[test]
    fn downdate_keeps_factor() {
        let g = gram(4, 30, 6);
        let mut s = State::new(&g, 0, Array1::ones(6).view());
        for i in 1..6 {
            assert!(s.add(i, 1.0));
        }
        s.remove(1);
        s.remove(2);
        let m = s.active.len();
        let l = Array2::from_shape_fn((m, m), |(a, b)| s.lower[a * 6 + b]);
        let back = l.dot(&l.t());
        for a in 0..m {
            for b in 0..m {
                assert!((back[[a, b]] - g[[s.active[a], s.active[b]]]).abs() < 1e-9);
            }
        }
    }
}
