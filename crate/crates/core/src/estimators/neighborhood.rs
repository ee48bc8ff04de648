use ndarray::{Array1, Array2, ArrayView1};

use super::{is_nonzero, CombinationRule, EdgeSet};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::homotopy::node_path;
use crate::parallel::try_map_indexed;
use crate::penalty::{build_penalty_field, uniform_penalty_field, DistanceInfo, LinkFunction, PenaltyField};
use crate::solver::{GramLasso, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::tuning::PathAnchor;

/// Penalized regression of one node on all the others. The node's own
/// coefficient is always exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodFit {
    pub node: usize,
    pub coefficients: Array1<f64>,
    pub scale_used: f64,
}

/// `X_c^T X_c` for the column-centered data.
pub(crate) fn centered_gram(data: &DataMatrix) -> Array2<f64> {
    let xc = data.centered();
    xc.t().dot(&xc)
}

/// Solves the regression of node `j` in Gram form, warm-starting from and
/// overwriting `beta`. `tol` is relative to `||X_j||^2`.
pub(crate) fn fit_node(
    gram: &Array2<f64>,
    j: usize,
    weights: ArrayView1<'_, f64>,
    tol: f64,
    max_sweeps: usize,
    beta: &mut Array1<f64>,
) -> Result<()> {
    let mut w = weights.to_owned();
    w[j] = f64::INFINITY;
    let linear = gram.row(j);
    let scale = gram[[j, j]];
    let tol = if scale > 0.0 { tol * scale } else { tol };
    let out = GramLasso::new(gram.view(), linear, w.view()).solve(beta, tol, max_sweeps);
    if out.converged {
        Ok(())
    } else {
        Err(Error::DidNotConverge {
            node: Some(j),
            sweeps: out.sweeps,
            best: Box::new(crate::solver::Coefficients {
                values: beta.clone(),
                kkt_violation: out.kkt,
            }),
        })
    }
}

/// Smallest multiplier of `links` at which every penalized coefficient of
/// node `j` is zero. Unpenalized coordinates (zero link weight) are fitted
/// first and the bound is taken on the resulting residual correlations.
pub(crate) fn lambda_max_gram(gram: &Array2<f64>, j: usize, links: ArrayView1<'_, f64>) -> Result<f64> {
    let p = gram.nrows();
    let penalized: Vec<usize> = (0..p).filter(|&i| i != j && links[i] > 0.0).collect();
    if penalized.is_empty() {
        return Err(Error::AllWeightsZero { node: j });
    }
    let has_free = (0..p).any(|i| i != j && links[i] == 0.0 && gram[[i, i]] > 0.0);
    let grad = if has_free {
        let w = Array1::from_shape_fn(p, |i| if i != j && links[i] == 0.0 { 0.0 } else { f64::INFINITY });
        let solver = GramLasso::new(gram.view(), gram.row(j), w.view());
        let mut beta = Array1::zeros(p);
        solver.solve(&mut beta, DEFAULT_TOL, DEFAULT_MAX_SWEEPS);
        solver.gradient(&beta)
    } else {
        gram.row(j).to_owned()
    };
    let mut lmax = penalized
        .iter()
        .map(|&i| grad[i].abs() / links[i])
        .fold(0.0f64, f64::max);
    // round up until soft-thresholding at lmax zeroes every penalized coordinate
    while lmax > 0.0 && penalized.iter().any(|&i| grad[i].abs() > lmax * links[i]) {
        lmax = lmax.next_up();
    }
    Ok(lmax)
}

fn check_inputs(data: &DataMatrix, p_field: usize) -> Result<()> {
    if data.n_samples() < 2 {
        return Err(Error::InvalidInput(format!(
            "neighborhood selection needs at least 2 samples, got {}",
            data.n_samples()
        )));
    }
    if p_field != data.n_nodes() {
        return Err(Error::DimensionMismatch {
            what: "penalty field nodes",
            expected: data.n_nodes(),
            found: p_field,
        });
    }
    Ok(())
}

/// One weighted-lasso regression per node, with weights taken from row `j`
/// of the penalty field. Regressions run in parallel. The KKT tolerance of
/// node `j` is `tol * ||X_j||^2` on the centered data.
pub fn fit_neighborhoods(
    data: &DataMatrix,
    field: &PenaltyField,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<NeighborhoodFit>> {
    check_inputs(data, field.dim())?;
    fit_neighborhoods_with(&centered_gram(data), field, tol, max_sweeps)
}

/// [`fit_neighborhoods`] on a precomputed centered Gram matrix.
pub fn fit_neighborhoods_with(
    gram: &Array2<f64>,
    field: &PenaltyField,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<NeighborhoodFit>> {
    let p = gram.nrows();
    try_map_indexed(p, |j| {
        let mut beta = Array1::zeros(p);
        fit_node(gram, j, field.weights_for(j), tol, max_sweeps, &mut beta)?;
        Ok(NeighborhoodFit {
            node: j,
            coefficients: beta,
            scale_used: field.scale()[j],
        })
    })
}

/// Edge `(i, j)` is kept when both (and) or either (or) of the coefficients
/// of `i` in the fit of `j` and of `j` in the fit of `i` are nonzero.
pub fn combine(fits: &[NeighborhoodFit], rule: CombinationRule) -> EdgeSet {
    let p = fits.len();
    let mut selected = vec![vec![false; p]; p];
    for fit in fits {
        for (i, &b) in fit.coefficients.iter().enumerate() {
            if i != fit.node && fit.node < p && i < p {
                selected[fit.node][i] = is_nonzero(b);
            }
        }
    }
    let mut edges = EdgeSet::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            let keep = match rule {
                CombinationRule::And => selected[i][j] && selected[j][i],
                CombinationRule::Or => selected[i][j] || selected[j][i],
            };
            if keep {
                edges.insert(i, j).expect("indices in range");
            }
        }
    }
    edges
}

pub fn estimate_si(
    data: &DataMatrix,
    dist: &DistanceInfo,
    link: &LinkFunction,
    scales: &[f64],
    rule: CombinationRule,
) -> Result<EdgeSet> {
    if dist.dim() != data.n_nodes() {
        return Err(Error::DimensionMismatch {
            what: "side-information nodes",
            expected: data.n_nodes(),
            found: dist.dim(),
        });
    }
    let field = build_penalty_field(dist, link, scales)?;
    let fits = fit_neighborhoods(data, &field, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)?;
    Ok(combine(&fits, rule))
}

pub fn estimate_mb(data: &DataMatrix, scales: &[f64], rule: CombinationRule) -> Result<EdgeSet> {
    let field = uniform_penalty_field(data.n_nodes(), scales)?;
    let fits = fit_neighborhoods(data, &field, DEFAULT_TOL, DEFAULT_MAX_SWEEPS)?;
    Ok(combine(&fits, rule))
}

/// Fits along a path of global multipliers: node `j` at multiplier `c` uses
/// weights `c * a_j * links[j][.]`, where `a_j` is `lambda_max(j)` or, with
/// [`PathAnchor::Common`], the largest `lambda_max` over all nodes.
/// Multipliers should be decreasing; each node warm-starts from its previous
/// solution. Returns one fit list per multiplier.
pub fn neighborhood_path(
    data: &DataMatrix,
    links: &Array2<f64>,
    multipliers: &[f64],
    anchor: PathAnchor,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<Vec<NeighborhoodFit>>> {
    check_inputs(data, links.nrows())?;
    let gram = centered_gram(data);
    let p = gram.nrows();
    let anchors = try_map_indexed(p, |j| match lambda_max_gram(&gram, j, links.row(j)) {
        Ok(v) => Ok(v),
        Err(Error::AllWeightsZero { .. }) => Ok(0.0),
        Err(e) => Err(e),
    })?;
    let common = anchors.iter().copied().fold(0.0f64, f64::max);
    let per_node = try_map_indexed(p, |j| {
        let anchor = match anchor {
            PathAnchor::PerNode => anchors[j],
            PathAnchor::Common => common,
        };
        let scales: Vec<f64> = multipliers.iter().map(|c| c * anchor).collect();
        let mut out = Vec::with_capacity(multipliers.len());
        node_path(&gram, j, links.row(j), &scales, tol, max_sweeps, |g, beta| {
            out.push(NeighborhoodFit {
                node: j,
                coefficients: beta.clone(),
                scale_used: scales[g],
            });
            Ok(())
        })?;
        Ok(out)
    })?;
    let mut by_grid: Vec<Vec<NeighborhoodFit>> = (0..multipliers.len()).map(|_| Vec::with_capacity(p)).collect();
    for node_fits in per_node {
        for (g, fit) in node_fits.into_iter().enumerate() {
            by_grid[g].push(fit);
        }
    }
    Ok(by_grid)
}
