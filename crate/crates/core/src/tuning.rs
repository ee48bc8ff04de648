//! Calibration of free parameters: per-node cross-validation for
//! neighborhood selection, BIC for the graphical lasso, edge-count matching
//! for thresholding and oracle (Hamming) tuning on simulated data.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::{sample_covariance, DataMatrix};
use crate::error::{Error, Result};
use crate::estimators::{
    centered_gram, combine, fit_neighborhoods_with, glasso_lambda_max, glasso_path, lambda_max_gram, neighborhood_path,
    partial_correlations, threshold_edges, CombinationRule, EdgeSet, GlassoFit,
};
use crate::homotopy::node_path;
use crate::linalg::cholesky;
use crate::parallel::try_map_indexed;
use crate::penalty::{field_from_link_weights, link_weights, DistanceInfo, LinkFunction};
use crate::rng::stream;
use crate::solver::{DEFAULT_MAX_SWEEPS, DEFAULT_TOL};

pub const DEFAULT_GRID_SIZE: usize = 100;
pub const DEFAULT_GRID_FLOOR: f64 = 0.01;
pub const DEFAULT_FOLDS: usize = 10;
pub const GLASSO_DEFAULT_TOL: f64 = 1e-4;

/// Geometric grid from `origin` down to `floor_ratio * origin`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalePath {
    values: Vec<f64>,
    origin: f64,
}

impl ScalePath {
    pub fn geometric(origin: f64, size: usize, floor_ratio: f64) -> Result<Self> {
        if !(origin.is_finite() && origin > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid origin must be positive, got {origin}"
            )));
        }
        if size == 0 {
            return Err(Error::InvalidInput("grid size must be >= 1".into()));
        }
        if !(floor_ratio > 0.0 && floor_ratio < 1.0) {
            return Err(Error::InvalidInput(format!(
                "grid floor must lie in (0, 1), got {floor_ratio}"
            )));
        }
        let values = if size == 1 {
            vec![origin]
        } else {
            let step = floor_ratio.ln() / (size - 1) as f64;
            let mut v: Vec<f64> = (0..size).map(|k| origin * (step * k as f64).exp()).collect();
            v[0] = origin;
            v[size - 1] = origin * floor_ratio;
            v
        };
        Ok(Self { values, origin })
    }

    /// Arbitrary decreasing values; `origin` is the first.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("grid must be nonempty".into()));
        }
        if values.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput("grid values must be strictly decreasing".into()));
        }
        Ok(Self {
            origin: values[0],
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub grid_floor_ratio: f64,
}

impl CvConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            seed,
            grid_size: DEFAULT_GRID_SIZE,
            grid_floor_ratio: DEFAULT_GRID_FLOOR,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.folds < 2 || self.folds > n {
            return Err(Error::InvalidInput(format!(
                "folds must lie in [2, n = {n}], got {}",
                self.folds
            )));
        }
        ScalePath::geometric(1.0, self.grid_size, self.grid_floor_ratio)?;
        Ok(())
    }
}

/// Smallest scale at which every penalized coefficient of node `node` is
/// zero, for the centered data.
pub fn lambda_max(data: &DataMatrix, node: usize, link_weights: &[f64]) -> Result<f64> {
    let p = data.n_nodes();
    if node >= p || link_weights.len() != p {
        return Err(Error::DimensionMismatch {
            what: "link weights",
            expected: p,
            found: link_weights.len(),
        });
    }
    lambda_max_gram(&centered_gram(data), node, ArrayView1::from(link_weights))
}

/// Fold id of every row: rows `0..n` are shuffled by the seeded stream and
/// dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, 0));
    let mut fold = vec![0; n];
    for (k, &row) in order.iter().enumerate() {
        fold[row] = k % folds;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub node: usize,
    pub scale: f64,
    /// Index of `scale` in `grid`; `None` when the node has no penalized
    /// coefficient or zero correlation with every other node.
    pub index: Option<usize>,
    pub grid: Vec<f64>,
    /// Mean out-of-fold squared prediction error per grid point.
    pub cv_curve: Vec<f64>,
}

struct Fold {
    gram: Array2<f64>,
    /// Held-out rows centered with the training means.
    test: Array2<f64>,
    /// Training rows over all rows.
    ratio: f64,
}

struct CvPrep {
    gram: Array2<f64>,
    folds: Vec<Fold>,
    n: usize,
}

impl CvPrep {
    fn new(data: &DataMatrix, cfg: &CvConfig) -> Result<Self> {
        let n = data.n_samples();
        cfg.validate(n)?;
        let assign = fold_assignment(n, cfg.folds, cfg.seed);
        let folds = (0..cfg.folds)
            .map(|f| {
                let train: Vec<usize> = (0..n).filter(|&r| assign[r] != f).collect();
                let test: Vec<usize> = (0..n).filter(|&r| assign[r] == f).collect();
                let tr = data.select_rows(&train);
                let means = tr.column_means();
                let xc = tr.centered();
                let te = data.select_rows(&test).into_inner() - &means;
                Fold {
                    gram: xc.t().dot(&xc),
                    test: te,
                    ratio: train.len() as f64 / n as f64,
                }
            })
            .collect();
        Ok(Self {
            gram: centered_gram(data),
            folds,
            n,
        })
    }

    fn select(&self, j: usize, links: ArrayView1<'_, f64>, cfg: &CvConfig) -> Result<CvResult> {
        let degenerate = CvResult {
            node: j,
            scale: 0.0,
            index: None,
            grid: Vec::new(),
            cv_curve: Vec::new(),
        };
        let anchor = match lambda_max_gram(&self.gram, j, links) {
            Ok(v) if v > 0.0 => v,
            Ok(_) | Err(Error::AllWeightsZero { .. }) => return Ok(degenerate),
            Err(e) => return Err(e),
        };
        let grid = ScalePath::geometric(anchor, cfg.grid_size, cfg.grid_floor_ratio)?;
        let mut sse = vec![0.0; grid.len()];
        for fold in &self.folds {
            let scales: Vec<f64> = grid.values().iter().map(|s| s * fold.ratio).collect();
            node_path(
                &fold.gram,
                j,
                links,
                &scales,
                DEFAULT_TOL,
                DEFAULT_MAX_SWEEPS,
                |g, beta| {
                    sse[g] += held_out_sse(&fold.test, j, beta);
                    Ok(())
                },
            )?;
        }
        let cv_curve: Vec<f64> = sse.iter().map(|s| s / self.n as f64).collect();
        let index = argmin_first(&cv_curve);
        Ok(CvResult {
            node: j,
            scale: grid.values()[index],
            index: Some(index),
            grid: grid.values().to_vec(),
            cv_curve,
        })
    }
}

fn held_out_sse(test: &Array2<f64>, j: usize, beta: &Array1<f64>) -> f64 {
    let pred = test.dot(beta);
    test.column(j)
        .iter()
        .zip(pred.iter())
        .map(|(y, f)| (y - f) * (y - f))
        .sum()
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = k;
        }
    }
    best
}

/// Cross-validated scale for one node. `link_weights[i]` multiplies the
/// scale on coefficient `i`; entry `node` is ignored.
pub fn cv_select_scale(data: &DataMatrix, node: usize, link_weights: &[f64], cfg: &CvConfig) -> Result<CvResult> {
    let p = data.n_nodes();
    if node >= p || link_weights.len() != p {
        return Err(Error::DimensionMismatch {
            what: "link weights",
            expected: p,
            found: link_weights.len(),
        });
    }
    CvPrep::new(data, cfg)?.select(node, ArrayView1::from(link_weights), cfg)
}

/// Independent cross-validated scale for every node; row `j` of `links`
/// holds the link weights of node `j`. Folds are shared across nodes.
pub fn cv_select_all(data: &DataMatrix, links: &Array2<f64>, cfg: &CvConfig) -> Result<Vec<CvResult>> {
    let p = data.n_nodes();
    if links.dim() != (p, p) {
        return Err(Error::DimensionMismatch {
            what: "link weight rows",
            expected: p,
            found: links.nrows(),
        });
    }
    let prep = CvPrep::new(data, cfg)?;
    try_map_indexed(p, |j| prep.select(j, links.row(j), cfg).map_err(|e| e.at_node(j)))
}

#[derive(Debug, Clone, Serialize)]
pub struct BicResult {
    pub lambda: f64,
    pub index: usize,
    pub grid: Vec<f64>,
    pub bic_curve: Vec<f64>,
    pub edge_counts: Vec<usize>,
    #[serde(skip)]
    pub fit: GlassoFit,
}

/// `n (tr(S Theta) - log det Theta) + log(n) k`, `k` the off-diagonal
/// support size of `Theta` (upper triangle).
pub fn glasso_bic(s: &crate::linalg::SymmetricMatrix, fit: &GlassoFit, n: usize) -> Result<f64> {
    let theta = fit.precision.as_array();
    let tr: f64 = (s.as_array() * theta).sum();
    let logdet = cholesky(&fit.precision)?.log_det();
    let nf = n as f64;
    Ok(nf * (tr - logdet) + nf.ln() * fit.edges.len() as f64)
}

/// Graphical-lasso penalty with minimal BIC over `grid` (solved sparsest
/// first with warm starts); ties go to the larger penalty.
pub fn bic_select_glasso(data: &DataMatrix, grid: &ScalePath, tol: f64, max_sweeps: usize) -> Result<BicResult> {
    let s = sample_covariance(data);
    let fits = glasso_path(&s, grid.values(), tol, max_sweeps)?;
    let bic_curve = fits
        .iter()
        .map(|f| glasso_bic(&s, f, data.n_samples()))
        .collect::<Result<Vec<f64>>>()?;
    let index = argmin_first(&bic_curve);
    let edge_counts = fits.iter().map(|f| f.edges.len()).collect();
    let fit = fits.into_iter().nth(index).expect("index within grid");
    Ok(BicResult {
        lambda: grid.values()[index],
        index,
        grid: grid.values().to_vec(),
        bic_curve,
        edge_counts,
        fit,
    })
}

/// Default graphical-lasso grid: geometric from the largest off-diagonal
/// sample covariance.
pub fn glasso_grid(data: &DataMatrix, size: usize, floor_ratio: f64) -> Result<ScalePath> {
    let lmax = glasso_lambda_max(&sample_covariance(data));
    ScalePath::geometric(if lmax > 0.0 { lmax } else { 1.0 }, size, floor_ratio)
}

/// Smallest threshold leaving at most `target_edges` partial correlations
/// strictly above it. `target_edges == 0` returns 1.
pub fn match_edge_count_threshold(data: &DataMatrix, target_edges: usize) -> Result<f64> {
    let rho = partial_correlations(data)?;
    let p = rho.dim();
    if target_edges == 0 {
        return Ok(1.0);
    }
    let mut mags: Vec<f64> = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            mags.push(rho.get(i, j).abs());
        }
    }
    if target_edges >= mags.len() {
        return Ok(0.0);
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    Ok(mags[target_edges])
}

/// A graph estimator driven by one scalar parameter. Parameters are given
/// in decreasing order, which for every built-in estimator means sparsest
/// first.
pub trait PathEstimator: Sync {
    fn name(&self) -> String;

    /// Default decreasing parameter grid for `data`.
    fn default_grid(&self, data: &DataMatrix, size: usize, floor_ratio: f64) -> Result<ScalePath>;

    /// One edge set per parameter.
    fn path(&self, data: &DataMatrix, params: &[f64]) -> Result<Vec<EdgeSet>>;
}

/// How a scalar path parameter `c` becomes per-node scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathAnchor {
    /// Node `j` uses `c * lambda_max(j)`.
    #[default]
    PerNode,
    /// Every node uses `c * max_j lambda_max(j)`.
    Common,
}

/// Neighborhood selection along a global multiplier `c`; see
/// [`PathAnchor`]. The grid runs from 1 down to the floor.
#[derive(Debug, Clone)]
pub struct NeighborhoodSelection {
    label: String,
    side_info: Option<(DistanceInfo, LinkFunction)>,
    pub rule: CombinationRule,
    pub anchor: PathAnchor,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl NeighborhoodSelection {
    pub fn mb(rule: CombinationRule) -> Self {
        Self {
            label: format!("mb-{rule}"),
            side_info: None,
            rule,
            anchor: PathAnchor::PerNode,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn si(dist: DistanceInfo, link: LinkFunction, rule: CombinationRule) -> Self {
        Self {
            label: format!("si-{rule}"),
            side_info: Some((dist, link)),
            rule,
            anchor: PathAnchor::PerNode,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn with_anchor(mut self, anchor: PathAnchor) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn links(&self, p: usize) -> Result<Array2<f64>> {
        link_weights(self.side_info.as_ref().map(|(d, f)| (d, f)), p)
    }
}

impl PathEstimator for NeighborhoodSelection {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn default_grid(&self, _data: &DataMatrix, size: usize, floor_ratio: f64) -> Result<ScalePath> {
        ScalePath::geometric(1.0, size, floor_ratio)
    }

    fn path(&self, data: &DataMatrix, params: &[f64]) -> Result<Vec<EdgeSet>> {
        let links = self.links(data.n_nodes())?;
        let fits = neighborhood_path(data, &links, params, self.anchor, self.tol, self.max_sweeps)?;
        Ok(fits.iter().map(|f| combine(f, self.rule)).collect())
    }
}

/// Partial-correlation thresholding; the parameter is the threshold and the
/// grid starts at the largest `|rho_ij|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Thresholding;

impl PathEstimator for Thresholding {
    fn name(&self) -> String {
        "thr".into()
    }

    fn default_grid(&self, data: &DataMatrix, size: usize, floor_ratio: f64) -> Result<ScalePath> {
        let rho = partial_correlations(data)?;
        let p = rho.dim();
        let mut m = 0.0f64;
        for i in 0..p {
            for j in (i + 1)..p {
                m = m.max(rho.get(i, j).abs());
            }
        }
        ScalePath::geometric(if m > 0.0 { m } else { 1.0 }, size, floor_ratio)
    }

    fn path(&self, data: &DataMatrix, params: &[f64]) -> Result<Vec<EdgeSet>> {
        let rho = partial_correlations(data)?;
        Ok(params.iter().map(|&t| threshold_edges(&rho, t)).collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GraphicalLasso {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for GraphicalLasso {
    fn default() -> Self {
        Self {
            tol: GLASSO_DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

impl PathEstimator for GraphicalLasso {
    fn name(&self) -> String {
        "glasso".into()
    }

    fn default_grid(&self, data: &DataMatrix, size: usize, floor_ratio: f64) -> Result<ScalePath> {
        glasso_grid(data, size, floor_ratio)
    }

    fn path(&self, data: &DataMatrix, params: &[f64]) -> Result<Vec<EdgeSet>> {
        let fits = glasso_path(&sample_covariance(data), params, self.tol, self.max_sweeps)?;
        Ok(fits.into_iter().map(|f| f.edges).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub param: f64,
    pub index: usize,
    pub hamming: usize,
    pub hamming_curve: Vec<usize>,
}

/// Grid parameter whose estimate is closest to `truth` in Hamming
/// distance; ties go to the earlier (sparser) grid point.
pub fn oracle_tune(
    method: &dyn PathEstimator,
    data: &DataMatrix,
    truth: &EdgeSet,
    grid: &ScalePath,
) -> Result<OracleResult> {
    if truth.dim() != data.n_nodes() {
        return Err(Error::DimensionMismatch {
            what: "truth nodes",
            expected: data.n_nodes(),
            found: truth.dim(),
        });
    }
    let path = method.path(data, grid.values())?;
    let hamming_curve: Vec<usize> = path.iter().map(|e| e.symmetric_difference_len(truth)).collect();
    let mut index = 0;
    for (k, &h) in hamming_curve.iter().enumerate() {
        if h < hamming_curve[index] {
            index = k;
        }
    }
    Ok(OracleResult {
        param: grid.values()[index],
        index,
        hamming: hamming_curve[index],
        hamming_curve,
    })
}

/// A graph estimator that calibrates itself on the data it is given.
pub trait CalibratedEstimator: Sync {
    fn name(&self) -> String;

    fn estimate(&self, data: &DataMatrix) -> Result<EdgeSet>;
}

/// Neighborhood selection with per-node cross-validated scales.
#[derive(Debug, Clone)]
pub struct CvNeighborhood {
    pub selection: NeighborhoodSelection,
    pub cv: CvConfig,
}

#[derive(Debug, Clone)]
pub struct CvFit {
    pub edges: EdgeSet,
    pub nodes: Vec<CvResult>,
}

impl CvNeighborhood {
    pub fn fit(&self, data: &DataMatrix) -> Result<CvFit> {
        let links = self.selection.links(data.n_nodes())?;
        let nodes = cv_select_all(data, &links, &self.cv)?;
        let scales: Vec<f64> = nodes.iter().map(|r| r.scale).collect();
        let field = field_from_link_weights(&links, &scales)?;
        let fits = fit_neighborhoods_with(
            &centered_gram(data),
            &field,
            self.selection.tol,
            self.selection.max_sweeps,
        )?;
        Ok(CvFit {
            edges: combine(&fits, self.selection.rule),
            nodes,
        })
    }
}

impl CalibratedEstimator for CvNeighborhood {
    fn name(&self) -> String {
        self.selection.name()
    }

    fn estimate(&self, data: &DataMatrix) -> Result<EdgeSet> {
        Ok(self.fit(data)?.edges)
    }
}

/// Graphical lasso at the BIC-minimizing penalty of its default grid.
#[derive(Debug, Clone, Copy)]
pub struct BicGlasso {
    pub glasso: GraphicalLasso,
    pub grid_size: usize,
    pub grid_floor_ratio: f64,
}

impl Default for BicGlasso {
    fn default() -> Self {
        Self {
            glasso: GraphicalLasso::default(),
            grid_size: DEFAULT_GRID_SIZE,
            grid_floor_ratio: DEFAULT_GRID_FLOOR,
        }
    }
}

impl BicGlasso {
    pub fn fit(&self, data: &DataMatrix) -> Result<BicResult> {
        let grid = glasso_grid(data, self.grid_size, self.grid_floor_ratio)?;
        bic_select_glasso(data, &grid, self.glasso.tol, self.glasso.max_sweeps)
    }
}

impl CalibratedEstimator for BicGlasso {
    fn name(&self) -> String {
        "glasso".into()
    }

    fn estimate(&self, data: &DataMatrix) -> Result<EdgeSet> {
        Ok(self.fit(data)?.fit.edges)
    }
}
