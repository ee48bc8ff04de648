use thiserror::Error;

use crate::solver::Coefficients;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is singular (smallest |eigenvalue| {min_abs_eigenvalue:e})")]
    SingularMatrix { min_abs_eigenvalue: f64 },

    #[error("eigendecomposition did not converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{}", did_not_converge_message(*.node, .best.kkt_violation, *.sweeps))]
    DidNotConverge {
        node: Option<usize>,
        sweeps: usize,
        best: Box<Coefficients>,
    },

    #[error("graphical lasso did not converge at lambda {lambda:e} within {sweeps} sweeps")]
    GlassoDidNotConverge { lambda: f64, sweeps: usize },

    #[error("all penalty weights of node {node} are zero; no penalized coefficient to anchor a grid")]
    AllWeightsZero { node: usize },

    #[error("requires more samples than nodes (n = {n}, p = {p}); thresholding needs p <= n and an invertible sample covariance")]
    RequiresMoreSamples { n: usize, p: usize },

    #[error("off-diagonal matrix has a degenerate spectrum (all eigenvalues equal)")]
    DegenerateSpectrum,

    #[error("both edge sets are empty; percentage agreement is undefined")]
    BothEmpty,

    #[error("true edge set is empty; true positive rate is undefined")]
    EmptyTruth,

    #[error("curve lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn did_not_converge_message(node: Option<usize>, kkt: f64, sweeps: usize) -> String {
    match node {
        Some(j) => {
            format!("coordinate descent for node {j} did not converge after {sweeps} sweeps (kkt violation {kkt:e})")
        }
        None => format!("coordinate descent did not converge after {sweeps} sweeps (kkt violation {kkt:e})"),
    }
}

impl Error {
    /// Attaches a node index to a solver non-convergence error.
    pub fn at_node(self, j: usize) -> Self {
        match self {
            Error::DidNotConverge { sweeps, best, .. } => Error::DidNotConverge {
                node: Some(j),
                sweeps,
                best,
            },
            other => other,
        }
    }
}
