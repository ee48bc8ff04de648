//! Graph estimators: neighborhood selection (plain and side-information
//! weighted), partial-correlation thresholding and the graphical lasso.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod glasso;
mod neighborhood;
mod threshold;

pub use glasso::{estimate_glasso, glasso_lambda_max, glasso_path, GlassoFit};
pub use neighborhood::{
    combine, estimate_mb, estimate_si, fit_neighborhoods, fit_neighborhoods_with, neighborhood_path, NeighborhoodFit,
};
pub use threshold::{estimate_thr, partial_correlations};

pub(crate) use neighborhood::{centered_gram, fit_node, lambda_max_gram};
pub(crate) use threshold::threshold_edges;

/// Coefficients with magnitude at or below this count as zero.
pub const NONZERO_THRESHOLD: f64 = 1e-10;

/// Undirected simple graph on `dim` nodes, stored as sorted pairs `(i, j)`
/// with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeSet {
    dim: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            edges: BTreeSet::new(),
        }
    }

    pub fn complete(dim: usize) -> Self {
        let mut s = Self::empty(dim);
        for i in 0..dim {
            for j in (i + 1)..dim {
                s.edges.insert((i, j));
            }
        }
        s
    }

    pub fn from_pairs<I>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut s = Self::empty(dim);
        for (i, j) in pairs {
            s.insert(i, j)?;
        }
        Ok(s)
    }

    /// Adds the edge `{i, j}`; returns whether it was new.
    pub fn insert(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j {
            return Err(Error::InvalidInput(format!("self-loop at node {i}")));
        }
        if i >= self.dim || j >= self.dim {
            return Err(Error::InvalidInput(format!(
                "edge ({i}, {j}) out of range for {} nodes",
                self.dim
            )));
        }
        Ok(self.edges.insert((i.min(j), i.max(j))))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Number of unordered node pairs, `dim (dim - 1) / 2`.
    pub fn max_edges(&self) -> usize {
        self.dim * self.dim.saturating_sub(1) / 2
    }

    pub fn intersection_len(&self, other: &EdgeSet) -> usize {
        self.edges.intersection(&other.edges).count()
    }

    pub fn symmetric_difference_len(&self, other: &EdgeSet) -> usize {
        self.edges.symmetric_difference(&other.edges).count()
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.is_subset(&other.edges)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.dim];
        for (i, j) in self.iter() {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    /// Relabels nodes consistently with [`crate::DataMatrix::permute_columns`]:
    /// node `k` of the result is node `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> EdgeSet {
        let mut inverse = vec![0; perm.len()];
        for (k, &old) in perm.iter().enumerate() {
            inverse[old] = k;
        }
        let edges = self
            .iter()
            .map(|(i, j)| {
                let (a, b) = (inverse[i], inverse[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        EdgeSet { dim: self.dim, edges }
    }
}

/// How the two node-wise coefficients of a pair decide an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinationRule {
    /// Both coefficients nonzero.
    #[default]
    And,
    /// Either coefficient nonzero.
    Or,
}

impl fmt::Display for CombinationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombinationRule::And => write!(f, "and"),
            CombinationRule::Or => write!(f, "or"),
        }
    }
}

impl FromStr for CombinationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "and" => Ok(CombinationRule::And),
            "or" => Ok(CombinationRule::Or),
            other => Err(Error::InvalidInput(format!("unknown rule '{other}' (and|or)"))),
        }
    }
}

pub(crate) fn is_nonzero(v: f64) -> bool {
    v.abs() > NONZERO_THRESHOLD
}
