//! Side information and the per-coefficient penalty weights derived from it.
//!
//! The weight on coefficient `i` of the regression for node `j` is
//! `scale[j] * f(D[i][j])`. Distances are used as given; their overall
//! magnitude is absorbed by the per-node scale during tuning.

use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

const COORDINATE_TOLERANCE: f64 = 1e-9;

/// Symmetric, nonnegative, zero-diagonal side-information matrix, optionally
/// backed by 3-D node coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceInfo {
    matrix: Array2<f64>,
    coordinates: Option<Array2<f64>>,
}

impl DistanceInfo {
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        let (p, c) = matrix.dim();
        if p != c {
            return Err(Error::DimensionMismatch {
                what: "distance matrix columns",
                expected: p,
                found: c,
            });
        }
        if p == 0 {
            return Err(Error::InvalidInput("distance matrix is empty".into()));
        }
        for i in 0..p {
            if matrix[[i, i]] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "distance matrix diagonal entry {i} is {} (must be 0)",
                    matrix[[i, i]]
                )));
            }
            for j in 0..p {
                let v = matrix[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "distance ({i}, {j}) = {v} is not a finite nonnegative value"
                    )));
                }
                if v != matrix[[j, i]] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self {
            matrix,
            coordinates: None,
        })
    }

    /// Pairwise Euclidean distances between the rows of a `p x 3` array.
    pub fn from_coordinates(coordinates: Array2<f64>) -> Result<Self> {
        if coordinates.ncols() != 3 {
            return Err(Error::DimensionMismatch {
                what: "coordinate columns",
                expected: 3,
                found: coordinates.ncols(),
            });
        }
        if coordinates.nrows() == 0 {
            return Err(Error::InvalidInput("coordinate table is empty".into()));
        }
        if coordinates.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("coordinates contain non-finite values".into()));
        }
        let p = coordinates.nrows();
        let mut matrix = Array2::<f64>::zeros((p, p));
        for i in 0..p {
            for j in (i + 1)..p {
                let d = euclid(coordinates.row(i), coordinates.row(j));
                matrix[[i, j]] = d;
                matrix[[j, i]] = d;
            }
        }
        Ok(Self {
            matrix,
            coordinates: Some(coordinates),
        })
    }

    /// Attaches coordinates to an existing matrix after checking that they
    /// reproduce it.
    pub fn with_coordinates(self, coordinates: Array2<f64>) -> Result<Self> {
        let other = Self::from_coordinates(coordinates)?;
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "coordinate rows",
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let worst = (&other.matrix - &self.matrix)
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        if worst > COORDINATE_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "coordinates disagree with the distance matrix by {worst:e}"
            )));
        }
        Ok(Self {
            matrix: self.matrix,
            coordinates: other.coordinates,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn coordinates(&self) -> Option<&Array2<f64>> {
        self.coordinates.as_ref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[[i, j]]
    }

    /// Relabels nodes: node `k` of the result is node `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let p = self.dim();
        let matrix = Array2::from_shape_fn((p, p), |(i, j)| self.matrix[[perm[i], perm[j]]]);
        let coordinates = self.coordinates.as_ref().map(|c| c.select(ndarray::Axis(0), perm));
        Self { matrix, coordinates }
    }
}

fn euclid(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Piecewise-linear lookup table, constant beyond its end points.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl LookupTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("link table has no points".into()));
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "link table abscissae must be strictly increasing".into(),
            ));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) || ys.iter().any(|&y| y < 0.0) {
            return Err(Error::InvalidInput(
                "link table values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }
}

/// Map from side information to a penalty multiplier.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkFunction {
    /// `f(x) = x^k`, `k > 0`.
    Power(f64),
    Identity,
    Table(LookupTable),
}

impl LinkFunction {
    pub fn power(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidInput(format!(
                "power link exponent must be positive, got {k}"
            )));
        }
        Ok(LinkFunction::Power(k))
    }

    /// `f = 1` everywhere; turns the weighted estimator into the plain one.
    pub fn constant_one() -> Self {
        LinkFunction::Table(LookupTable {
            xs: vec![0.0],
            ys: vec![1.0],
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match self {
            LinkFunction::Power(k) => x.powf(*k),
            LinkFunction::Identity => x,
            LinkFunction::Table(t) => t.eval(x),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LinkFunction::Power(k) => format!("power:{k}"),
            LinkFunction::Identity => "identity".to_string(),
            LinkFunction::Table(t) => {
                let pts: Vec<String> = t.points().map(|(x, y)| format!("{x}:{y}")).collect();
                format!("table[{}]", pts.join(","))
            }
        }
    }
}

impl Default for LinkFunction {
    fn default() -> Self {
        LinkFunction::Power(3.0)
    }
}

impl FromStr for LinkFunction {
    type Err = Error;

    /// Parses `power:<k>` or `identity`. Tables come from files and are built
    /// with [`LookupTable::new`].
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" {
            return Ok(LinkFunction::Identity);
        }
        if let Some(k) = s.strip_prefix("power:") {
            let k: f64 = k
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad power exponent in link '{s}'")))?;
            return LinkFunction::power(k);
        }
        Err(Error::InvalidInput(format!(
            "unknown link '{s}' (expected power:<k>, identity or table:<file>)"
        )))
    }
}

/// Per-coefficient penalty weights: `weights[[j, i]]` multiplies `|beta_i|`
/// in the regression of node `j`. The diagonal is stored as zero and never
/// read.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyField {
    weights: Array2<f64>,
    scale: Array1<f64>,
}

impl PenaltyField {
    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn weights_for(&self, node: usize) -> ArrayView1<'_, f64> {
        self.weights.row(node)
    }

    pub fn scale(&self) -> &Array1<f64> {
        &self.scale
    }
}

fn check_scale(p: usize, scale: &[f64]) -> Result<()> {
    if scale.len() != p {
        return Err(Error::DimensionMismatch {
            what: "per-node scale vector",
            expected: p,
            found: scale.len(),
        });
    }
    if let Some(s) = scale.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "penalty scales must be finite and nonnegative, got {s}"
        )));
    }
    Ok(())
}

pub fn build_penalty_field(dist: &DistanceInfo, link: &LinkFunction, scale: &[f64]) -> Result<PenaltyField> {
    let p = dist.dim();
    check_scale(p, scale)?;
    let weights = Array2::from_shape_fn((p, p), |(j, i)| {
        if i == j {
            0.0
        } else {
            scale[j] * link.eval(dist.get(i, j))
        }
    });
    Ok(PenaltyField {
        weights,
        scale: Array1::from(scale.to_vec()),
    })
}

pub fn uniform_penalty_field(p: usize, scale: &[f64]) -> Result<PenaltyField> {
    check_scale(p, scale)?;
    let weights = Array2::from_shape_fn((p, p), |(j, i)| if i == j { 0.0 } else { scale[j] });
    Ok(PenaltyField {
        weights,
        scale: Array1::from(scale.to_vec()),
    })
}

/// Link weights alone (every scale equal to one). Row `j` holds `f(D[i][j])`.
pub fn link_weights(dist: Option<(&DistanceInfo, &LinkFunction)>, p: usize) -> Result<Array2<f64>> {
    let ones = vec![1.0; p];
    let field = match dist {
        Some((d, f)) => {
            if d.dim() != p {
                return Err(Error::DimensionMismatch {
                    what: "side-information nodes",
                    expected: p,
                    found: d.dim(),
                });
            }
            build_penalty_field(d, f, &ones)?
        }
        None => uniform_penalty_field(p, &ones)?,
    };
    Ok(field.weights)
}

/// Field whose row `j` is `scale[j]` times row `j` of a unit link matrix.
pub fn field_from_link_weights(links: &Array2<f64>, scale: &[f64]) -> Result<PenaltyField> {
    let p = links.nrows();
    check_scale(p, scale)?;
    let weights = Array2::from_shape_fn((p, p), |(j, i)| if i == j { 0.0 } else { scale[j] * links[[j, i]] });
    Ok(PenaltyField {
        weights,
        scale: Array1::from(scale.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn const_dist(p: usize, v: f64) -> DistanceInfo {
        DistanceInfo::from_matrix(Array2::from_shape_fn((p, p), |(i, j)| if i == j { 0.0 } else { v })).unwrap()
    }

    #[test]
    fn cubic_link_example() {
        let f = build_penalty_field(&const_dist(3, 2.0), &LinkFunction::Power(3.0), &[0.1; 3]).unwrap();
        assert!((f.weights()[[1, 0]] - 0.8).abs() < 1e-15);
        assert_eq!(f.weights()[[1, 1]], 0.0);
    }

    #[test]
    fn zero_scale_gives_zero_weights() {
        let f = build_penalty_field(&const_dist(4, 7.0), &LinkFunction::Identity, &[0.0; 4]).unwrap();
        assert!(f.weights().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn quadratic_link_example() {
        let f = build_penalty_field(&const_dist(2, 3.0), &LinkFunction::Power(2.0), &[1.0, 1.0]).unwrap();
        assert_eq!(f.weights()[[0, 1]], 9.0);
    }

    #[test]
    fn scale_length_is_checked() {
        let err = build_penalty_field(&const_dist(3, 1.0), &LinkFunction::Identity, &[1.0; 2]);
        assert!(matches!(
            err,
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2,
                ..
            })
        ));
        assert!(uniform_penalty_field(3, &[1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_examples() {
        let f = uniform_penalty_field(3, &[1.0; 3]).unwrap();
        assert_eq!(f.weights(), &array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
        let f = uniform_penalty_field(2, &[0.5, 2.0]).unwrap();
        assert_eq!(f.weights(), &array![[0.0, 0.5], [2.0, 0.0]]);
        let f = uniform_penalty_field(4, &[0.0; 4]).unwrap();
        assert!(f.weights().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn coincident_nodes_are_unpenalized() {
        let d = DistanceInfo::from_coordinates(array![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let f = build_penalty_field(&d, &LinkFunction::Power(3.0), &[1.0; 3]).unwrap();
        assert_eq!(f.weights()[[0, 1]], 0.0);
        assert_eq!(f.weights()[[0, 2]], 1.0);
    }

    #[test]
    fn distance_validation() {
        assert!(DistanceInfo::from_matrix(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(DistanceInfo::from_matrix(array![[1.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(DistanceInfo::from_matrix(array![[0.0, -1.0], [-1.0, 0.0]]).is_err());
        let d = DistanceInfo::from_matrix(array![[0.0, 5.0], [5.0, 0.0]]).unwrap();
        let d = d.with_coordinates(array![[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]).unwrap();
        assert!(d.coordinates().is_some());
        let bad = DistanceInfo::from_matrix(array![[0.0, 5.1], [5.1, 0.0]]).unwrap();
        assert!(bad.with_coordinates(array![[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]).is_err());
    }

    #[test]
    fn link_parsing_and_tables() {
        assert_eq!("power:3".parse::<LinkFunction>().unwrap(), LinkFunction::Power(3.0));
        assert_eq!("identity".parse::<LinkFunction>().unwrap(), LinkFunction::Identity);
        assert!("power:-1".parse::<LinkFunction>().is_err());
        assert!("exp".parse::<LinkFunction>().is_err());
        let t = LookupTable::new(vec![(0.0, 0.0), (10.0, 5.0), (20.0, 25.0)]).unwrap();
        assert_eq!(t.eval(-3.0), 0.0);
        assert_eq!(t.eval(5.0), 2.5);
        assert_eq!(t.eval(15.0), 15.0);
        assert_eq!(t.eval(100.0), 25.0);
        assert!(LookupTable::new(vec![(1.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(LookupTable::new(vec![(1.0, -1.0)]).is_err());
        assert_eq!(LinkFunction::constant_one().eval(123.0), 1.0);
    }

    #[test]
    fn link_matrix_rescales_to_direct_build() {
        let d = DistanceInfo::from_coordinates(array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        let direct = build_penalty_field(&d, &LinkFunction::Power(3.0), &[0.5, 2.0, 3.0]).unwrap();
        let links = link_weights(Some((&d, &LinkFunction::Power(3.0))), 3).unwrap();
        assert_eq!(field_from_link_weights(&links, &[0.5, 2.0, 3.0]).unwrap(), direct);
    }

    proptest! {
        #[test]
        fn homogeneous_in_scale(
            coords in prop::collection::vec(0.0f64..50.0, 15),
            scale in prop::collection::vec(0.0f64..3.0, 5),
            c in 0.01f64..10.0,
        ) {
            let d = DistanceInfo::from_coordinates(Array2::from_shape_vec((5, 3), coords).unwrap()).unwrap();
            let f = LinkFunction::Power(3.0);
            let base = build_penalty_field(&d, &f, &scale).unwrap();
            let scaled: Vec<f64> = scale.iter().map(|s| s * c).collect();
            let bigger = build_penalty_field(&d, &f, &scaled).unwrap();
            for (a, b) in base.weights().iter().zip(bigger.weights().iter()) {
                prop_assert!((a * c - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn unit_link_equals_uniform(
            coords in prop::collection::vec(0.0f64..50.0, 12),
            scale in prop::collection::vec(0.0f64..3.0, 4),
        ) {
            let d = DistanceInfo::from_coordinates(Array2::from_shape_vec((4, 3), coords).unwrap()).unwrap();
            let si = build_penalty_field(&d, &LinkFunction::constant_one(), &scale).unwrap();
            let mb = uniform_penalty_field(4, &scale).unwrap();
            prop_assert_eq!(si, mb);
        }

        #[test]
        fn relabeling_commutes(
            coords in prop::collection::vec(0.0f64..50.0, 15),
            shift in 0usize..5,
        ) {
            let d = DistanceInfo::from_coordinates(Array2::from_shape_vec((5, 3), coords).unwrap()).unwrap();
            let perm: Vec<usize> = (0..5).map(|k| (k + shift) % 5).collect();
            let scale = [1.0, 2.0, 3.0, 4.0, 5.0];
            let permuted_scale: Vec<f64> = perm.iter().map(|&k| scale[k]).collect();
            let f = LinkFunction::Power(2.0);
            let a = build_penalty_field(&d, &f, &scale).unwrap();
            let b = build_penalty_field(&d.permute(&perm), &f, &permuted_scale).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert_eq!(b.weights()[[j, i]], a.weights()[[perm[j], perm[i]]]);
                }
            }
        }
    }
}
