//! Data-generating processes: preferential-attachment trees with
//! condition-number-targeted precision matrices, and distance-driven
//! Bernoulli graphs with fixed-weight precision matrices.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimators::EdgeSet;
use crate::linalg::{cholesky, eigen_symmetric, invert_spd, SymmetricMatrix};
use crate::penalty::DistanceInfo;
use crate::rng::{stream, stream_seed};

pub const SUPPORT_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_CONDITION_NUMBER: f64 = 100.0;
pub const DEFAULT_MAGNITUDE_RANGE: (f64, f64) = (0.2, 1.0);
pub const DEFAULT_INTERCEPT: f64 = 10.0;
pub const DEFAULT_SLOPE: f64 = 1.0 / 3.0;
pub const DEFAULT_OFFDIAG: f64 = 0.3;
pub const DEFAULT_BOX_SIDE: f64 = 160.0;
/// Minimum eigenvalue enforced by the repair ridge.
pub const REPAIR_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub generator: String,
    pub parameters: Value,
    pub master_seed: u64,
    /// Ridge added to the precision diagonal, when one was needed.
    pub repair_ridge: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulatedInstance {
    pub truth: EdgeSet,
    pub precision: SymmetricMatrix,
    pub covariance: SymmetricMatrix,
    pub data: DataMatrix,
    pub coordinates: Option<DistanceInfo>,
    pub provenance: Provenance,
}

impl SimulatedInstance {
    /// Checks that the precision is positive definite, inverts the
    /// covariance to within 1e-6 and has off-diagonal support `truth`.
    pub fn new(
        truth: EdgeSet,
        precision: SymmetricMatrix,
        covariance: SymmetricMatrix,
        data: DataMatrix,
        coordinates: Option<DistanceInfo>,
        provenance: Provenance,
    ) -> Result<Self> {
        let p = precision.dim();
        if truth.dim() != p || covariance.dim() != p || data.n_nodes() != p {
            return Err(Error::DimensionMismatch {
                what: "instance components",
                expected: p,
                found: truth.dim().max(covariance.dim()).max(data.n_nodes()),
            });
        }
        cholesky(&precision)?;
        let prod = precision.as_array().dot(covariance.as_array());
        for i in 0..p {
            for j in 0..p {
                let target = if i == j { 1.0 } else { 0.0 };
                if (prod[[i, j]] - target).abs() > 1e-6 {
                    return Err(Error::InvalidInput(format!(
                        "precision times covariance deviates from identity at ({i}, {j})"
                    )));
                }
                if i < j && (precision.get(i, j).abs() > SUPPORT_THRESHOLD) != truth.contains(i, j) {
                    return Err(Error::InvalidInput(format!(
                        "precision support disagrees with the true graph at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            truth,
            precision,
            covariance,
            data,
            coordinates,
            provenance,
        })
    }
}

/// Tree grown by preferential attachment with one edge per arriving node.
/// Arrival order is a seeded random permutation of the labels.
pub fn preferential_attachment_graph(p: usize, seed: u64) -> Result<EdgeSet> {
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "preferential attachment needs p >= 2, got {p}"
        )));
    }
    let mut rng = stream(seed, 0);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut edges = EdgeSet::empty(p);
    edges.insert(order[0], order[1])?;
    // each node appears once per incident edge, so uniform draws are
    // degree-proportional
    let mut endpoints = vec![order[0], order[1]];
    for &new in &order[2..] {
        let target = endpoints[rng.gen_range(0..endpoints.len())];
        edges.insert(new, target)?;
        endpoints.push(new);
        endpoints.push(target);
    }
    Ok(edges)
}

/// Off-diagonals on `edges` drawn uniformly from `[-hi, -lo] U [lo, hi]`,
/// common diagonal `d = (l_max - cond * l_min) / (cond - 1)` over the
/// spectrum of the off-diagonal part, so the result has condition number
/// `cond`.
pub fn precision_from_edges_condnum(
    edges: &EdgeSet,
    cond_target: f64,
    magnitude_range: (f64, f64),
    seed: u64,
) -> Result<SymmetricMatrix> {
    let (lo, hi) = magnitude_range;
    if !(cond_target > 1.0) || !(0.0 <= lo && lo <= hi) {
        return Err(Error::InvalidInput(format!(
            "need cond_target > 1 and 0 <= lo <= hi, got {cond_target}, [{lo}, {hi}]"
        )));
    }
    let p = edges.dim();
    let mut rng = stream(seed, 1);
    let mut a = Array2::<f64>::zeros((p, p));
    for (i, j) in edges.iter() {
        let mag = rng.gen_range(lo..=hi);
        let v = if rng.gen::<bool>() { mag } else { -mag };
        a[[i, j]] = v;
        a[[j, i]] = v;
    }
    let spectrum = eigen_symmetric(&SymmetricMatrix::new(a.clone())?)?.values;
    let (lmin, lmax) = (spectrum[0], spectrum[p - 1]);
    if !(lmax > lmin) {
        return Err(Error::DegenerateSpectrum);
    }
    let d = (lmax - cond_target * lmin) / (cond_target - 1.0);
    for i in 0..p {
        a[[i, i]] = d;
    }
    SymmetricMatrix::new(a)
}

/// Includes each pair independently with probability
/// `1 / (1 + exp(-(intercept - slope * D_ij)))`.
pub fn distance_bernoulli_graph(dist: &DistanceInfo, intercept: f64, slope: f64, seed: u64) -> EdgeSet {
    let p = dist.dim();
    let mut rng = stream(seed, 2);
    let mut edges = EdgeSet::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            let prob = inclusion_probability(dist.get(i, j), intercept, slope);
            if rng.gen::<f64>() < prob {
                edges.insert(i, j).expect("in range");
            }
        }
    }
    edges
}

pub fn inclusion_probability(d: f64, intercept: f64, slope: f64) -> f64 {
    1.0 / (1.0 + (-(intercept - slope * d)).exp())
}

/// `offdiag` on the edges, diagonal `0.2 + offdiag * sigma_min` with
/// `sigma_min` the smallest singular value of the adjacency matrix. When the
/// result is not positive definite, a ridge lifting the smallest eigenvalue
/// to [`REPAIR_FLOOR`] is added and returned alongside.
pub fn precision_from_edges_fixed(edges: &EdgeSet, offdiag: f64) -> Result<(SymmetricMatrix, Option<f64>)> {
    let p = edges.dim();
    let mut adj = Array2::<f64>::zeros((p, p));
    for (i, j) in edges.iter() {
        adj[[i, j]] = 1.0;
        adj[[j, i]] = 1.0;
    }
    let sigma_min = eigen_symmetric(&SymmetricMatrix::new(adj.clone())?)?
        .values
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let diag = 0.2 + offdiag * sigma_min;
    let mut m = adj * offdiag;
    for i in 0..p {
        m[[i, i]] = diag;
    }
    let precision = SymmetricMatrix::new(m)?;
    let lmin = eigen_symmetric(&precision)?.values[0];
    if lmin > 0.0 && cholesky(&precision).is_ok() {
        return Ok((precision, None));
    }
    let ridge = REPAIR_FLOOR - lmin;
    let mut m = precision.into_inner();
    for i in 0..p {
        m[[i, i]] += ridge;
    }
    Ok((SymmetricMatrix::new(m)?, Some(ridge)))
}

/// `n` rows `L z`, `L` the Cholesky factor of `covariance` and `z` standard
/// normal.
pub fn sample_gaussian(covariance: &SymmetricMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    let l = cholesky(covariance)?;
    let p = covariance.dim();
    let mut rng = stream(seed, 3);
    let z = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    DataMatrix::new(z.dot(&l.lower().t()))
}

/// `p` points uniform in `[0, box_side]^3` and their Euclidean distances.
pub fn synthetic_coordinates(p: usize, box_side: f64, seed: u64) -> Result<DistanceInfo> {
    if p == 0 || !(box_side > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need p >= 1 and box_side > 0, got {p}, {box_side}"
        )));
    }
    let mut rng = stream(seed, 4);
    let coords = Array2::from_shape_fn((p, 3), |_| rng.gen::<f64>() * box_side);
    DistanceInfo::from_coordinates(coords)
}

/// Preferential-attachment tree, condition-number-100 precision, `n`
/// Gaussian samples.
pub fn pa_condnum_instance(p: usize, n: usize, seed: u64) -> Result<SimulatedInstance> {
    let truth = preferential_attachment_graph(p, stream_seed(seed, 0))?;
    let precision = precision_from_edges_condnum(
        &truth,
        DEFAULT_CONDITION_NUMBER,
        DEFAULT_MAGNITUDE_RANGE,
        stream_seed(seed, 1),
    )?;
    let covariance = invert_spd(&precision)?;
    let data = sample_gaussian(&covariance, n, stream_seed(seed, 2))?;
    let provenance = Provenance {
        generator: "pa-condnum".into(),
        parameters: json!({
            "p": p,
            "n": n,
            "condition_number": DEFAULT_CONDITION_NUMBER,
            "magnitude_range": [DEFAULT_MAGNITUDE_RANGE.0, DEFAULT_MAGNITUDE_RANGE.1],
        }),
        master_seed: seed,
        repair_ridge: None,
    };
    SimulatedInstance::new(truth, precision, covariance, data, None, provenance)
}

/// Distance-driven Bernoulli graph, fixed-weight precision, `n` Gaussian
/// samples. Without `coords`, synthetic coordinates in a cube of side
/// [`DEFAULT_BOX_SIDE`] are drawn.
pub fn distance_bernoulli_instance(
    p: usize,
    n: usize,
    seed: u64,
    coords: Option<DistanceInfo>,
) -> Result<SimulatedInstance> {
    let synthetic = coords.is_none();
    let dist = match coords {
        Some(d) if d.dim() != p => {
            return Err(Error::DimensionMismatch {
                what: "coordinate rows",
                expected: p,
                found: d.dim(),
            })
        }
        Some(d) => d,
        None => synthetic_coordinates(p, DEFAULT_BOX_SIDE, stream_seed(seed, 3))?,
    };
    let truth = distance_bernoulli_graph(&dist, DEFAULT_INTERCEPT, DEFAULT_SLOPE, stream_seed(seed, 0));
    let (precision, ridge) = precision_from_edges_fixed(&truth, DEFAULT_OFFDIAG)?;
    let covariance = invert_spd(&precision)?;
    let data = sample_gaussian(&covariance, n, stream_seed(seed, 2))?;
    let provenance = Provenance {
        generator: "distance-bernoulli".into(),
        parameters: json!({
            "p": p,
            "n": n,
            "intercept": DEFAULT_INTERCEPT,
            "slope": DEFAULT_SLOPE,
            "offdiag": DEFAULT_OFFDIAG,
            "synthetic_coordinates": synthetic,
            "box_side": if synthetic { Some(DEFAULT_BOX_SIDE) } else { None },
        }),
        master_seed: seed,
        repair_ridge: ridge,
    };
    SimulatedInstance::new(truth, precision, covariance, data, Some(dist), provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_covariance;
    use crate::linalg::condition_number;
    use ndarray::array;

    fn connected(e: &EdgeSet) -> bool {
        let p = e.dim();
        let mut parent: Vec<usize> = (0..p).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            parent[x] = r;
            r
        }
        for (i, j) in e.iter() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        (0..p).all(|i| find(&mut parent, i) == root)
    }

    #[test]
    fn preferential_attachment_is_a_tree() {
        assert_eq!(
            preferential_attachment_graph(2, 1).unwrap().iter().collect::<Vec<_>>(),
            vec![(0, 1)]
        );
        assert_eq!(preferential_attachment_graph(116, 3).unwrap().len(), 115);
        for seed in 0..10 {
            let g = preferential_attachment_graph(50, seed).unwrap();
            assert_eq!(g.len(), 49);
            assert!(connected(&g));
        }
        assert!(preferential_attachment_graph(1, 0).is_err());
        assert_eq!(
            preferential_attachment_graph(30, 5).unwrap(),
            preferential_attachment_graph(30, 5).unwrap()
        );
    }

    #[test]
    fn preferential_attachment_has_hubs() {
        let hubs = (0..100)
            .filter(|&s| {
                preferential_attachment_graph(116, s)
                    .unwrap()
                    .degrees()
                    .into_iter()
                    .max()
                    .unwrap()
                    >= 8
            })
            .count();
        assert!(hubs >= 90, "{hubs}/100");
    }

    #[test]
    fn condnum_two_by_two() {
        let e = EdgeSet::from_pairs(2, [(0, 1)]).unwrap();
        let m = precision_from_edges_condnum(&e, 100.0, (1.0, 1.0), 4).unwrap();
        assert!((m.get(0, 0) - 101.0 / 99.0).abs() < 1e-12);
        assert!((condition_number(&m).unwrap() - 100.0).abs() < 1e-6);
        assert!(matches!(
            precision_from_edges_condnum(&EdgeSet::empty(3), 100.0, (0.2, 1.0), 1),
            Err(Error::DegenerateSpectrum)
        ));
    }

    #[test]
    fn condnum_instances_hit_target() {
        for seed in 0..5 {
            let g = preferential_attachment_graph(40, seed).unwrap();
            let m = precision_from_edges_condnum(&g, 100.0, (0.2, 1.0), seed).unwrap();
            assert!((condition_number(&m).unwrap() - 100.0).abs() < 1e-6);
            for i in 0..40 {
                for j in 0..40 {
                    let v = m.get(i, j).abs();
                    if i != j && v != 0.0 {
                        assert!((0.2..=1.0).contains(&v));
                        assert!(g.contains(i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn bernoulli_probabilities() {
        assert_eq!(inclusion_probability(30.0, 10.0, 1.0 / 3.0), 0.5);
        assert!((inclusion_probability(0.0, 10.0, 1.0 / 3.0) - 0.9999546).abs() < 1e-7);
        let far = DistanceInfo::from_matrix(Array2::from_shape_fn(
            (20, 20),
            |(i, j)| if i == j { 0.0 } else { 300.0 },
        ))
        .unwrap();
        assert!(distance_bernoulli_graph(&far, 10.0, 1.0 / 3.0, 1).is_empty());
    }

    #[test]
    fn bernoulli_frequencies_match() {
        let d = array![[0.0, 24.0, 30.0], [24.0, 0.0, 36.0], [30.0, 36.0, 0.0]];
        let dist = DistanceInfo::from_matrix(d).unwrap();
        let trials = 10_000;
        let mut counts = [[0usize; 3]; 3];
        for t in 0..trials {
            for (i, j) in distance_bernoulli_graph(&dist, 10.0, 1.0 / 3.0, t).iter() {
                counts[i][j] += 1;
            }
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let pr = inclusion_probability(dist.get(i, j), 10.0, 1.0 / 3.0);
            let se = (pr * (1.0 - pr) / trials as f64).sqrt();
            let freq = counts[i][j] as f64 / trials as f64;
            assert!((freq - pr).abs() <= 3.0 * se, "({i},{j}) {freq} vs {pr}");
        }
    }

    #[test]
    fn fixed_precision_examples() {
        let (m, r) = precision_from_edges_fixed(&EdgeSet::empty(3), 0.3).unwrap();
        assert_eq!(m.as_array(), &(Array2::<f64>::eye(3) * 0.2));
        assert!(r.is_none());
        let (m, r) = precision_from_edges_fixed(&EdgeSet::from_pairs(2, [(0, 1)]).unwrap(), 0.3).unwrap();
        assert!(r.is_none());
        assert!((m.get(0, 0) - 0.5).abs() < 1e-12 && (m.get(0, 1) - 0.3).abs() < 1e-15);
        let ev = eigen_symmetric(&m).unwrap().values;
        assert!((ev[0] - 0.2).abs() < 1e-12 && (ev[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn fixed_precision_repair_is_positive_definite() {
        // a star on 5 nodes has spectrum {-2, 0, 0, 0, 2}: sigma_min = 0, diagonal 0.2
        let star = EdgeSet::from_pairs(5, (1..5).map(|k| (0, k))).unwrap();
        let (m, r) = precision_from_edges_fixed(&star, 0.3).unwrap();
        let ridge = r.expect("star needs repair");
        assert!((ridge - (REPAIR_FLOOR - (0.2 - 0.6))).abs() < 1e-9);
        assert!((eigen_symmetric(&m).unwrap().values[0] - REPAIR_FLOOR).abs() < 1e-9);
    }

    #[test]
    fn gaussian_sampling() {
        let cov = SymmetricMatrix::identity(4);
        let d = sample_gaussian(&cov, 10_000, 5).unwrap();
        let s = sample_covariance(&d);
        for i in 0..4 {
            for j in 0..4 {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((s.get(i, j) - t).abs() < 0.1);
            }
        }
        assert_eq!(sample_gaussian(&cov, 0, 1).unwrap().n_nodes(), 4);
        assert_eq!(
            sample_gaussian(&cov, 7, 2).unwrap(),
            sample_gaussian(&cov, 7, 2).unwrap()
        );
    }

    #[test]
    fn coordinates_are_metric() {
        assert_eq!(
            synthetic_coordinates(1, 160.0, 0).unwrap().matrix(),
            &Array2::<f64>::zeros((1, 1))
        );
        let d = synthetic_coordinates(15, 160.0, 2).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert_eq!(d.get(i, j), d.get(j, i));
                for k in 0..15 {
                    assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn distance_instances_are_sparse_and_valid() {
        let mut densities = Vec::new();
        for seed in 0..20 {
            let inst = distance_bernoulli_instance(116, 20, seed, None).unwrap();
            densities.push(inst.truth.len() as f64 / inst.truth.max_edges() as f64);
            assert!(inst.coordinates.is_some());
        }
        let mean = densities.iter().sum::<f64>() / 20.0;
        assert!((0.01..=0.20).contains(&mean), "{mean}");
    }

    #[test]
    fn pa_instance_is_valid_and_reproducible() {
        let a = pa_condnum_instance(30, 40, 7).unwrap();
        let b = pa_condnum_instance(30, 40, 7).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.truth.len(), 29);
        assert_eq!(a.data.n_samples(), 40);
    }
}
