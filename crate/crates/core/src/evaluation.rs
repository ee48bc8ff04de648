//! Graph-recovery metrics: Hamming distance, ROC curves over a
//! regularization path and split-half reproducibility.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimators::EdgeSet;
use crate::parallel::try_map_indexed;
use crate::rng::stream;
use crate::tuning::{CalibratedEstimator, PathEstimator, ScalePath};

fn same_dim(a: &EdgeSet, b: &EdgeSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            what: "edge set nodes",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Size of the symmetric difference.
pub fn hamming(a: &EdgeSet, b: &EdgeSet) -> Result<usize> {
    same_dim(a, b)?;
    Ok(a.symmetric_difference_len(b))
}

/// `(1 - hamming / (|a| + |b|)) * 100`.
pub fn agreement_percent(a: &EdgeSet, b: &EdgeSet) -> Result<f64> {
    same_dim(a, b)?;
    let total = a.len() + b.len();
    if total == 0 {
        return Err(Error::BothEmpty);
    }
    Ok((1.0 - a.symmetric_difference_len(b) as f64 / total as f64) * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    /// Path parameter; `None` for the appended endpoints.
    pub param: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

/// Points in path order, bracketed by `(0, 0)` and `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    fn from_points(points: Vec<RocPoint>) -> Self {
        let auc = trapezoid_auc(&points);
        Self { points, auc }
    }
}

/// Trapezoid area over the points sorted by (fpr, tpr).
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// ROC curve of a precomputed path of estimates.
pub fn roc_from_path(estimates: &[EdgeSet], params: &[f64], truth: &EdgeSet) -> Result<RocCurve> {
    if estimates.len() != params.len() {
        return Err(Error::LengthMismatch(estimates.len(), params.len()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let positives = truth.len() as f64;
    let negatives = (truth.max_edges() - truth.len()) as f64;
    let mut points = Vec::with_capacity(estimates.len() + 2);
    points.push(RocPoint {
        param: None,
        fpr: 0.0,
        tpr: 0.0,
    });
    for (est, &param) in estimates.iter().zip(params) {
        same_dim(truth, est)?;
        let tp = est.intersection_len(truth) as f64;
        let fp = est.len() as f64 - tp;
        points.push(RocPoint {
            param: Some(param),
            fpr: if negatives > 0.0 { fp / negatives } else { 0.0 },
            tpr: tp / positives,
        });
    }
    points.push(RocPoint {
        param: None,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok(RocCurve::from_points(points))
}

/// Runs `method` at every grid value and scores each estimate against
/// `truth`.
pub fn roc_over_path(
    method: &dyn PathEstimator,
    data: &DataMatrix,
    truth: &EdgeSet,
    grid: &ScalePath,
) -> Result<RocCurve> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let path = method.path(data, grid.values())?;
    roc_from_path(&path, grid.values(), truth)
}

/// Pointwise mean of `(fpr, tpr)` at matching path indices.
pub fn average_roc(curves: &[RocCurve]) -> Result<RocCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidInput("no ROC curves to average".into()))?;
    let len = first.points.len();
    if let Some(c) = curves.iter().find(|c| c.points.len() != len) {
        return Err(Error::LengthMismatch(len, c.points.len()));
    }
    let k = curves.len() as f64;
    let points = (0..len)
        .map(|i| {
            let param = first.points[i].param;
            let same_param = curves.iter().all(|c| c.points[i].param == param);
            RocPoint {
                param: if same_param { param } else { None },
                fpr: curves.iter().map(|c| c.points[i].fpr).sum::<f64>() / k,
                tpr: curves.iter().map(|c| c.points[i].tpr).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(RocCurve::from_points(points))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproducibilityReport {
    pub method: String,
    pub seed: u64,
    pub n_splits: usize,
    /// Agreement of each split; `None` where both halves gave empty graphs.
    pub per_split: Vec<Option<f64>>,
    pub both_empty: usize,
    /// Mean over the splits with a defined agreement.
    pub mean: Option<f64>,
    /// Sample standard deviation (divisor `k - 1`) over the same splits.
    pub sd: Option<f64>,
}

impl ReproducibilityReport {
    pub fn from_splits(method: String, seed: u64, per_split: Vec<Option<f64>>) -> Self {
        let valid: Vec<f64> = per_split.iter().flatten().copied().collect();
        let k = valid.len();
        let mean = (k > 0).then(|| valid.iter().sum::<f64>() / k as f64);
        let sd = mean
            .filter(|_| k > 1)
            .map(|m| (valid.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt());
        Self {
            method,
            seed,
            n_splits: per_split.len(),
            both_empty: per_split.len() - k,
            per_split,
            mean,
            sd,
        }
    }
}

/// Rows of split `s` in shuffled order: the first `floor(n / 2)` form one
/// half and the rest the other.
pub fn split_halves(n: usize, seed: u64, split: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut stream(seed, split as u64));
    let second = rows.split_off(n / 2);
    (rows, second)
}

/// Split-half reproducibility: per split, each half is estimated (and
/// calibrated) independently and the two graphs compared by
/// [`agreement_percent`].
pub fn split_half_reproducibility(
    method: &dyn CalibratedEstimator,
    data: &DataMatrix,
    n_splits: usize,
    seed: u64,
) -> Result<ReproducibilityReport> {
    let n = data.n_samples();
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "split-half reproducibility needs n >= 4, got {n}"
        )));
    }
    if n_splits == 0 {
        return Err(Error::InvalidInput("n_splits must be >= 1".into()));
    }
    let per_split = try_map_indexed(n_splits, |s| {
        let (a, b) = split_halves(n, seed, s);
        let ea = method.estimate(&data.select_rows(&a))?;
        let eb = method.estimate(&data.select_rows(&b))?;
        match agreement_percent(&ea, &eb) {
            Ok(v) => Ok(Some(v)),
            Err(Error::BothEmpty) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    Ok(ReproducibilityReport::from_splits(method.name(), seed, per_split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn set(p: usize, pairs: &[(usize, usize)]) -> EdgeSet {
        EdgeSet::from_pairs(p, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn hamming_examples() {
        let a = set(4, &[(1, 2), (1, 3)]);
        let b = set(4, &[(1, 3), (2, 3)]);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        assert_eq!(hamming(&a, &b).unwrap(), 2);
        let tree: Vec<(usize, usize)> = (1..116).map(|k| (0, k)).collect();
        assert_eq!(hamming(&EdgeSet::empty(116), &set(116, &tree)).unwrap(), 115);
        assert!(hamming(&a, &EdgeSet::empty(5)).is_err());
    }

    #[test]
    fn agreement_examples() {
        let a = set(4, &[(1, 2), (2, 3)]);
        assert_eq!(agreement_percent(&a, &a).unwrap(), 100.0);
        assert!((agreement_percent(&a, &set(4, &[(2, 3)])).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            agreement_percent(&set(5, &[(0, 1), (0, 2)]), &set(5, &[(1, 2), (3, 4), (2, 4)])).unwrap(),
            0.0
        );
        assert!(matches!(
            agreement_percent(&EdgeSet::empty(3), &EdgeSet::empty(3)),
            Err(Error::BothEmpty)
        ));
    }

    struct Fixed(EdgeSet);

    impl PathEstimator for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn default_grid(&self, _: &DataMatrix, size: usize, floor: f64) -> Result<ScalePath> {
            ScalePath::geometric(1.0, size, floor)
        }
        fn path(&self, _: &DataMatrix, params: &[f64]) -> Result<Vec<EdgeSet>> {
            Ok(params.iter().map(|_| self.0.clone()).collect())
        }
    }

    impl CalibratedEstimator for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn estimate(&self, _: &DataMatrix) -> Result<EdgeSet> {
            Ok(self.0.clone())
        }
    }

    /// `k` uniformly random edges at the `k`-th grid point.
    struct RandomGuess(u64);

    impl PathEstimator for RandomGuess {
        fn name(&self) -> String {
            "random".into()
        }
        fn default_grid(&self, _: &DataMatrix, size: usize, floor: f64) -> Result<ScalePath> {
            ScalePath::geometric(1.0, size, floor)
        }
        fn path(&self, data: &DataMatrix, params: &[f64]) -> Result<Vec<EdgeSet>> {
            let p = data.n_nodes();
            let mut all: Vec<(usize, usize)> = EdgeSet::complete(p).iter().collect();
            all.shuffle(&mut stream(self.0, 0));
            let step = all.len() / params.len();
            Ok((0..params.len())
                .map(|k| EdgeSet::from_pairs(p, all[..k * step].iter().copied()).unwrap())
                .collect())
        }
    }

    /// A fresh random nonempty graph on every call.
    struct Noisy(AtomicU64);

    impl CalibratedEstimator for Noisy {
        fn name(&self) -> String {
            "noisy".into()
        }
        fn estimate(&self, data: &DataMatrix) -> Result<EdgeSet> {
            let call = self.0.fetch_add(1, Ordering::SeqCst);
            let mut rng = stream(99, call);
            let p = data.n_nodes();
            let mut e = EdgeSet::empty(p);
            while e.len() < 5 {
                let (i, j) = (rng.gen_range(0..p), rng.gen_range(0..p));
                if i != j {
                    e.insert(i, j)?;
                }
            }
            Ok(e)
        }
    }

    fn dummy(p: usize) -> DataMatrix {
        DataMatrix::new(ndarray::Array2::zeros((10, p))).unwrap()
    }

    #[test]
    fn roc_of_truth_and_empty() {
        let truth = set(6, &[(0, 1), (2, 3), (4, 5)]);
        let grid = ScalePath::geometric(1.0, 10, 0.01).unwrap();
        let c = roc_over_path(&Fixed(truth.clone()), &dummy(6), &truth, &grid).unwrap();
        assert_eq!(c.auc, 1.0);
        assert!(c.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        let c = roc_over_path(&Fixed(EdgeSet::empty(6)), &dummy(6), &truth, &grid).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.points.len(), 12);
        assert!(matches!(
            roc_over_path(&Fixed(truth.clone()), &dummy(6), &EdgeSet::empty(6), &grid),
            Err(Error::EmptyTruth)
        ));
    }

    #[test]
    fn random_guessing_is_near_chance() {
        let p = 20;
        let truth = set(p, &(1..p).map(|k| (0, k)).collect::<Vec<_>>());
        let grid = ScalePath::geometric(1.0, 50, 0.01).unwrap();
        let aucs: Vec<f64> = (0..20)
            .map(|s| roc_over_path(&RandomGuess(s), &dummy(p), &truth, &grid).unwrap().auc)
            .collect();
        let mean = aucs.iter().sum::<f64>() / 20.0;
        assert!((mean - 0.5).abs() <= 0.1, "{mean}");
    }

    #[test]
    fn averaging() {
        let truth = set(4, &[(0, 1), (2, 3)]);
        let grid = [1.0, 0.5];
        let a = roc_from_path(&[set(4, &[(0, 1)]), set(4, &[(0, 1), (0, 2)])], &grid, &truth).unwrap();
        assert_eq!(average_roc(&[a.clone()]).unwrap(), a);
        assert_eq!(average_roc(&[a.clone(), a.clone()]).unwrap(), a);
        let b = roc_from_path(&[set(4, &[(2, 3)]), set(4, &[(2, 3), (0, 1)])], &grid, &truth).unwrap();
        let c = roc_from_path(&[set(4, &[(0, 2)])], &[1.0], &truth).unwrap();
        assert!(matches!(average_roc(&[a.clone(), c]), Err(Error::LengthMismatch(4, 3))));
        let m = average_roc(&[a.clone(), b.clone()]).unwrap();
        assert!(m.auc >= 0.0 && m.auc <= 1.0);
    }

    #[test]
    fn averaging_on_shared_abscissae_is_linear() {
        let pts = |tprs: &[f64]| -> RocCurve {
            let fprs = [0.0, 0.25, 0.5, 1.0];
            RocCurve::from_points(
                fprs.iter()
                    .zip(tprs)
                    .map(|(&f, &t)| RocPoint {
                        param: None,
                        fpr: f,
                        tpr: t,
                    })
                    .collect(),
            )
        };
        let a = pts(&[0.0, 0.3, 0.6, 1.0]);
        let b = pts(&[0.0, 0.7, 0.9, 1.0]);
        let m = average_roc(&[a.clone(), b.clone()]).unwrap();
        assert!((m.auc - (a.auc + b.auc) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn reproducibility_of_fixed_and_random_methods() {
        let data = dummy(10);
        let r = split_half_reproducibility(&Fixed(set(10, &[(0, 1)])), &data, 20, 3).unwrap();
        assert_eq!((r.mean, r.sd, r.per_split.len()), (Some(100.0), Some(0.0), 20));
        let r = split_half_reproducibility(&Noisy(AtomicU64::new(0)), &data, 20, 3).unwrap();
        assert!(r.mean.unwrap() < 50.0);
        let r = split_half_reproducibility(&Fixed(EdgeSet::empty(10)), &data, 5, 3).unwrap();
        assert_eq!((r.both_empty, r.mean), (5, None));
        assert!(
            split_half_reproducibility(&Fixed(EdgeSet::empty(3)), &dummy(3).select_rows(&[0, 1, 2]), 5, 3).is_err()
        );
    }

    #[test]
    fn halves_cover_rows() {
        let (a, b) = split_halves(11, 4, 2);
        assert_eq!((a.len(), b.len()), (5, 6));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    fn edge_set(p: usize) -> impl Strategy<Value = EdgeSet> {
        proptest::collection::vec((0..p, 0..p), 0..12)
            .prop_map(move |pairs| EdgeSet::from_pairs(p, pairs.into_iter().filter(|(i, j)| i != j)).unwrap())
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(a in edge_set(7), b in edge_set(7), c in edge_set(7)) {
            let d = |x: &EdgeSet, y: &EdgeSet| hamming(x, y).unwrap();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &b) == 0, a == b);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn agreement_is_symmetric_and_bounded(a in edge_set(6), b in edge_set(6)) {
            match (agreement_percent(&a, &b), agreement_percent(&b, &a)) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(x, y);
                    prop_assert!((0.0..=100.0).contains(&x));
                }
                (Err(Error::BothEmpty), Err(Error::BothEmpty)) => prop_assert!(a.is_empty() && b.is_empty()),
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
