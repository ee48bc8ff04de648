//! Dense symmetric linear algebra: Cholesky, Jacobi eigendecomposition,
//! SPD inversion and spectral condition numbers.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Pivots at or below this value reject a matrix as not positive definite.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

const SINGULAR_THRESHOLD: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense `p x p` matrix whose entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    entries: Array2<f64>,
}

impl SymmetricMatrix {
    /// Wraps `entries`, rejecting non-square or non-symmetric input.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let p = check_square(entries.view())?;
        for i in 0..p {
            for j in (i + 1)..p {
                if entries[[i, j]] != entries[[j, i]] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { entries })
    }

    /// Wraps `entries` after replacing each off-diagonal pair by its mean.
    pub fn symmetrize(mut entries: Array2<f64>) -> Result<Self> {
        let p = check_square(entries.view())?;
        for i in 0..p {
            for j in (i + 1)..p {
                let avg = 0.5 * (entries[[i, j]] + entries[[j, i]]);
                entries[[i, j]] = avg;
                entries[[j, i]] = avg;
            }
        }
        Ok(Self { entries })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            entries: Array2::eye(p),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            entries: Array2::from_diag(&Array1::from(diag.to_vec())),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }

    pub fn diagonal(&self) -> Array1<f64> {
        self.entries.diag().to_owned()
    }

    pub fn trace(&self) -> f64 {
        self.entries.diag().sum()
    }
}

fn check_square(m: ArrayView2<'_, f64>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::DimensionMismatch {
            what: "square matrix columns",
            expected: r,
            found: c,
        });
    }
    if r == 0 {
        return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
    }
    Ok(r)
}

/// Lower-triangular factor `L` with `L L^T` equal to the source matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Array2<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.lower.dot(&self.lower.t())
    }

    /// `log det` of the factored matrix.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let p = self.dim();
        let l = &self.lower;
        let mut y = b.clone();
        for i in 0..p {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..p).rev() {
            let mut s = y[i];
            for k in (i + 1)..p {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }
}

pub fn cholesky(m: &SymmetricMatrix) -> Result<CholeskyFactor> {
    cholesky_view(m.view())
}

/// Cholesky factorization of a symmetric matrix given as a raw view; only the
/// lower triangle is read.
pub(crate) fn cholesky_view(a: ArrayView2<'_, f64>) -> Result<CholeskyFactor> {
    let p = a.nrows();
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d.is_nan() || d <= PIVOT_THRESHOLD {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..p {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi eigendecomposition.
pub fn eigen_symmetric(m: &SymmetricMatrix) -> Result<Eigen> {
    let p = m.dim();
    let mut a = m.as_array().clone();
    let mut v = Array2::<f64>::eye(p);
    let frob2: f64 = a.iter().map(|x| x * x).sum();
    let target = (1e-15 * frob2.sqrt()).powi(2);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..p {
            for j in (i + 1)..p {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off <= target || off == 0.0 {
            converged = true;
            break;
        }
        for r in 0..p {
            for q in (r + 1)..p {
                let arq = a[[r, q]];
                if arq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[r, r]]) / (2.0 * arq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let akr = a[[k, r]];
                    let akq = a[[k, q]];
                    a[[k, r]] = c * akr - s * akq;
                    a[[k, q]] = s * akr + c * akq;
                }
                for k in 0..p {
                    let ark = a[[r, k]];
                    let aqk = a[[q, k]];
                    a[[r, k]] = c * ark - s * aqk;
                    a[[q, k]] = s * ark + c * aqk;
                }
                a[[r, q]] = 0.0;
                a[[q, r]] = 0.0;
                for k in 0..p {
                    let vkr = v[[k, r]];
                    let vkq = v[[k, q]];
                    v[[k, r]] = c * vkr - s * vkq;
                    v[[k, q]] = s * vkr + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| a[[x, x]].total_cmp(&a[[y, y]]));
    let values = Array1::from_iter(order.iter().map(|&k| a[[k, k]]));
    let mut vectors = Array2::<f64>::zeros((p, p));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(Eigen { values, vectors })
}

pub fn invert_spd(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let chol = cholesky(m)?;
    let p = chol.dim();
    let l = chol.lower();
    // L^{-1} by forward substitution, column by column.
    let mut linv = Array2::<f64>::zeros((p, p));
    for c in 0..p {
        linv[[c, c]] = 1.0 / l[[c, c]];
        for i in (c + 1)..p {
            let mut s = 0.0;
            for k in c..i {
                s -= l[[i, k]] * linv[[k, c]];
            }
            linv[[i, c]] = s / l[[i, i]];
        }
    }
    SymmetricMatrix::symmetrize(linv.t().dot(&linv))
}

/// Ratio of the largest to the smallest absolute eigenvalue.
pub fn condition_number(m: &SymmetricMatrix) -> Result<f64> {
    let eig = eigen_symmetric(m)?;
    let abs = eig.values.mapv(f64::abs);
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < SINGULAR_THRESHOLD {
        return Err(Error::SingularMatrix {
            min_abs_eigenvalue: min,
        });
    }
    Ok(max / min)
}
