//! Dense symmetric linear algebra for small matrices.
//!
//! Matrices here are at most `min(d, B)` on a side, so a cyclic Jacobi
//! eigensolver is accurate and fast enough. Everything else (nearest-PSD
//! projection, pseudo-inverse, least squares) is built on [`eig_sym`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum number of full Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 100;

/// Relative cutoff used by [`pseudo_inverse`] when no tolerance is given.
pub const DEFAULT_RANK_RTOL: f64 = 1e-10;

/// Slack allowed below zero when checking positive semi-definiteness.
pub fn psd_slack(min_eigenvalue: f64) -> f64 {
    1e-10 * min_eigenvalue.abs().max(1.0)
}

/// A square matrix that is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Symmetrizes `a` as `(A + Aᵀ) / 2`. Fails on non-square or non-finite input.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidMatrix(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self::symmetrized(a))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("rows must all have length equal to the row count".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    fn symmetrized(a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut s = a;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = m;
                s[(j, i)] = m;
            }
        }
        Self(s)
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order()).map(|i| self.0[(i, i)]).collect()
    }

    /// Rows and columns at `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> SymmetricMatrix {
        let n = indices.len();
        Self(DMatrix::from_fn(n, n, |i, j| self.0[(indices[i], indices[j])]))
    }

    /// `self + Diag(diag)`.
    pub fn add_diagonal(&self, diag: &[f64]) -> SymmetricMatrix {
        let mut m = self.0.clone();
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] += d;
        }
        Self(m)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = eig_sym(self)?;
        Ok(eig.eigenvalues.last().copied().unwrap_or(0.0))
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// `U · Diag(f(λ)) · Uᵀ`, symmetrized.
    pub fn recompose(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let fl = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= fl;
            }
        }
        SymmetricMatrix::symmetrized(scaled * u.transpose())
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn eig_sym(a: &SymmetricMatrix) -> Result<SymmetricEigen> {
    let n = a.order();
    let mut m = a.0.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();

    let mut converged = n <= 1 || scale == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::EigenNoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Rotation is a no-op at working precision.
                if apq.abs() <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()).max(f64::MIN_POSITIVE) {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        converged = off.sqrt() <= 1e-15 * scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Frobenius-nearest positive semi-definite matrix: negative eigenvalues are zeroed.
pub fn make_psd(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = eig_sym(a)?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(a.clone());
    }
    Ok(eig.recompose(|l| l.max(0.0)))
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix.
///
/// Eigenvalues with magnitude at or below `rank_tol` are treated as zero. When
/// `rank_tol` is `None` the cutoff is `1e-10 · max|λ|`.
pub fn pseudo_inverse(a: &SymmetricMatrix, rank_tol: Option<f64>) -> Result<SymmetricMatrix> {
    let eig = eig_sym(a)?;
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let tol = rank_tol.unwrap_or(DEFAULT_RANK_RTOL * lambda_max);
    Ok(eig.recompose(|l| if l.abs() > tol { 1.0 / l } else { 0.0 }))
}

/// Weights and intercept of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Minimum-norm least squares of `targets` on the columns of `design` plus an
/// intercept, through the pseudo-inverse of the normal-equations matrix.
pub fn solve_least_squares(design: &DMatrix<f64>, targets: &[f64]) -> Result<LeastSquaresFit> {
    let m = design.nrows();
    let p = design.ncols();
    if m == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if targets.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: targets.len(),
            context: "least-squares targets",
        });
    }
    let mut augmented = DMatrix::<f64>::from_element(m, p + 1, 1.0);
    augmented.view_mut((0, 0), (m, p)).copy_from(design);
    let y = DVector::from_column_slice(targets);
    let gram = SymmetricMatrix::new(augmented.transpose() * &augmented)?;
    let rhs = augmented.transpose() * y;
    let coef = pseudo_inverse(&gram, None)?.0 * rhs;
    Ok(LeastSquaresFit {
        weights: coef.rows(0, p).iter().copied().collect(),
        bias: coef[p],
    })
}
