//! Dense symmetric linear algebra for small matrices.
//!
//! Everything else in the crate reduces to a handful of primitives on
//! symmetric positive (semi)definite matrices: eigendecomposition, matrix
//! square root and inverse square root, log-determinant, and operator norm.
//! The eigensolver is a cyclic Jacobi iteration, which is foolproof on real
//! symmetric matrices and plenty fast for the dimensions this crate targets
//! (covariances of a few hundred rows at most).
//!
//! Conventions:
//! - determinants are never formed as products of eigenvalues; use
//!   [`logdet`] (sums of logs) so strongly contracted spectra do not
//!   underflow,
//! - every operation symmetrizes its output as `(M + Mᵀ)/2` so asymmetry
//!   cannot drift over long solver runs,
//! - eigenvalues in `[-psd_tol, 0)` are treated as roundoff and clipped to
//!   zero where a square root is taken; anything below `-psd_tol` is an
//!   error.

use crate::{Error, Result};

/// Relative tolerance for "positive semidefinite up to roundoff".
///
/// Geodesic and update formulas produce tiny negative eigenvalues from
/// floating-point noise; eigenvalues in `[-psd_tol(A), 0)` are clipped to 0,
/// anything below is rejected.
pub fn psd_tol(opnorm: f64) -> f64 {
    1e-10 * opnorm.max(1.0)
}

/// Absolute floor on the smallest eigenvalue for operations that invert.
pub const PD_FLOOR: f64 = 1e-12;

/// Sweep budget for the cyclic Jacobi eigensolver.
const MAX_JACOBI_SWEEPS: usize = 100;

// ---------------------------------------------------------------------------
// Dense square matrices
// ---------------------------------------------------------------------------

/// Dense square matrix with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m.set(i, i, e);
        }
        m
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { dim, data })
    }

    /// Row-major construction; `data.len()` must equal `dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                left: dim * dim,
                right: data.len(),
            });
        }
        Ok(Matrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// `(M + Mᵀ)/2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(i, j, 0.5 * (self.get(i, j) + self.get(j, i)));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += aik * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= factor;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.dim, x.len());
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

// Small vector helpers used throughout the crate.

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_scale(a: &[f64], f: f64) -> Vec<f64> {
    a.iter().map(|x| x * f).collect()
}

pub fn vec_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn vec_norm_sq(a: &[f64]) -> f64 {
    vec_dot(a, a)
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigensolver
// ---------------------------------------------------------------------------

/// Eigendecomposition `A = U diag(λ) Uᵀ` of a symmetric matrix.
///
/// Eigenvalues are sorted nonincreasing; eigenvectors are the columns of an
/// orthonormal matrix `U`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rebuilds `U f(λ) Uᵀ` for a spectral function `f`.
    pub fn reassemble(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.dim();
        let u = &self.eigenvectors;
        let mut out = Matrix::zeros(n);
        for k in 0..n {
            let fk = f(self.eigenvalues[k]);
            if fk == 0.0 {
                continue;
            }
            for i in 0..n {
                let uik = u.get(i, k);
                for j in 0..n {
                    out.data[i * n + j] += fk * uik * u.get(j, k);
                }
            }
        }
        out.symmetrized()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reassemble(|x| x)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("empty decomposition")
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Cyclic Jacobi iteration on a symmetric matrix.
///
/// Sweeps rotate every off-diagonal pair `(p, q)` once; the off-diagonal
/// Frobenius norm converges quadratically once it is small. Fails with
/// [`Error::NonConvergence`] only if the sweep budget is exhausted, which
/// does not happen for finite symmetric input.
fn jacobi(mat: &Matrix) -> Result<EigenDecomposition> {
    let n = mat.dim();
    let mut a = mat.symmetrized();
    let mut u = Matrix::identity(n);

    if n <= 1 {
        return Ok(EigenDecomposition {
            eigenvalues: a.data.clone(),
            eigenvectors: u,
        });
    }

    let scale = a.frobenius_norm();
    let tol = 1e-15 * scale;

    let off_norm = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m.get(i, j) * m.get(i, j);
            }
        }
        s.sqrt()
    };

    for _sweep in 0..MAX_JACOBI_SWEEPS {
        if off_norm(&a) <= tol {
            return Ok(sorted_eigen(a, u));
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // A <- Jᵀ A J with J the plane rotation in coordinates (p, q).
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let ukp = u.get(k, p);
                    let ukq = u.get(k, q);
                    u.set(k, p, c * ukp - s * ukq);
                    u.set(k, q, s * ukp + c * ukq);
                }
            }
        }
    }

    if off_norm(&a) <= tol {
        return Ok(sorted_eigen(a, u));
    }
    Err(Error::NonConvergence {
        sweeps: MAX_JACOBI_SWEEPS,
        off_norm: off_norm(&a),
    })
}

fn sorted_eigen(a: Matrix, u: Matrix) -> EigenDecomposition {
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .expect("NaN eigenvalue")
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&k| a.get(k, k)).collect();
    let mut eigenvectors = Matrix::zeros(n);
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors.set(row, col, u.get(row, k));
        }
    }
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Eigenvalues of a general symmetric matrix, sorted nonincreasing.
pub fn sym_eigvals(mat: &Matrix) -> Result<Vec<f64>> {
    Ok(jacobi(mat)?.eigenvalues)
}

/// Operator norm `max |λ_i|` of a general symmetric matrix.
pub fn sym_opnorm(mat: &Matrix) -> Result<f64> {
    let eigs = sym_eigvals(mat)?;
    Ok(eigs.iter().fold(0.0f64, |m, l| m.max(l.abs())))
}

// ---------------------------------------------------------------------------
// Symmetric positive semidefinite matrices
// ---------------------------------------------------------------------------

/// Symmetric positive semidefinite matrix: the covariance of a Gaussian.
///
/// Construction through [`SpdMatrix::new`] validates symmetry and positive
/// semidefiniteness; internal solver formulas that are positive semidefinite
/// by construction use a cheaper symmetrize-only path.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    mat: Matrix,
}

impl SpdMatrix {
    /// Validates symmetry and positive semidefiniteness, then stores the
    /// symmetrized matrix.
    pub fn new(mat: Matrix) -> Result<Self> {
        if !mat.is_finite() {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let sym = mat.symmetrized();
        let eig = jacobi(&sym)?;
        let opnorm = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));

        let asym = mat.max_asymmetry();
        let asym_tol = 1e-12 * opnorm.max(1.0);
        if asym > asym_tol {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric: |a_ij - a_ji| = {asym:e} exceeds {asym_tol:e}"
            )));
        }

        let min_eig = eig.min_eigenvalue();
        let tol = psd_tol(opnorm);
        if min_eig < -tol {
            return Err(Error::NotPsd { min_eig, tol });
        }
        Ok(SpdMatrix { mat: sym })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        SpdMatrix::new(Matrix::from_rows(rows)?)
    }

    /// Diagonal matrix; entries must be nonnegative.
    pub fn from_diag(entries: &[f64]) -> Result<Self> {
        SpdMatrix::new(Matrix::diag(entries))
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix {
            mat: Matrix::identity(dim),
        }
    }

    /// Symmetrize-only construction for internal formulas whose output is
    /// positive semidefinite by construction (e.g. `A Σ A` with symmetric `A`).
    pub(crate) fn new_symmetrized(mat: Matrix) -> Self {
        SpdMatrix {
            mat: mat.symmetrized(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn scale(&self, factor: f64) -> Result<SpdMatrix> {
        if factor < 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative scale factor {factor}"
            )));
        }
        Ok(SpdMatrix {
            mat: self.mat.scale(factor),
        })
    }
}

// ---------------------------------------------------------------------------
// Spectral operations
// ---------------------------------------------------------------------------

/// Eigendecomposition of a symmetric PSD matrix, eigenvalues nonincreasing.
pub fn eig_sym(a: &SpdMatrix) -> Result<EigenDecomposition> {
    jacobi(a.as_matrix())
}

/// Symmetric PSD square root `R` with `R·R = A`.
///
/// Eigenvalues in `[-psd_tol, 0)` are clipped to zero before rooting.
pub fn sqrt_spd(a: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = eig_sym(a)?;
    sqrt_from_eig(&eig).map(|(r, _)| r)
}

fn sqrt_from_eig(eig: &EigenDecomposition) -> Result<(SpdMatrix, f64)> {
    let tol = psd_tol(eig.max_eigenvalue().abs());
    let min_eig = eig.min_eigenvalue();
    if min_eig < -tol {
        return Err(Error::NotPsd { min_eig, tol });
    }
    let mut trace_root = 0.0;
    let root = eig.reassemble(|l| {
        let clipped = l.max(0.0);
        clipped.sqrt()
    });
    for l in &eig.eigenvalues {
        trace_root += l.max(0.0).sqrt();
    }
    Ok((SpdMatrix::new_symmetrized(root), trace_root))
}

/// Symmetric PD inverse square root `R` with `R·A·R = I`.
pub fn invsqrt_spd(a: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = eig_sym(a)?;
    let min_eig = eig.min_eigenvalue();
    if min_eig < PD_FLOOR {
        return Err(Error::SingularMatrix {
            min_eig,
            floor: PD_FLOOR,
        });
    }
    Ok(SpdMatrix::new_symmetrized(
        eig.reassemble(|l| 1.0 / l.sqrt()),
    ))
}

/// `Σ_i ln λ_i(A)`; strictly positive definite input required.
pub fn logdet(a: &SpdMatrix) -> Result<f64> {
    let eigs = sym_eigvals(a.as_matrix())?;
    let min_eig = *eigs.last().expect("empty matrix");
    if min_eig < PD_FLOOR {
        return Err(Error::SingularMatrix {
            min_eig,
            floor: PD_FLOOR,
        });
    }
    Ok(eigs.iter().map(|l| l.ln()).sum())
}

/// Operator norm `λ_1(A)` of a symmetric PSD matrix.
pub fn opnorm(a: &SpdMatrix) -> Result<f64> {
    let eigs = sym_eigvals(a.as_matrix())?;
    Ok(eigs[0].max(0.0))
}

/// Determinant through the log-eigenvalue sum; 0 when any eigenvalue is
/// at or below zero (no underflow-prone products).
pub fn det_via_eigs(a: &SpdMatrix) -> Result<f64> {
    let eigs = sym_eigvals(a.as_matrix())?;
    if eigs.iter().any(|&l| l < PD_FLOOR) {
        return Ok(0.0);
    }
    Ok(eigs.iter().map(|l| l.ln()).sum::<f64>().exp())
}

/// Shared spectral state for repeated transports out of the same base matrix.
///
/// Holds `A^{1/2}` and `A^{-1/2}` so that a pass over many atoms performs one
/// eigendecomposition of the base instead of two per atom.
pub(crate) struct SpectralRoots {
    pub root: SpdMatrix,
    pub inv_root: SpdMatrix,
}

pub(crate) fn spectral_roots(a: &SpdMatrix) -> Result<SpectralRoots> {
    let eig = eig_sym(a)?;
    let min_eig = eig.min_eigenvalue();
    if min_eig < PD_FLOOR {
        return Err(Error::SingularMatrix {
            min_eig,
            floor: PD_FLOOR,
        });
    }
    let root = SpdMatrix::new_symmetrized(eig.reassemble(|l| l.sqrt()));
    let inv_root = SpdMatrix::new_symmetrized(eig.reassemble(|l| 1.0 / l.sqrt()));
    Ok(SpectralRoots { root, inv_root })
}

/// Square root of the sandwich `R Σ R`, returning the root and its trace.
///
/// This is the kernel of both the squared distance and the transport matrix.
pub(crate) fn sandwich_sqrt(roots: &SpectralRoots, sigma: &SpdMatrix) -> Result<(SpdMatrix, f64)> {
    let inner = roots
        .root
        .as_matrix()
        .matmul(sigma.as_matrix())
        .matmul(roots.root.as_matrix());
    let eig = jacobi(&inner.symmetrized())?;
    let (root, trace_root) = sqrt_from_eig(&eig)?;
    Ok((root, trace_root))
}

// ---------------------------------------------------------------------------
