//! Dense linear-algebra kernels shared by the whole crate.
//!
//! Covariances are carried as upper-triangular square-root factors `R` with
//! `P = RᵀR`. This module provides the three operations everything else is
//! built from: the triangular factor of a QR factorization (the orthogonal
//! factor is never formed), transposed triangular solves, and
//! log-determinants read off the factor diagonal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative floor under which a factor diagonal counts as singular.
const SINGULARITY_FLOOR: f64 = 1e-12;

/// An upper-triangular square-root factor of a covariance matrix.
///
/// Invariants: the matrix is square, entries strictly below the diagonal are
/// exactly zero, all entries are finite, and diagonal entries are
/// nonnegative. The canonical nonnegative diagonal makes factors (and
/// everything derived from them) deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTriangular {
    m: DMatrix<f64>,
}

impl UpperTriangular {
    /// Builds a factor from a square matrix, canonicalizing row signs so the
    /// diagonal is nonnegative. Errors if the matrix is not square, has
    /// non-finite entries, or has nonzero entries below the diagonal.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Argument(format!(
                "upper-triangular factor must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument(
                "upper-triangular factor contains non-finite entries".into(),
            ));
        }
        for i in 0..m.nrows() {
            for j in 0..i {
                if m[(i, j)] != 0.0 {
                    return Err(Error::Argument(format!(
                        "entry ({i},{j}) below the diagonal is {} (must be 0)",
                        m[(i, j)]
                    )));
                }
            }
        }
        let mut m = m;
        canonicalize_rows(&mut m);
        Ok(Self { m })
    }

    /// The identity factor (covariance = identity).
    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// The zero factor (covariance = 0). Valid as a noise factor for
    /// noise-free models; it is never inverted in that role.
    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    /// Factor with the given (nonnegative) diagonal.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Argument(
                "diagonal factor entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            m: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        })
    }

    /// Upper Cholesky factor of a symmetric positive-definite covariance,
    /// so that `P = RᵀR`.
    pub fn from_covariance(p: &DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::Argument(format!(
                "covariance must be square, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        let chol = p.clone().cholesky().ok_or_else(|| {
            Error::Argument("covariance is not positive definite".into())
        })?;
        Ok(Self {
            m: chol.l().transpose(),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Reconstructs the full covariance `RᵀR`.
    pub fn to_covariance(&self) -> DMatrix<f64> {
        self.m.tr_mul(&self.m)
    }

    /// `Rᵀ v` — maps a standard-normal draw onto the covariance's support.
    pub fn transpose_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.m.tr_mul(v)
    }

    fn max_diag(&self) -> f64 {
        (0..self.dim()).fold(0.0_f64, |acc, i| acc.max(self.m[(i, i)].abs()))
    }

    /// Singularity floor relative to the largest diagonal entry (absolute
    /// when the whole diagonal is tiny).
    pub fn diag_floor(&self) -> f64 {
        let scale = self.max_diag();
        SINGULARITY_FLOOR * if scale > f64::MIN_POSITIVE { scale } else { 1.0 }
    }
}

fn canonicalize_rows(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        if m[(i, i)] < 0.0 {
            for j in i..m.ncols() {
                m[(i, j)] = -m[(i, j)];
            }
        }
        // normalize -0.0 on the diagonal so factors compare bit-identically
        if m[(i, i)] == 0.0 {
            m[(i, i)] = 0.0;
        }
    }
}

/// Triangular factor `R` of the QR factorization of `m` (rows ≥ cols), with
/// nonnegative diagonal, so that `RᵀR = mᵀm`. The orthogonal factor is never
/// materialized.
pub fn qr_r_factor(m: &DMatrix<f64>) -> Result<UpperTriangular> {
    if m.nrows() < m.ncols() {
        return Err(Error::Argument(format!(
            "QR input needs rows >= cols, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("QR input contains non-finite entries".into()));
    }
    let n = m.ncols();
    let qr = m.clone().qr();
    let r_full = qr.r();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r[(i, j)] = r_full[(i, j)];
        }
    }
    canonicalize_rows(&mut r);
    Ok(UpperTriangular { m: r })
}

/// Solves `Rᵀ x = b` by forward substitution.
pub fn solve_upper_transposed(r: &UpperTriangular, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = r.dim();
    if b.len() != n {
        return Err(Error::Argument(format!(
            "solve dimension mismatch: factor is {n}x{n}, rhs has length {}",
            b.len()
        )));
    }
    let floor = r.diag_floor();
    let mut x = DVector::zeros(n);
    for i in 0..n {
        let d = r.entry(i, i);
        if d.abs() < floor {
            return Err(Error::SingularFactor {
                index: i,
                value: d,
                floor,
            });
        }
        let mut s = b[i];
        for j in 0..i {
            s -= r.entry(j, i) * x[j];
        }
        x[i] = s / d;
    }
    Ok(x)
}

/// `½ log|RᵀR| = Σᵢ log R(i,i)`, read directly off the factor diagonal.
pub fn half_logdet_from_factor(r: &UpperTriangular) -> Result<f64> {
    let floor = r.diag_floor();
    let mut acc = 0.0;
    for i in 0..r.dim() {
        let d = r.entry(i, i);
        if d <= 0.0 || d < floor {
            return Err(Error::SingularFactor {
                index: i,
                value: d,
                floor,
            });
        }
        acc += d.ln();
    }
    Ok(acc)
}
