//! Dense real linear algebra: symmetric eigendecomposition, Cholesky
//! factorization and the symmetric-definite generalized eigenproblem.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. All eigen routines return pairs
//! sorted by descending eigenvalue, with each eigenvector's largest-magnitude
//! entry made positive so that outputs are reproducible.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance used to accept a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite: pivot {index} is {pivot:.3e}; increase the ridge regularizer")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("requested {k} eigenpairs from a problem of size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Eigenpairs sorted by non-increasing eigenvalue. Column `j` of `vectors`
/// pairs with `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenResult {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps only the leading `k` pairs.
    pub fn truncate(mut self, k: usize) -> Self {
        let k = k.min(self.values.len());
        self.values.truncate(k);
        self.vectors = self.vectors.columns(0, k).into_owned();
        self
    }
}

pub fn frobenius(a: &Matrix) -> f64 {
    a.norm()
}

fn ensure_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

fn ensure_finite(a: &Matrix) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Largest absolute difference between `a[i,j]` and `a[j,i]`.
pub fn asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn ensure_symmetric(a: &Matrix) -> Result<()> {
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Returns `(a + aᵀ) / 2`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Flips each column so that its largest-magnitude entry is positive.
/// The first occurrence wins when several entries share the maximum.
pub fn normalize_signs(vectors: &mut Matrix) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn sorted_descending(values: &Vector, vectors: &Matrix) -> EigenResult {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable: equal eigenvalues keep the decomposition's order
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let n = vectors.nrows();
    let mut out = Matrix::zeros(n, order.len());
    for (dst, &src) in order.iter().enumerate() {
        out.set_column(dst, &vectors.column(src));
    }
    EigenResult {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: out,
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub fn symmetric_eig(a: &Matrix) -> Result<EigenResult> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    ensure_symmetric(a)?;
    if n == 0 {
        return Ok(EigenResult {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let sym = symmetrize(a);
    let max_iter = 1000 * n.max(10);
    let eig =
        SymmetricEigen::try_new(sym, f64::EPSILON, max_iter).ok_or(LinalgError::NoConvergence)?;
    let mut res = sorted_descending(&eig.eigenvalues, &eig.eigenvectors);
    normalize_signs(&mut res.vectors);
    Ok(res)
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = b`.
pub fn cholesky(b: &Matrix) -> Result<Matrix> {
    let n = ensure_square(b)?;
    ensure_finite(b)?;
    ensure_symmetric(b)?;
    let b = symmetrize(b);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = b[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = b[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Top-`k` solutions of `A w = λ B w` for symmetric `A` and symmetric
/// positive definite `B`.
///
/// Factors `B = L Lᵀ`, diagonalizes `L⁻¹ A L⁻ᵀ`, and maps eigenvectors back
/// through `L⁻ᵀ`. The returned vectors are B-orthonormal.
pub fn generalized_eig(a: &Matrix, b: &Matrix, k: usize) -> Result<EigenResult> {
    let n = ensure_square(a)?;
    let nb = ensure_square(b)?;
    if n != nb {
        return Err(LinalgError::DimensionMismatch(format!(
            "pencil sizes differ: {n} vs {nb}"
        )));
    }
    if k == 0 || k > n {
        return Err(LinalgError::KTooLarge { k, n });
    }
    ensure_finite(a)?;
    ensure_symmetric(a)?;
    let l = cholesky(b)?;
    let a = symmetrize(a);

    // C = L⁻¹ A L⁻ᵀ = L⁻¹ (L⁻¹ A)ᵀ since A is symmetric
    let y = l
        .solve_lower_triangular(&a)
        .ok_or(LinalgError::NoConvergence)?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(LinalgError::NoConvergence)?;
    let std = symmetric_eig(&symmetrize(&c))?.truncate(k);

    let lt = l.transpose();
    let mut w = lt
        .solve_upper_triangular(&std.vectors)
        .ok_or(LinalgError::NoConvergence)?;
    normalize_signs(&mut w);
    Ok(EigenResult {
        values: std.values,
        vectors: w,
    })
}

/// Orthonormal basis (n×k) for the column space of a full-rank n×k matrix.
pub fn orthonormal_basis(a: &Matrix) -> Matrix {
    a.clone().qr().q()
}

/// Smallest singular value.
pub fn min_singular_value(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Largest principal angle (radians) between the column spaces of `a` and `b`.
///
/// Computed as `asin(‖(I − QaQaᵀ) Qb‖₂)`, which stays accurate for tiny
/// angles. Both matrices must have the same shape and full column rank.
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(LinalgError::DimensionMismatch(format!(
            "subspace bases {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let residual = &qb - &qa * (qa.transpose() * &qb);
    let s = residual
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    Ok(s.min(1.0).asin())
}
