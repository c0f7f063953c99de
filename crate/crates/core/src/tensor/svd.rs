use nalgebra::{DVector, SymmetricEigen};

use super::Matrix;
use crate::error::{Error, Result};

const EIGEN_MAX_ITERS: usize = 200_000;

/// Thin, rank-`k` singular value decomposition `m ≈ u · diag(s) · vᵀ`.
///
/// Singular values are sorted in nonincreasing order. Each left singular
/// vector is signed so that its largest-magnitude entry is positive, and the
/// matching right vector is flipped with it.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: DVector<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

pub fn truncated_svd(m: &Matrix, k: usize) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("matrix for SVD"));
    }
    let r = rows.min(cols);
    if k > r {
        return Err(Error::dims(format!("SVD rank {k} exceeds min({rows}, {cols})")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "SVD input".into(),
            iteration: 0,
        });
    }
    // nalgebra's implicit-shift SVD can return a factorization that does not
    // reproduce rank-deficient inputs, so the decomposition comes from faer.
    let f = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = f.thin_svd().map_err(|_| Error::SvdNotConverged { rows, cols })?;
    let (fu, fs, fv) = (svd.U(), svd.S(), svd.V());
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]).then(a.cmp(&b)));
    let order = &order[..k];
    let mut u = Matrix::from_fn(rows, k, |i, j| fu[(i, order[j])]);
    let mut v = Matrix::from_fn(cols, k, |i, j| fv[(i, order[j])]);
    let s = DVector::from_iterator(k, order.iter().map(|&j| fs[j].max(0.0)));
    for j in 0..k {
        if flip_sign(u.column(j).iter()) {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(Svd { u, s, v })
}

/// True when the largest-magnitude entry is negative (first one wins ties).
fn flip_sign<'a>(col: impl Iterator<Item = &'a f64>) -> bool {
    let mut best = 0.0f64;
    for v in col {
        if v.abs() > best.abs() {
            best = *v;
        }
    }
    best < 0.0
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in nonincreasing
/// order and the same sign convention as [`truncated_svd`].
pub fn symmetric_eigen_desc(m: &Matrix) -> Result<(DVector<f64>, Matrix)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::dims(format!(
            "symmetric eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "eigendecomposition input".into(),
            iteration: 0,
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITERS).ok_or(Error::EigenNotConverged { dim: n })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if flip_sign(col.iter()) {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// The `k` leading eigenvectors of a symmetric matrix as an `n x k` matrix.
pub fn leading_eigenvectors(m: &Matrix, k: usize) -> Result<Matrix> {
    if k > m.nrows() {
        return Err(Error::dims(format!("{k} eigenvectors requested from a {}x{} matrix", m.nrows(), m.ncols())));
    }
    let (_, vecs) = symmetric_eigen_desc(m)?;
    Ok(vecs.columns(0, k).into_owned())
}
