use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{multi_mode_product_excluding, truncated_svd, Matrix, ProjectionSet, Tensor};

/// Orthonormal-column `X` maximizing `Tr(Xᵀ C)`: with `C = Λ D Vᵀ` (thin
/// SVD), `X = Λ Vᵀ`.
///
/// When `C` is rank deficient the maximizer is not unique; the singular
/// vectors of the null directions (orthonormal by construction of the SVD)
/// fill the remaining columns.
pub fn procrustes_from_cross(c: &Matrix) -> Result<Matrix> {
    let (m, p) = c.shape();
    if p > m {
        return Err(Error::dims(format!("Procrustes target {m}x{p} has more columns than rows")));
    }
    let svd = truncated_svd(c, p)?;
    Ok(&svd.u * svd.v.transpose())
}

/// `argmin ‖A − X B‖_F` over `X` with orthonormal columns, for
/// `A ∈ R^{m×n}`, `B ∈ R^{p×n}`.
pub fn procrustes(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::dims(format!("A has {} columns, B has {}", a.ncols(), b.ncols())));
    }
    procrustes_from_cross(&(a * b.transpose()))
}

/// One or more sweeps of per-mode Procrustes updates of the shared
/// projections, given all sample tensors and their cores.
///
/// For mode `k`, with `B_i = [G_i ×_{l≠k} U^(l)]_(k)`, the update is the
/// Procrustes solution for `Σ_i X_i(k) B_iᵀ`, which minimizes
/// `Σ_i ‖X_i(k) − U^(k) B_i‖²`.
pub fn update_projections(x: &[&Tensor], g: &[&Tensor], u: &ProjectionSet, sweeps: usize) -> Result<ProjectionSet> {
    let mut u = u.clone();
    for _ in 0..sweeps {
        for k in 0..u.order() {
            let uk = update_mode(x, g, &u, k)?;
            u.set_factor(k, uk);
        }
    }
    Ok(u)
}

pub(crate) fn update_mode(x: &[&Tensor], g: &[&Tensor], u: &ProjectionSet, k: usize) -> Result<Matrix> {
    if x.len() != g.len() || x.is_empty() {
        return Err(Error::dims(format!("{} tensors but {} cores", x.len(), g.len())));
    }
    let (rows, cols) = u.factor(k).shape();
    let parts = x
        .par_iter()
        .zip(g.par_iter())
        .map(|(x, g)| {
            let b = multi_mode_product_excluding(g, u.factors(), k)?;
            if b.shape()[k] != cols || x.shape()[k] != rows {
                return Err(Error::dims("core or tensor does not match projections"));
            }
            Ok(x.unfold(k)? * b.unfold(k)?.transpose())
        })
        .collect::<Result<Vec<Matrix>>>()?;
    let cross = parts.into_iter().fold(Matrix::zeros(rows, cols), |a, b| a + b);
    procrustes_from_cross(&cross)
}
