use super::{leading_eigenvectors, Matrix, ProjectionSet, Tensor};
use crate::error::{Error, Result};

/// `t ≈ [[core; factors]]` with orthonormal factors.
#[derive(Debug, Clone)]
pub struct TuckerModel {
    pub core: Tensor,
    pub factors: ProjectionSet,
    /// `‖t − [[core; factors]]‖_F` after HOSVD and after every HOOI sweep.
    pub error_trace: Vec<f64>,
}

impl TuckerModel {
    pub fn reconstruct(&self) -> Result<Tensor> {
        self.factors.reconstruct(&self.core)
    }
}

/// Tucker decomposition by HOSVD initialization followed by HOOI sweeps.
///
/// Sweeps stop after `max_iters` or once the relative decrease of the fit
/// error drops below `tol`.
pub fn tucker_decompose(t: &Tensor, ranks: &[usize], max_iters: usize, tol: f64) -> Result<TuckerModel> {
    if ranks.len() != t.order() {
        return Err(Error::dims(format!("{} ranks for a tensor of order {}", ranks.len(), t.order())));
    }
    let opt: Vec<Option<usize>> = ranks.iter().map(|&r| Some(r)).collect();
    let (factors, error_trace) = tucker_decompose_modes(t, &opt, max_iters, tol)?;
    let factors: Vec<Matrix> = factors.into_iter().map(|f| f.expect("all modes factored")).collect();
    let factors = ProjectionSet::new(factors)?;
    let core = factors.project(t)?;
    Ok(TuckerModel {
        core,
        factors,
        error_trace,
    })
}

/// Partial Tucker decomposition: modes with `None` are left untouched (an
/// implicit identity factor), the rest get orthonormal factors of the given
/// rank. Returns the factors and the fit-error trace.
pub fn tucker_decompose_modes(
    t: &Tensor,
    ranks: &[Option<usize>],
    max_iters: usize,
    tol: f64,
) -> Result<(Vec<Option<Matrix>>, Vec<f64>)> {
    if ranks.len() != t.order() {
        return Err(Error::dims(format!("{} ranks for a tensor of order {}", ranks.len(), t.order())));
    }
    for (k, r) in ranks.iter().enumerate() {
        if let Some(r) = *r {
            if r == 0 || r > t.shape()[k] {
                return Err(Error::RankExceedsExtent {
                    mode: k,
                    rank: r,
                    extent: t.shape()[k],
                });
            }
        }
    }

    // HOSVD: leading left singular vectors of each unfolding.
    let mut factors: Vec<Option<Matrix>> = Vec::with_capacity(t.order());
    for (k, r) in ranks.iter().enumerate() {
        factors.push(match r {
            Some(r) => Some(leading_left_vectors(t, k, *r)?),
            None => None,
        });
    }
    let mut trace = vec![fit_error(t, &factors)?];

    for _ in 0..max_iters {
        for k in 0..t.order() {
            let Some(r) = ranks[k] else { continue };
            let mut y = t.clone();
            for (l, f) in factors.iter().enumerate() {
                if l != k {
                    if let Some(u) = f {
                        y = y.mode_product_transposed(u, l)?;
                    }
                }
            }
            factors[k] = Some(leading_left_vectors(&y, k, r)?);
        }
        let err = fit_error(t, &factors)?;
        let prev = *trace.last().expect("trace seeded");
        trace.push(err);
        if prev <= 0.0 || (prev - err) <= tol * prev {
            break;
        }
    }
    Ok((factors, trace))
}

fn leading_left_vectors(t: &Tensor, mode: usize, rank: usize) -> Result<Matrix> {
    let m = t.unfold(mode)?;
    let gram = &m * m.transpose();
    leading_eigenvectors(&gram, rank)
}

fn fit_error(t: &Tensor, factors: &[Option<Matrix>]) -> Result<f64> {
    let mut g = t.clone();
    for (l, f) in factors.iter().enumerate() {
        if let Some(u) = f {
            g = g.mode_product_transposed(u, l)?;
        }
    }
    for (l, f) in factors.iter().enumerate() {
        if let Some(u) = f {
            g = g.mode_product(u, l)?;
        }
    }
    Ok(t.distance_sq(&g)?.sqrt())
}
