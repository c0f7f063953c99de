use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::tensor::{Matrix, ProjectionSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub reconstruction: f64,
    /// `Σ_ij w_ij ‖g_i − g_j‖²` summed over both domains (unscaled by λ).
    pub manifold: f64,
    pub total: f64,
}

/// Value of the alignment objective for the given cores and projections.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    xs: &[Tensor],
    xt: &[Tensor],
    gs: &[Tensor],
    gt: &[Tensor],
    u: &ProjectionSet,
    ls: &Laplacian,
    lt: &Laplacian,
    lambda: f64,
) -> Result<f64> {
    Ok(objective_parts(xs, xt, gs, gt, u, ls, lt, lambda)?.total)
}

#[allow(clippy::too_many_arguments)]
pub fn objective_parts(
    xs: &[Tensor],
    xt: &[Tensor],
    gs: &[Tensor],
    gt: &[Tensor],
    u: &ProjectionSet,
    ls: &Laplacian,
    lt: &Laplacian,
    lambda: f64,
) -> Result<ObjectiveParts> {
    let reconstruction = reconstruction_error(xs, gs, u)? + reconstruction_error(xt, gt, u)?;
    let manifold = manifold_term(gs, ls)? + manifold_term(gt, lt)?;
    Ok(ObjectiveParts {
        reconstruction,
        manifold,
        total: reconstruction + lambda * manifold,
    })
}

pub(crate) fn reconstruction_error(x: &[Tensor], g: &[Tensor], u: &ProjectionSet) -> Result<f64> {
    if x.len() != g.len() {
        return Err(Error::dims(format!("{} tensors but {} cores", x.len(), g.len())));
    }
    let parts = x
        .par_iter()
        .zip(g.par_iter())
        .map(|(x, g)| x.distance_sq(&u.reconstruct(g)?))
        .collect::<Result<Vec<f64>>>()?;
    // Sequential sum keeps the value independent of thread scheduling.
    Ok(parts.into_iter().sum())
}

/// `Σ_ij w_ij ‖g_i − g_j‖² = 2 Tr(G L Gᵀ)`.
pub(crate) fn manifold_term(g: &[Tensor], l: &Laplacian) -> Result<f64> {
    if g.len() != l.len() {
        return Err(Error::dims(format!("{} cores but Laplacian of size {}", g.len(), l.len())));
    }
    if g.is_empty() {
        return Ok(0.0);
    }
    Ok(2.0 * l.trace_form(&core_matrix(g)))
}

/// Cores as columns of a `D_c x n` matrix.
pub(crate) fn core_matrix(g: &[Tensor]) -> Matrix {
    let dc = g[0].len();
    Matrix::from_fn(dc, g.len(), |r, c| g[c].data()[r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, source_graph, WeightGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cores_give_data_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Tensor> = (0..3).map(|_| Tensor::from_fn(&[2, 2, 3], |_| rng.gen_range(-1.0..1.0))).collect();
        let xt: Vec<Tensor> = (0..2).map(|_| Tensor::from_fn(&[2, 2, 3], |_| rng.gen_range(-1.0..1.0))).collect();
        let u = ProjectionSet::identity(&[2, 2, 3]);
        let gs = vec![Tensor::zeros(&[2, 2, 3]); 3];
        let gt = vec![Tensor::zeros(&[2, 2, 3]); 2];
        let ls = laplacian(&source_graph(&[1, 1, 2]));
        let lt = laplacian(&WeightGraph::empty(2));
        let v = objective(&xs, &xt, &gs, &gt, &u, &ls, &lt, 0.0).unwrap();
        let energy: f64 = xs.iter().chain(&xt).map(Tensor::norm_sq).sum();
        assert!((v - energy).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_without_edges_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gs: Vec<Tensor> = (0..3).map(|_| Tensor::from_fn(&[2, 2, 3], |_| rng.gen_range(-1.0..1.0))).collect();
        let u = ProjectionSet::identity(&[2, 2, 3]);
        let l = laplacian(&WeightGraph::empty(3));
        let v = objective(&gs, &gs, &gs, &gs, &u, &l, &l, 1.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn trace_form_matches_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<u8> = (0..7).map(|_| rng.gen_range(0..3)).collect();
        let g = source_graph(&labels);
        let l = laplacian(&g);
        let cores: Vec<Tensor> = (0..7).map(|_| Tensor::from_fn(&[1, 2, 3], |_| rng.gen_range(-1.0..1.0))).collect();
        let mut pairwise = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                pairwise += g.weight(i, j) * cores[i].distance_sq(&cores[j]).unwrap();
            }
        }
        let trace = manifold_term(&cores, &l).unwrap();
        assert!((trace - pairwise).abs() <= 1e-8 * pairwise.max(1.0));
    }
}
