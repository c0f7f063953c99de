//! Manifold-regularized tensor alignment.
//!
//! Source and target sample tensors are factored jointly as
//! `X ≈ [[G; U]]` with one shared set of orthonormal projections `U`. The
//! objective is
//!
//! ```text
//! Σ_i ‖X_S^i − [[G_S^i; U]]‖² + Σ_j ‖X_T^j − [[G_T^j; U]]‖²
//!   + λ (Σ_ij w^S_ij ‖G_S^i − G_S^j‖² + Σ_ij w^T_ij ‖G_T^i − G_T^j‖²)
//! ```
//!
//! where both double sums run over ordered pairs, so each unordered edge is
//! counted twice and the regularizer equals `2λ Tr(G L Gᵀ)` per domain.
//! [`align`] alternates closed-form core updates with one orthogonal
//! Procrustes step per mode until the relative objective decrease drops
//! below the configured tolerance.

mod cores;
mod model;
mod objective;
mod projections;
mod solver;

pub use cores::{solve_cores, solve_cores_reference, update_cores};
pub use model::{AlignmentModel, ModelFile};
pub use objective::{objective, objective_parts, ObjectiveParts};
pub use projections::{procrustes, procrustes_from_cross, update_projections};
pub use solver::{align, align_with_graphs, center_fiber, initial_projections};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ProjectionSet, Tensor};

/// Default regularization weight.
pub const DEFAULT_LAMBDA: f64 = 1e-3;
/// Default core extents for `5 x 5 x 20` inputs.
pub const DEFAULT_CORE_DIMS: [usize; 3] = [1, 1, 10];
/// Default stopping threshold on the relative objective decrease.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub core_dims: Vec<usize>,
    pub lambda: f64,
    pub max_outer_iters: usize,
    pub rel_tol: f64,
    /// Full passes over all modes of the projection update per outer iteration.
    pub inner_projection_sweeps: usize,
    /// Neighbour count for the target kNN graph.
    pub target_neighbors: usize,
    /// HOOI sweeps in the Tucker initialization.
    pub init_sweeps: usize,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            core_dims: DEFAULT_CORE_DIMS.to_vec(),
            lambda: DEFAULT_LAMBDA,
            max_outer_iters: 30,
            rel_tol: DEFAULT_REL_TOL,
            inner_projection_sweeps: 1,
            target_neighbors: crate::graph::DEFAULT_TARGET_NEIGHBORS,
            init_sweeps: 10,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self, input_dims: &[usize]) -> Result<()> {
        if self.core_dims.len() != input_dims.len() {
            return Err(Error::InvalidConfig(format!(
                "core dims {:?} do not match tensor order {}",
                self.core_dims,
                input_dims.len()
            )));
        }
        for (k, (&j, &i)) in self.core_dims.iter().zip(input_dims).enumerate() {
            if j == 0 || j > i {
                return Err(Error::RankExceedsExtent {
                    mode: k,
                    rank: j,
                    extent: i,
                });
            }
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::InvalidConfig(format!("rel_tol must be > 0, got {}", self.rel_tol)));
        }
        if self.max_outer_iters == 0 || self.inner_projection_sweeps == 0 {
            return Err(Error::InvalidConfig("iteration counts must be positive".into()));
        }
        Ok(())
    }
}

/// Least-squares core of `x` in the subspace spanned by `u`:
/// `x ×_1 U^(1)ᵀ ... ×_M U^(M)ᵀ`. This is the unregularized (`λ = 0`) core
/// update applied to a single tensor.
pub fn encode_tensor(x: &Tensor, u: &ProjectionSet) -> Result<Tensor> {
    if x.shape() != u.input_dims().as_slice() {
        return Err(Error::dims(format!(
            "tensor {:?} does not match projections {:?}",
            x.shape(),
            u.input_dims()
        )));
    }
    u.project(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Matrix {
        let m = Matrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
        m.qr().q().columns(0, k).into_owned()
    }

    #[test]
    fn encode_recovers_planted_core() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = ProjectionSet::new(vec![
            random_orthonormal(&mut rng, 4, 2),
            random_orthonormal(&mut rng, 3, 1),
            random_orthonormal(&mut rng, 5, 3),
        ])
        .unwrap();
        let g = Tensor::from_fn(&[2, 1, 3], |_| rng.gen_range(-1.0..1.0));
        let x = u.reconstruct(&g).unwrap();
        let back = encode_tensor(&x, &u).unwrap();
        assert!(back.distance_sq(&g).unwrap().sqrt() <= 1e-10);

        let zero = encode_tensor(&Tensor::zeros(&[4, 3, 5]), &u).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_residual_is_orthogonal_to_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = ProjectionSet::new(vec![
            random_orthonormal(&mut rng, 4, 2),
            random_orthonormal(&mut rng, 4, 2),
            random_orthonormal(&mut rng, 6, 3),
        ])
        .unwrap();
        let x = Tensor::from_fn(&[4, 4, 6], |_| rng.gen_range(-1.0..1.0));
        let g = encode_tensor(&x, &u).unwrap();
        let proj = u.reconstruct(&g).unwrap();
        let resid = x.sub(&proj).unwrap();
        // The residual has no component left in the subspace.
        let leak = encode_tensor(&resid, &u).unwrap();
        assert!(leak.norm() <= 1e-8);
        // Pythagoras: ‖x‖² = ‖proj‖² + ‖resid‖².
        assert!((x.norm_sq() - proj.norm_sq() - resid.norm_sq()).abs() <= 1e-8);
    }

    #[test]
    fn encode_rejects_shape_mismatch() {
        let u = ProjectionSet::identity(&[2, 2, 2]);
        assert!(encode_tensor(&Tensor::zeros(&[2, 2, 3]), &u).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = AlignmentConfig::default();
        assert!(cfg.validate(&[5, 5, 20]).is_ok());
        assert!(cfg.validate(&[5, 5, 8]).is_err());
        let neg = AlignmentConfig {
            lambda: -1.0,
            ..AlignmentConfig::default()
        };
        assert!(neg.validate(&[5, 5, 20]).is_err());
        let tol = AlignmentConfig {
            rel_tol: 0.0,
            ..AlignmentConfig::default()
        };
        assert!(tol.validate(&[5, 5, 20]).is_err());
    }
}
