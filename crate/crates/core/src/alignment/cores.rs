//! Core-tensor update with the projections held fixed.
//!
//! Per domain the problem is `min_G ‖X − Z G‖² + μ Tr(G L Gᵀ)` over the
//! matrix `G` of vectorized cores, with `Z = U^(-k) ⊗ U^(k)` and `μ = 2λ`
//! (the objective counts each edge twice). Writing `Z = Λ Σ Vᵀ`,
//! `M = Λᵀ X` and `Y = Vᵀ G` decouples the rows:
//! `Y_i (Σ_ii² I + μ L) = Σ_ii M_i`.
//!
//! Because every `U^(l)` has orthonormal columns, so does `Z`; hence `Σ = I`,
//! `Λ = Z`, `V = I`, and all rows share `Q = I + μ L`. [`solve_cores`] uses
//! that structure: `M` is the stack of least-squares cores and one Cholesky
//! factorization of `Q` serves every row. [`solve_cores_reference`] follows
//! the general route literally with an explicit SVD of `Z`.

use nalgebra::{Cholesky, DVector};
use rayon::prelude::*;

use super::encode_tensor;
use super::objective::core_matrix;
use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::tensor::{kron, kron_excluding, truncated_svd, vec_matrix, Matrix, ProjectionSet, Tensor};

/// Closed-form minimizer of the objective over both domains' cores.
pub fn update_cores(
    xs: &[Tensor],
    xt: &[Tensor],
    u: &ProjectionSet,
    ls: &Laplacian,
    lt: &Laplacian,
    lambda: f64,
) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    Ok((solve_cores(xs, u, ls, lambda)?, solve_cores(xt, u, lt, lambda)?))
}

/// Core update for one domain.
pub fn solve_cores(x: &[Tensor], u: &ProjectionSet, l: &Laplacian, lambda: f64) -> Result<Vec<Tensor>> {
    check_inputs(x, l, lambda)?;
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let encoded: Vec<Tensor> = x.par_iter().map(|x| encode_tensor(x, u)).collect::<Result<_>>()?;
    let has_edges = l.degrees.iter().any(|&d| d != 0.0);
    if lambda == 0.0 || !has_edges {
        return Ok(encoded);
    }
    let n = x.len();
    let q = Matrix::identity(n, n) + &l.matrix * (2.0 * lambda);
    let chol = Cholesky::new(q).ok_or_else(|| Error::NonFinite {
        context: "Cholesky factorization of I + 2λL".into(),
        iteration: 0,
    })?;
    let m = core_matrix(&encoded);
    let gt = chol.solve(&m.transpose());
    let shape = u.core_dims();
    (0..n)
        .map(|i| Tensor::new(shape.clone(), gt.row(i).iter().copied().collect()))
        .collect()
}

/// Literal per-row solution through the SVD of `Z = U^(-mode) ⊗ U^(mode)`.
///
/// Rows with a zero singular value solve `(μ L + ε I) y = 0`, i.e. `y = 0`.
pub fn solve_cores_reference(
    x: &[Tensor],
    u: &ProjectionSet,
    l: &Laplacian,
    lambda: f64,
    mode: usize,
) -> Result<Vec<Tensor>> {
    check_inputs(x, l, lambda)?;
    if mode >= u.order() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: u.order(),
        });
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let n = x.len();
    let z = kron(&kron_excluding(u.factors(), mode), u.factor(mode));
    let xv = Matrix::from_columns(
        &x.iter()
            .map(|t| Ok(vec_matrix(&t.unfold(mode)?)))
            .collect::<Result<Vec<DVector<f64>>>>()?,
    );
    if xv.nrows() != z.nrows() {
        return Err(Error::dims("tensor size does not match projections"));
    }
    let dc = z.ncols();
    let svd = truncated_svd(&z, dc)?;
    let m = svd.u.transpose() * &xv;
    let mu = 2.0 * lambda;
    let mut y = Matrix::zeros(dc, n);
    for i in 0..dc {
        let s = svd.s[i];
        let mut q = &l.matrix * mu;
        for d in 0..n {
            q[(d, d)] += s * s;
        }
        if s == 0.0 {
            continue;
        }
        let rhs = m.row(i).transpose() * s;
        let sol = match Cholesky::new(q.clone()) {
            Some(c) => c.solve(&rhs),
            None => q.lu().solve(&rhs).ok_or_else(|| Error::NonFinite {
                context: "singular row system in core update".into(),
                iteration: 0,
            })?,
        };
        y.set_row(i, &sol.transpose());
    }
    let g = &svd.v * y;

    let core_dims = u.core_dims();
    let rows = core_dims[mode];
    let cols = dc / rows;
    (0..n)
        .map(|c| {
            let unfolded = Matrix::from_column_slice(rows, cols, g.column(c).as_slice());
            Tensor::fold(&unfolded, mode, &core_dims)
        })
        .collect()
}

fn check_inputs(x: &[Tensor], l: &Laplacian, lambda: f64) -> Result<()> {
    if x.len() != l.len() {
        return Err(Error::dims(format!("{} tensors but Laplacian of size {}", x.len(), l.len())));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, source_graph};
    use crate::tensor::orthonormality_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Matrix {
        let m = Matrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
        m.qr().q().columns(0, k).into_owned()
    }

    fn setup(seed: u64) -> (Vec<Tensor>, ProjectionSet, Laplacian) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = ProjectionSet::new(vec![
            random_orthonormal(&mut rng, 3, 2),
            random_orthonormal(&mut rng, 2, 1),
            random_orthonormal(&mut rng, 4, 2),
        ])
        .unwrap();
        let x: Vec<Tensor> = (0..6).map(|_| Tensor::from_fn(&[3, 2, 4], |_| rng.gen_range(-1.0..1.0))).collect();
        let l = laplacian(&source_graph(&[1, 1, 2, 2, 2, 3]));
        (x, u, l)
    }

    #[test]
    fn kronecker_operator_has_orthonormal_columns() {
        let (_, u, _) = setup(1);
        for k in 0..3 {
            let z = kron(&kron_excluding(u.factors(), k), u.factor(k));
            assert!(orthonormality_error(&z) < 1e-10);
        }
    }

    #[test]
    fn lambda_zero_is_least_squares_projection() {
        let (x, u, l) = setup(2);
        let g = solve_cores(&x, &u, &l, 0.0).unwrap();
        let z = kron(&kron_excluding(u.factors(), 0), u.factor(0));
        for (xi, gi) in x.iter().zip(&g) {
            let want = z.transpose() * xi.to_vector();
            let got = gi.to_vector();
            assert!((want - got).amax() < 1e-10);
        }
    }

    #[test]
    fn fast_and_reference_paths_agree_on_every_mode() {
        let (x, u, l) = setup(3);
        for lambda in [0.0, 1e-3, 0.5, 10.0] {
            let fast = solve_cores(&x, &u, &l, lambda).unwrap();
            for mode in 0..3 {
                let slow = solve_cores_reference(&x, &u, &l, lambda, mode).unwrap();
                for (a, b) in fast.iter().zip(&slow) {
                    assert!(a.distance_sq(b).unwrap().sqrt() < 1e-10, "lambda {lambda} mode {mode}");
                }
            }
        }
    }

    #[test]
    fn huge_lambda_collapses_connected_cores() {
        let (x, u, _) = setup(4);
        let l = laplacian(&source_graph(&[1; 6]));
        let g = solve_cores(&x, &u, &l, 1e9).unwrap();
        let mut spread = 0.0f64;
        for a in &g {
            for b in &g {
                spread = spread.max(a.distance_sq(b).unwrap().sqrt());
            }
        }
        assert!(spread <= 1e-3, "spread {spread}");
        // The consensus is the mean of the unregularized cores.
        let ls = solve_cores(&x, &u, &l, 0.0).unwrap();
        let mut mean = Tensor::zeros(ls[0].shape());
        for t in &ls {
            for (m, v) in mean.data_mut().iter_mut().zip(t.data()) {
                *m += v / 6.0;
            }
        }
        assert!(g[0].distance_sq(&mean).unwrap().sqrt() < 1e-3);
    }

    #[test]
    fn size_mismatch_is_error() {
        let (x, u, l) = setup(5);
        assert!(solve_cores(&x[..5], &u, &l, 1.0).is_err());
        assert!(solve_cores(&x, &u, &l, -1.0).is_err());
    }
}
