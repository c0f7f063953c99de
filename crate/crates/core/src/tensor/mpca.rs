//! Multilinear PCA over a set of equally shaped tensors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{leading_eigenvectors, Matrix, ProjectionSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcaConfig {
    pub target_dims: Vec<usize>,
    pub max_iters: usize,
    pub tol: f64,
}

impl MpcaConfig {
    pub fn new(target_dims: Vec<usize>) -> Self {
        Self {
            target_dims,
            max_iters: 5,
            tol: 1e-8,
        }
    }
}

/// A fitted MPCA model: the sample mean plus one projection per mode.
///
/// Modes whose target extent equals the input extent keep an identity factor,
/// so spatial modes are never rotated when only the spectral mode is reduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mpca {
    mean: Tensor,
    projections: ProjectionSet,
    /// Captured scatter after initialization and after each sweep.
    pub scatter_trace: Vec<f64>,
}

impl Mpca {
    pub fn fit(samples: &[Tensor], cfg: &MpcaConfig) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("MPCA samples"))?;
        let shape = first.shape().to_vec();
        if cfg.target_dims.len() != shape.len() {
            return Err(Error::dims(format!(
                "MPCA target {:?} does not match sample order {}",
                cfg.target_dims,
                shape.len()
            )));
        }
        for (k, (&d, &n)) in cfg.target_dims.iter().zip(&shape).enumerate() {
            if d == 0 || d > n {
                return Err(Error::RankExceedsExtent {
                    mode: k,
                    rank: d,
                    extent: n,
                });
            }
        }
        if let Some(bad) = samples.iter().find(|s| s.shape() != shape.as_slice()) {
            return Err(Error::dims(format!("MPCA sample shape {:?} != {:?}", bad.shape(), shape)));
        }

        let mean = mean_tensor(samples, &shape);
        let centered: Vec<Tensor> = samples.par_iter().map(|s| s.sub(&mean)).collect::<Result<_>>()?;

        let reduced: Vec<bool> = cfg.target_dims.iter().zip(&shape).map(|(d, n)| d < n).collect();
        let mut factors: Vec<Matrix> = shape.iter().map(|&n| Matrix::identity(n, n)).collect();

        // Full-projection initialization: eigenvectors of each mode's total scatter.
        for k in 0..shape.len() {
            if reduced[k] {
                let phi = mode_scatter(&centered, &factors, k, &reduced, true)?;
                factors[k] = leading_eigenvectors(&phi, cfg.target_dims[k])?;
            }
        }
        let mut trace = vec![captured_scatter(&centered, &factors)?];
        if reduced.iter().filter(|r| **r).count() > 1 {
            for _ in 0..cfg.max_iters {
                for k in 0..shape.len() {
                    if reduced[k] {
                        let phi = mode_scatter(&centered, &factors, k, &reduced, false)?;
                        factors[k] = leading_eigenvectors(&phi, cfg.target_dims[k])?;
                    }
                }
                let psi = captured_scatter(&centered, &factors)?;
                let prev = *trace.last().expect("seeded");
                trace.push(psi);
                if (psi - prev).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
                    break;
                }
            }
        }

        Ok(Self {
            mean,
            projections: ProjectionSet::new(factors)?,
            scatter_trace: trace,
        })
    }

    pub fn projections(&self) -> &ProjectionSet {
        &self.projections
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.projections.core_dims()
    }

    /// Centers `x` by the training mean and projects it.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        self.projections.project(&x.sub(&self.mean)?)
    }

    /// Maps a reduced tensor back to the input space (adds the mean back).
    pub fn reconstruct(&self, y: &Tensor) -> Result<Tensor> {
        let mut x = self.projections.reconstruct(y)?;
        for (v, m) in x.data_mut().iter_mut().zip(self.mean.data()) {
            *v += m;
        }
        Ok(x)
    }
}

/// Fits MPCA on `samples` and returns the model together with the projected samples.
pub fn mpca_reduce(samples: &[Tensor], target_dims: &[usize]) -> Result<(Mpca, Vec<Tensor>)> {
    let model = Mpca::fit(samples, &MpcaConfig::new(target_dims.to_vec()))?;
    let projected = samples.par_iter().map(|s| model.project(s)).collect::<Result<Vec<_>>>()?;
    Ok((model, projected))
}

fn mean_tensor(samples: &[Tensor], shape: &[usize]) -> Tensor {
    let mut mean = Tensor::zeros(shape);
    for s in samples {
        for (m, v) in mean.data_mut().iter_mut().zip(s.data()) {
            *m += v;
        }
    }
    mean.scale(1.0 / samples.len() as f64);
    mean
}

fn mode_scatter(centered: &[Tensor], factors: &[Matrix], k: usize, reduced: &[bool], full: bool) -> Result<Matrix> {
    let n = centered[0].shape()[k];
    let parts = centered
        .par_iter()
        .map(|x| {
            let mut y = x.clone();
            if !full {
                for (l, u) in factors.iter().enumerate() {
                    if l != k && reduced[l] {
                        y = y.mode_product_transposed(u, l)?;
                    }
                }
            }
            let m = y.unfold(k)?;
            Ok(&m * m.transpose())
        })
        .collect::<Result<Vec<_>>>()?;
    // Summed in input order so results do not depend on thread scheduling.
    Ok(parts.into_iter().fold(Matrix::zeros(n, n), |a, b| a + b))
}

fn captured_scatter(centered: &[Tensor], factors: &[Matrix]) -> Result<f64> {
    let parts = centered
        .par_iter()
        .map(|x| Ok(super::multi_mode_product_transposed(x, factors)?.norm_sq()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.into_iter().sum())
}
