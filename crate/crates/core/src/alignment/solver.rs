use log::{debug, warn};
use rayon::prelude::*;

use super::cores::update_cores;
use super::objective::objective;
use super::projections::update_mode;
use super::{encode_tensor, AlignmentConfig, AlignmentModel};
use crate::error::{Error, Result};
use crate::graph::{laplacian, source_graph, target_graph, Laplacian};
use crate::tensor::{tucker_decompose_modes, ProjectionSet, Tensor};
use crate::ClassId;

/// Relative slack allowed on the per-half-step monotonicity check.
const MONOTONE_SLACK: f64 = 1e-9;

/// Fiber along the last mode through the center of all other modes; for a
/// `w x w x B` patch this is the center pixel's spectrum.
pub fn center_fiber(t: &Tensor) -> Vec<f64> {
    let last = t.order() - 1;
    let mut idx: Vec<usize> = t.shape().iter().map(|&n| n / 2).collect();
    (0..t.shape()[last])
        .map(|b| {
            idx[last] = b;
            t.get(&idx)
        })
        .collect()
}

/// Runs the alignment with graphs built internally: the source graph from
/// `labels_s`, the target kNN graph from the center fibers of `xt`.
pub fn align(xs: &[Tensor], xt: &[Tensor], labels_s: &[ClassId], cfg: &AlignmentConfig) -> Result<AlignmentModel> {
    if labels_s.len() != xs.len() {
        return Err(Error::dims(format!("{} source tensors but {} labels", xs.len(), labels_s.len())));
    }
    let ls = laplacian(&source_graph(labels_s));
    let spectra: Vec<Vec<f64>> = xt.iter().map(center_fiber).collect();
    let lt = laplacian(&target_graph(&spectra, cfg.target_neighbors)?);
    align_with_graphs(xs, xt, &ls, &lt, cfg)
}

/// Tucker initialization of the shared projections on the concatenation of
/// all sample tensors along a trailing sample mode.
pub fn initial_projections(all: &[&Tensor], core_dims: &[usize], sweeps: usize) -> Result<ProjectionSet> {
    let first = all.first().ok_or(Error::Empty("alignment samples"))?;
    let mut shape = first.shape().to_vec();
    let mut data = Vec::with_capacity(first.len() * all.len());
    for t in all {
        if t.shape() != first.shape() {
            return Err(Error::dims(format!("sample shapes {:?} and {:?} differ", t.shape(), first.shape())));
        }
        data.extend_from_slice(t.data());
    }
    shape.push(all.len());
    let stacked = Tensor::new(shape, data)?;
    let mut ranks: Vec<Option<usize>> = core_dims.iter().map(|&j| Some(j)).collect();
    ranks.push(None);
    let (factors, _) = tucker_decompose_modes(&stacked, &ranks, sweeps, 1e-10)?;
    ProjectionSet::new(factors.into_iter().flatten().collect())
}

pub fn align_with_graphs(
    xs: &[Tensor],
    xt: &[Tensor],
    ls: &Laplacian,
    lt: &Laplacian,
    cfg: &AlignmentConfig,
) -> Result<AlignmentModel> {
    if xs.is_empty() || xt.is_empty() {
        return Err(Error::Empty("source or target tensors"));
    }
    let input_dims = xs[0].shape().to_vec();
    cfg.validate(&input_dims)?;
    if ls.len() != xs.len() || lt.len() != xt.len() {
        return Err(Error::dims("Laplacian sizes do not match sample counts"));
    }
    let all: Vec<&Tensor> = xs.iter().chain(xt).collect();
    let mut u = initial_projections(&all, &cfg.core_dims, cfg.init_sweeps)?;

    let encode_all = |x: &[Tensor], u: &ProjectionSet| -> Result<Vec<Tensor>> {
        x.par_iter().map(|x| encode_tensor(x, u)).collect()
    };
    let mut gs = encode_all(xs, &u)?;
    let mut gt = encode_all(xt, &u)?;
    let eval = |gs: &[Tensor], gt: &[Tensor], u: &ProjectionSet, iteration: usize| -> Result<f64> {
        let v = objective(xs, xt, gs, gt, u, ls, lt, cfg.lambda)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("alignment objective ({v})"),
                iteration,
            });
        }
        Ok(v)
    };

    let mut value = eval(&gs, &gt, &u, 0)?;
    let mut trace = vec![value];
    let mut half_steps = vec![value];
    let mut converged = value == 0.0;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_outer_iters {
        iterations += 1;
        let prev = value;

        (gs, gt) = update_cores(xs, xt, &u, ls, lt, cfg.lambda)?;
        let v = eval(&gs, &gt, &u, iterations)?;
        check_monotone(*half_steps.last().expect("seeded"), v, iterations, "core update");
        half_steps.push(v);

        let g_all: Vec<&Tensor> = gs.iter().chain(&gt).collect();
        for _ in 0..cfg.inner_projection_sweeps {
            for k in 0..u.order() {
                let uk = update_mode(&all, &g_all, &u, k)?;
                u.set_factor(k, uk);
                let v = eval(&gs, &gt, &u, iterations)?;
                check_monotone(*half_steps.last().expect("seeded"), v, iterations, "projection update");
                half_steps.push(v);
            }
        }

        value = *half_steps.last().expect("seeded");
        trace.push(value);
        let decrease = (prev - value) / prev;
        debug!("alignment iteration {iterations}: objective {value:.6e}, relative decrease {decrease:.3e}");
        converged = value == 0.0 || decrease < cfg.rel_tol;
    }
    if !converged {
        warn!("alignment stopped after {iterations} iterations without reaching rel_tol {}", cfg.rel_tol);
    }

    Ok(AlignmentModel {
        projections: u,
        source_cores: gs,
        target_cores: gt,
        objective_trace: trace,
        half_step_trace: half_steps,
        iterations,
        converged,
        lambda: cfg.lambda,
    })
}

fn check_monotone(prev: f64, cur: f64, iteration: usize, step: &str) {
    if cur > prev + MONOTONE_SLACK * prev.abs() {
        warn!("objective increased after {step} in iteration {iteration}: {prev:.12e} -> {cur:.12e}");
    }
}
