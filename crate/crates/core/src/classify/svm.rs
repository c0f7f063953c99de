//! One-vs-rest linear SVM trained by dual coordinate descent.
//!
//! Each binary problem minimizes `½‖w‖² + C Σ max(0, 1 − y_i (w·x_i + b))`.
//! The bias is handled as the weight of an appended constant feature, so it
//! is regularized together with `w`.

use std::collections::BTreeMap;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ClassId;

pub const DEFAULT_C_GRID: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

/// Penalty used when there are too few samples per class to cross-validate.
const FALLBACK_C: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c_grid: Vec<f64>,
    pub folds: usize,
    /// Stop when the projected-gradient spread falls below this value.
    pub tol: f64,
    pub max_epochs: usize,
    /// Seeds fold assignment and the coordinate order.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: 5,
            tol: 1e-6,
            max_epochs: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    /// Sorted class ids; `weights[c]` and `biases[c]` score `classes[c]`.
    pub classes: Vec<ClassId>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub c: f64,
    /// Cross-validated accuracy per grid value, empty when CV was skipped.
    pub cv_accuracy: Vec<(f64, f64)>,
}

impl LinearSvmModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    /// Highest-scoring class; ties go to the smaller class id.
    pub fn predict_one(&self, x: &[f64]) -> ClassId {
        let scores = self.scores(x);
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        self.classes[best]
    }
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Features with zero spread keep a unit scale.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let first = features.first().ok_or(Error::Empty("features"))?;
        let d = first.len();
        check_dims(features, d)?;
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for x in features {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for x in features {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.apply(x)).collect()
    }
}

/// Trains a one-vs-rest model, picking `C` from `cfg.c_grid` by stratified
/// k-fold accuracy. The fold count shrinks to the smallest class size; with
/// fewer than two samples in some class CV is skipped and `C = 1` is used.
pub fn train_svm(features: &[Vec<f64>], labels: &[ClassId], cfg: &SvmConfig) -> Result<LinearSvmModel> {
    if features.is_empty() {
        return Err(Error::Empty("training features"));
    }
    if features.len() != labels.len() {
        return Err(Error::dims(format!("{} feature vectors but {} labels", features.len(), labels.len())));
    }
    check_dims(features, features[0].len())?;
    if cfg.c_grid.is_empty() || cfg.c_grid.iter().any(|&c| !c.is_finite() || c <= 0.0) {
        return Err(Error::InvalidConfig("C grid must hold positive finite values".into()));
    }
    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::SingleClass);
    }
    let smallest = by_class.values().map(Vec::len).min().expect("nonempty");
    let folds = cfg.folds.min(smallest);

    let mut grid = cfg.c_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let (c, cv_accuracy) = if folds < 2 {
        warn!("smallest class has {smallest} samples; skipping cross-validation and using C = {FALLBACK_C}");
        (FALLBACK_C, Vec::new())
    } else {
        if folds < cfg.folds {
            warn!("reducing cross-validation folds from {} to {folds}", cfg.folds);
        }
        let fold_of = stratified_folds(&by_class, labels.len(), folds, cfg.seed);
        let acc: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|&c| (c, cv_accuracy(features, labels, &fold_of, folds, c, cfg)))
            .collect();
        let mut best = acc[0];
        for &(c, a) in &acc[1..] {
            if a > best.1 {
                best = (c, a);
            }
        }
        (best.0, acc)
    };
    let (mut model, capped) = fit_ovr(features, labels, c, cfg);
    if capped > 0 {
        warn!(
            "{capped} of {} binary SVM problems (C = {c}) hit the {}-epoch cap before reaching tolerance {:e}",
            model.classes.len(),
            cfg.max_epochs,
            cfg.tol
        );
    }
    model.cv_accuracy = cv_accuracy;
    Ok(model)
}

pub fn predict(model: &LinearSvmModel, features: &[Vec<f64>]) -> Result<Vec<ClassId>> {
    check_dims(features, model.dim())?;
    Ok(features.par_iter().map(|x| model.predict_one(x)).collect())
}

fn check_dims(features: &[Vec<f64>], d: usize) -> Result<()> {
    match features.iter().position(|x| x.len() != d) {
        Some(i) => Err(Error::dims(format!("feature {i} has length {}, expected {d}", features[i].len()))),
        None => Ok(()),
    }
}

fn stratified_folds(by_class: &BTreeMap<ClassId, Vec<usize>>, n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; n];
    for idx in by_class.values() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    fold_of
}

fn cv_accuracy(
    features: &[Vec<f64>],
    labels: &[ClassId],
    fold_of: &[usize],
    folds: usize,
    c: f64,
    cfg: &SvmConfig,
) -> f64 {
    let mut correct = 0usize;
    for f in 0..folds {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for i in (0..labels.len()).filter(|&i| fold_of[i] != f) {
            xs.push(features[i].clone());
            ys.push(labels[i]);
        }
        let (model, _) = fit_ovr(&xs, &ys, c, cfg);
        correct += (0..labels.len())
            .filter(|&i| fold_of[i] == f && model.predict_one(&features[i]) == labels[i])
            .count();
    }
    correct as f64 / labels.len() as f64
}

/// One-vs-rest fit; also returns how many binary problems hit the epoch cap.
fn fit_ovr(features: &[Vec<f64>], labels: &[ClassId], c: f64, cfg: &SvmConfig) -> (LinearSvmModel, usize) {
    let mut classes: Vec<ClassId> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let solved: Vec<(Vec<f64>, bool)> = classes
        .par_iter()
        .map(|&class| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            solve_binary(features, &y, c, cfg, class as u64)
        })
        .collect();
    let capped = solved.iter().filter(|(_, ok)| !ok).count();
    let (weights, biases) = solved
        .into_iter()
        .map(|(mut w, _)| {
            let b = w.pop().expect("bias coordinate");
            (w, b)
        })
        .unzip();
    let model = LinearSvmModel {
        classes,
        weights,
        biases,
        c,
        cv_accuracy: Vec::new(),
    };
    (model, capped)
}

/// Dual coordinate descent for the L1-loss SVM on features augmented with a
/// trailing constant 1. Returns the augmented weight vector and whether the
/// projected-gradient tolerance was met.
fn solve_binary(x: &[Vec<f64>], y: &[f64], c: f64, cfg: &SvmConfig, stream: u64) -> (Vec<f64>, bool) {
    let d = x[0].len();
    let n = x.len();
    let mut w = vec![0.0; d + 1];
    let mut alpha = vec![0.0; n];
    let qd: Vec<f64> = x.iter().map(|xi| dot(xi, xi) + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let xi = &x[i];
            let g = y[i] * (dot(&w[..d], xi) + w[d]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(xi) {
                    *wj += step * xj;
                }
                w[d] += step;
            }
        }
        if pg_max - pg_min <= cfg.tol {
            return (w, true);
        }
        if epoch + 1 == cfg.max_epochs {
            debug!(
                "SVM (C = {c}) stopped after {} epochs with gradient spread {:.3e}",
                cfg.max_epochs,
                pg_max - pg_min
            );
        }
    }
    (w, false)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
