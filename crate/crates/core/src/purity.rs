//! Pure-sample extraction per superpixel and majority relabeling of the
//! predicted map.
//!
//! The spectra of a superpixel are projected on its leading principal axes
//! and each axis is min-max normalized to `[0, 1]`. For a threshold `T` a
//! sample gets weight `p` on an axis where `p > T`, `1 − p` where `p < 1 − T`
//! and 0 otherwise; its purity index is the sum over axes and it is pure when
//! the index is 0, i.e. when every coordinate lies in `[1 − T, T]`.
//!
//! Lowering `T` narrows that band, so the pure sets are nested: the set at a
//! smaller threshold is contained in the set at a larger one.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::superpixel::{HsiCube, SuperpixelMap};
use crate::tensor::{truncated_svd, Matrix};
use crate::ClassId;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;
/// Guards the threshold scan against round-off in `T0 − i·step`.
const SCAN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Largest pure set whose majority ratio is at least the target; repeated
    /// per superpixel until nothing changes.
    #[default]
    LargestAboveTarget,
    /// One pass choosing the smallest pure set whose majority ratio is at
    /// most the target.
    SmallestAtMostTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PurityConfig {
    pub start_threshold: f64,
    pub threshold_step: f64,
    pub target_ratio: f64,
    pub components: usize,
    pub mode: SelectionMode,
}

impl Default for PurityConfig {
    fn default() -> Self {
        Self {
            start_threshold: 0.9,
            threshold_step: 0.01,
            target_ratio: 0.7,
            components: 3,
            mode: SelectionMode::default(),
        }
    }
}

impl PurityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.target_ratio > 0.5 && self.target_ratio < 1.0) {
            return bad(format!("target ratio {} outside (0.5, 1)", self.target_ratio));
        }
        if !(self.start_threshold > 0.5 && self.start_threshold < 1.0) {
            return bad(format!("start threshold {} outside (0.5, 1)", self.start_threshold));
        }
        if !(self.threshold_step > 0.0 && self.threshold_step < self.start_threshold) {
            return bad(format!("threshold step {} outside (0, T0)", self.threshold_step));
        }
        if self.components == 0 {
            return bad("at least one principal component is required".into());
        }
        Ok(())
    }

    /// Thresholds visited by the scan: `T0, T0 − step, …` while above 0.5.
    pub fn thresholds(&self) -> Vec<f64> {
        (0..)
            .map(|i| self.start_threshold - i as f64 * self.threshold_step)
            .take_while(|&t| t > 0.5 + SCAN_EPS)
            .collect()
    }
}

/// Per-sample coordinates on the segment's leading principal axes, each axis
/// min-max normalized to `[0, 1]`. Axes without spread map every sample to
/// 0.5, which is pure for any threshold.
pub fn normalized_projections(spectra: &[Vec<f64>], components: usize) -> Result<Vec<Vec<f64>>> {
    let n = spectra.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let b = spectra[0].len();
    if b == 0 || spectra.iter().any(|s| s.len() != b) {
        return Err(Error::dims("segment spectra must share a nonzero length"));
    }
    let mut mean = vec![0.0; b];
    for s in spectra {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let centered = Matrix::from_fn(n, b, |i, j| spectra[i][j] - mean[j]);
    let k = components.min(n).min(b);
    let svd = truncated_svd(&centered, k)?;
    let top = svd.s[0];

    let mut out = vec![vec![0.5; components]; n];
    for a in 0..k {
        if top == 0.0 || svd.s[a] <= RANK_TOL * top {
            continue;
        }
        let scores: Vec<f64> = (0..n).map(|i| svd.u[(i, a)] * svd.s[a]).collect();
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (row, s) in out.iter_mut().zip(&scores) {
            row[a] = (s - lo) / (hi - lo);
        }
    }
    Ok(out)
}

/// Weight of one normalized coordinate under threshold `t`.
pub fn axis_weight(p: f64, t: f64) -> f64 {
    if p > t {
        p
    } else if p < 1.0 - t {
        1.0 - p
    } else {
        0.0
    }
}

/// Purity index of every sample: the sum of its axis weights.
pub fn purity_index(spectra: &[Vec<f64>], t: f64, components: usize) -> Result<Vec<f64>> {
    if !(t > 0.5 && t < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold {t} outside (0.5, 1)")));
    }
    let proj = normalized_projections(spectra, components)?;
    Ok(indices_from_projections(&proj, t))
}

pub fn indices_from_projections(proj: &[Vec<f64>], t: f64) -> Vec<f64> {
    proj.iter().map(|row| row.iter().map(|&p| axis_weight(p, t)).sum()).collect()
}

/// Positions of the samples with purity index 0.
pub fn pure_set(proj: &[Vec<f64>], t: f64) -> Vec<usize> {
    proj.iter()
        .enumerate()
        .filter(|(_, row)| row.iter().all(|&p| axis_weight(p, t) == 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// Outcome for one superpixel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentPurity {
    pub superpixel: u32,
    pub pixels: usize,
    /// Threshold of the final pure set, `None` when no threshold qualified.
    pub threshold: Option<f64>,
    /// Raster indices of the final pure set.
    pub pure: Vec<usize>,
    pub majority: Option<ClassId>,
    /// Share of the pure set predicted as `majority` before relabeling.
    pub ratio: f64,
    /// Pure pixels predicted as `majority` before relabeling.
    pub agreeing_before: usize,
    /// Raster indices whose prediction changed.
    pub relabeled: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurityResult {
    pub segments: Vec<SegmentPurity>,
}

impl PurityResult {
    pub fn relabeled_count(&self) -> usize {
        self.segments.iter().map(|s| s.relabeled.len()).sum()
    }

    /// One row per superpixel that changed: id, pure-set size, majority,
    /// agreeing pixels before and after.
    pub fn diff_log(&self) -> Vec<(u32, usize, ClassId, usize, usize)> {
        self.segments
            .iter()
            .filter(|s| !s.relabeled.is_empty())
            .map(|s| {
                let majority = s.majority.expect("relabeled implies majority");
                (s.superpixel, s.pure.len(), majority, s.agreeing_before, s.pure.len())
            })
            .collect()
    }
}

/// Relabels the predicted map superpixel by superpixel.
///
/// `pred` holds one class per pixel in raster order. Segments with fewer
/// than two pixels are passed through.
pub fn greedy_relabel(
    pred: &[ClassId],
    seg: &SuperpixelMap,
    cube: &HsiCube,
    cfg: &PurityConfig,
) -> Result<(Vec<ClassId>, PurityResult)> {
    cfg.validate()?;
    if pred.len() != cube.pixels() || seg.labels.len() != cube.pixels() {
        return Err(Error::dims(format!(
            "{} predictions and {} segment labels for {} pixels",
            pred.len(),
            seg.labels.len(),
            cube.pixels()
        )));
    }
    let thresholds = cfg.thresholds();
    let segments = seg.segments();
    let outcomes = segments
        .par_iter()
        .enumerate()
        .map(|(id, pixels)| {
            let labels: Vec<ClassId> = pixels.iter().map(|&p| pred[p]).collect();
            let mut out = SegmentPurity {
                superpixel: id as u32,
                pixels: pixels.len(),
                threshold: None,
                pure: Vec::new(),
                majority: None,
                ratio: 0.0,
                agreeing_before: 0,
                relabeled: Vec::new(),
            };
            if pixels.len() < 2 {
                return Ok((out, labels));
            }
            let spectra: Vec<Vec<f64>> = pixels.iter().map(|&p| cube.spectrum_at(p).to_vec()).collect();
            let proj = normalized_projections(&spectra, cfg.components)?;
            let (new_labels, choice) = relabel_segment(&proj, &labels, &thresholds, cfg);
            if let Some(c) = choice {
                out.threshold = Some(c.threshold);
                out.pure = c.pure.iter().map(|&i| pixels[i]).collect();
                out.majority = Some(c.majority);
                out.ratio = c.count as f64 / c.pure.len() as f64;
                out.agreeing_before = c.count;
                out.relabeled = (0..labels.len())
                    .filter(|&i| labels[i] != new_labels[i])
                    .map(|i| pixels[i])
                    .collect();
            }
            Ok((out, new_labels))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut updated = pred.to_vec();
    let mut result = Vec::with_capacity(outcomes.len());
    for ((out, labels), pixels) in outcomes.into_iter().zip(&segments) {
        for (&p, l) in pixels.iter().zip(labels) {
            updated[p] = l;
        }
        result.push(out);
    }
    Ok((updated, PurityResult { segments: result }))
}

#[derive(Debug, Clone)]
struct Choice {
    threshold: f64,
    pure: Vec<usize>,
    majority: ClassId,
    /// Pure samples predicted as `majority` in the original labels.
    count: usize,
}

/// Most frequent label among `idx`; ties go to the smaller class id.
fn majority(labels: &[ClassId], idx: &[usize]) -> (ClassId, usize) {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &i in idx {
        *counts.entry(labels[i]).or_default() += 1;
    }
    counts
        .into_iter()
        .fold((0, 0), |best, (c, n)| if n > best.1 { (c, n) } else { best })
}

fn relabel_segment(
    proj: &[Vec<f64>],
    original: &[ClassId],
    thresholds: &[f64],
    cfg: &PurityConfig,
) -> (Vec<ClassId>, Option<Choice>) {
    let target = cfg.target_ratio;
    let mut labels = original.to_vec();
    let mut choice: Option<Choice> = None;
    match cfg.mode {
        SelectionMode::LargestAboveTarget => loop {
            // Sets shrink as the scan proceeds, so the first qualifying
            // threshold gives the largest qualifying set.
            let hit = thresholds.iter().find_map(|&t| {
                let pure = pure_set(proj, t);
                if pure.is_empty() {
                    return None;
                }
                let (m, n) = majority(&labels, &pure);
                (n as f64 >= target * pure.len() as f64 - SCAN_EPS).then_some((t, pure, m))
            });
            let Some((t, pure, m)) = hit else { break };
            let changed = pure.iter().any(|&i| labels[i] != m);
            for &i in &pure {
                labels[i] = m;
            }
            let count = pure.iter().filter(|&&i| original[i] == m).count();
            choice = Some(Choice {
                threshold: t,
                pure,
                majority: m,
                count,
            });
            if !changed {
                break;
            }
        },
        SelectionMode::SmallestAtMostTarget => {
            let mut best: Option<(f64, Vec<usize>, ClassId, usize)> = None;
            for &t in thresholds {
                let pure = pure_set(proj, t);
                if pure.is_empty() {
                    continue;
                }
                let (m, n) = majority(&labels, &pure);
                if n as f64 <= target * pure.len() as f64 + SCAN_EPS {
                    best = Some((t, pure, m, n));
                }
            }
            if let Some((t, pure, m, n)) = best {
                for &i in &pure {
                    labels[i] = m;
                }
                choice = Some(Choice {
                    threshold: t,
                    pure,
                    majority: m,
                    count: n,
                });
            }
        }
    }
    (labels, choice)
}
