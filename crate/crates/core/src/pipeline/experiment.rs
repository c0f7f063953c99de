//! The randomized multi-trial protocol.
//!
//! Every trial draws `labeled_per_class` labeled source pixels and
//! `target_per_class` target pixels per class, fits each selected method on
//! that draw and scores it on every labeled target pixel. Each trial owns a
//! ChaCha8 stream keyed by `(seed, labeled_per_class, trial)`, so results do
//! not depend on worker count or scheduling.

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DomainPaths, ExperimentConfig, Method};
use super::container::{load_cube, load_segments};
use crate::alignment::{align_with_graphs, encode_tensor, AlignmentModel, ModelFile};
use crate::classify::{evaluate, train_svm, LinearSvmModel, Standardizer, SvmConfig};
use crate::error::{Error, Result};
use crate::graph::{laplacian, source_graph, target_graph};
use crate::purity::{greedy_relabel, PurityResult};
use crate::superpixel::{build_samples, segment_cube, FillRule, HsiCube, SlicConfig, SuperpixelMap};
use crate::tensor::{symmetric_eigen_desc, Matrix, Mpca, MpcaConfig, ProjectionSet, Tensor};
use crate::ClassId;

/// A cube with ground truth and its superpixels.
#[derive(Debug, Clone)]
pub struct Domain {
    pub cube: HsiCube,
    pub segments: SuperpixelMap,
}

impl Domain {
    pub fn new(cube: HsiCube, segments: SuperpixelMap) -> Result<Self> {
        if cube.ground_truth().is_none() {
            return Err(Error::InvalidConfig("domain cube has no ground truth".into()));
        }
        if (segments.height, segments.width) != (cube.height(), cube.width()) {
            return Err(Error::dims("superpixel map does not match the cube"));
        }
        Ok(Self { cube, segments })
    }

    /// Loads cube and ground truth; segments with `slic` unless a segment
    /// file is given.
    pub fn load(paths: &DomainPaths, slic: &SlicConfig) -> Result<Self> {
        let cube = load_cube(&paths.cube, Some(&paths.ground_truth))?;
        let segments = match &paths.segments {
            Some(p) => load_segments(p)?,
            None => segment_cube(&cube, slic)?,
        };
        Self::new(cube, segments)
    }

    /// Raster indices of the labeled pixels of each class, ascending.
    pub fn class_pixels(&self) -> Vec<(ClassId, Vec<usize>)> {
        let gt = self.cube.ground_truth().expect("checked in new");
        let mut by_class: std::collections::BTreeMap<ClassId, Vec<usize>> = Default::default();
        for (p, &c) in gt.iter().enumerate() {
            if c != 0 {
                by_class.entry(c).or_default().push(p);
            }
        }
        by_class.into_iter().collect()
    }

    fn center(&self, pixel: usize) -> (usize, usize) {
        (pixel / self.cube.width(), pixel % self.cube.width())
    }
}

/// Pixels drawn for one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Labeled source pixels with their classes.
    pub source: Vec<(usize, ClassId)>,
    /// Target pixels taking part in the alignment.
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub labeled_per_class: usize,
    pub trial: usize,
    pub method: Method,
    pub overall_accuracy: f64,
    pub kappa: f64,
    /// One entry per target class, in [`ExperimentOutput::classes`] order.
    pub f_measure: Vec<f64>,
    /// SVM penalty chosen by cross-validation.
    pub c: f64,
    pub runtime_secs: f64,
    pub objective_trace: Vec<f64>,
    pub alignment_iterations: usize,
    pub converged: Option<bool>,
    pub relabeled: usize,
}

#[derive(Debug, Clone)]
pub struct TrialMap {
    pub labeled_per_class: usize,
    pub trial: usize,
    pub method: Method,
    pub labels: Vec<ClassId>,
}

#[derive(Debug, Clone)]
pub struct PurityLog {
    pub labeled_per_class: usize,
    pub trial: usize,
    pub result: PurityResult,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Target ground-truth classes.
    pub classes: Vec<ClassId>,
    pub height: usize,
    pub width: usize,
    /// Sorted by labeled count, trial, then method.
    pub trials: Vec<TrialResult>,
    pub maps: Vec<TrialMap>,
    pub purity_logs: Vec<PurityLog>,
}

/// Everything needed to classify new target pixels with a fitted TA model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaBundle {
    pub format: String,
    pub version: u32,
    pub window: usize,
    pub fill: FillRule,
    pub mpca: Mpca,
    pub alignment: ModelFile,
    /// Vectorized source cores used to train the classifier.
    pub source_features: Vec<Vec<f64>>,
    pub source_labels: Vec<ClassId>,
}

impl TaBundle {
    pub const FORMAT: &'static str = "tensoralign.ta-bundle";
    pub const VERSION: u32 = 1;

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: TaBundle = serde_json::from_str(&text)?;
        if bundle.format != Self::FORMAT || bundle.version != Self::VERSION {
            return Err(Error::MalformedHeader(format!(
                "unsupported bundle {:?} version {}",
                bundle.format, bundle.version
            )));
        }
        bundle.alignment.projections()?;
        Ok(bundle)
    }
}

/// A fitted TA model for one draw.
#[derive(Debug, Clone)]
pub struct TaFit {
    pub mpca: Mpca,
    pub model: AlignmentModel,
    pub source_labels: Vec<ClassId>,
}

impl TaFit {
    pub fn source_features(&self) -> Vec<Vec<f64>> {
        self.model.source_cores.iter().map(|g| g.data().to_vec()).collect()
    }

    pub fn bundle(&self, cfg: &ExperimentConfig) -> TaBundle {
        TaBundle {
            format: TaBundle::FORMAT.into(),
            version: TaBundle::VERSION,
            window: cfg.window,
            fill: cfg.fill,
            mpca: self.mpca.clone(),
            alignment: self.model.to_file(),
            source_features: self.source_features(),
            source_labels: self.source_labels.clone(),
        }
    }
}

/// Generator for one trial. The 32-byte seed packs `seed`, the labeled
/// count and the trial index as little-endian words.
pub fn trial_rng(seed: u64, labeled_per_class: usize, trial: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(labeled_per_class as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(trial as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draws the pixels of one trial. Source classes must hold at least
/// `labeled_per_class` pixels; target classes contribute all their pixels
/// when they hold fewer than `target_per_class`.
pub fn select(
    src: &Domain,
    tgt: &Domain,
    labeled_per_class: usize,
    target_per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Selection> {
    let mut source = Vec::new();
    for (class, pixels) in src.class_pixels() {
        if pixels.len() < labeled_per_class {
            return Err(Error::TooFewLabeled {
                class: class as u32,
                available: pixels.len(),
                needed: labeled_per_class,
            });
        }
        let mut picked = index::sample(rng, pixels.len(), labeled_per_class).into_vec();
        picked.sort_unstable();
        source.extend(picked.into_iter().map(|i| (pixels[i], class)));
    }
    let mut target = Vec::new();
    for (_, pixels) in tgt.class_pixels() {
        let k = target_per_class.min(pixels.len());
        let mut picked = index::sample(rng, pixels.len(), k).into_vec();
        picked.sort_unstable();
        target.extend(picked.into_iter().map(|i| pixels[i]));
    }
    Ok(Selection { source, target })
}

/// MPCA, graph construction and alignment on one draw.
pub fn fit_ta(cfg: &ExperimentConfig, src: &Domain, tgt: &Domain, sel: &Selection) -> Result<TaFit> {
    let centers_s: Vec<(usize, usize)> = sel.source.iter().map(|&(p, _)| src.center(p)).collect();
    let centers_t: Vec<(usize, usize)> = sel.target.iter().map(|&p| tgt.center(p)).collect();
    let samples_s = build_samples(&src.cube, &centers_s, cfg.window, &src.segments, cfg.fill)?;
    let samples_t = build_samples(&tgt.cube, &centers_t, cfg.window, &tgt.segments, cfg.fill)?;
    let patches: Vec<Tensor> = samples_s.iter().chain(&samples_t).map(|s| s.patch.clone()).collect();
    let mpca = Mpca::fit(&patches, &MpcaConfig::new(cfg.mpca_dims.clone()))?;
    let (ps, pt) = patches.split_at(samples_s.len());
    let xs: Vec<Tensor> = ps.par_iter().map(|x| mpca.project(x)).collect::<Result<_>>()?;
    let xt: Vec<Tensor> = pt.par_iter().map(|x| mpca.project(x)).collect::<Result<_>>()?;

    let source_labels: Vec<ClassId> = sel.source.iter().map(|&(_, c)| c).collect();
    let ls = laplacian(&source_graph(&source_labels));
    let spectra_t: Vec<Vec<f64>> = sel.target.iter().map(|&p| tgt.cube.spectrum_at(p).to_vec()).collect();
    let lt = laplacian(&target_graph(&spectra_t, cfg.alignment.target_neighbors)?);
    let model = align_with_graphs(&xs, &xt, &ls, &lt, &cfg.alignment)?;
    Ok(TaFit {
        mpca,
        model,
        source_labels,
    })
}

/// Vectorized cores of the given target pixels under a fitted model.
pub fn ta_features(
    domain: &Domain,
    pixels: &[usize],
    window: usize,
    fill: FillRule,
    mpca: &Mpca,
    u: &ProjectionSet,
) -> Result<Vec<Vec<f64>>> {
    let centers: Vec<(usize, usize)> = pixels.iter().map(|&p| domain.center(p)).collect();
    let samples = build_samples(&domain.cube, &centers, window, &domain.segments, fill)?;
    samples
        .par_iter()
        .map(|s| Ok(encode_tensor(&mpca.project(&s.patch)?, u)?.data().to_vec()))
        .collect()
}

/// Labels every pixel of `domain` in chunks of `chunk` pixels.
pub fn predict_map(
    domain: &Domain,
    chunk: usize,
    features: impl Fn(&[usize]) -> Result<Vec<Vec<f64>>>,
    scaler: &Standardizer,
    svm: &LinearSvmModel,
) -> Result<Vec<ClassId>> {
    let all: Vec<usize> = (0..domain.cube.pixels()).collect();
    let mut out = Vec::with_capacity(all.len());
    for block in all.chunks(chunk.max(1)) {
        let x = features(block)?;
        out.par_extend(x.par_iter().map(|x| svm.predict_one(&scaler.apply(x))));
    }
    Ok(out)
}

/// Principal subspace of a set of vectors: `(mean, B x k basis)`.
fn fit_pca(x: &[Vec<f64>], k: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = x.len();
    let b = x.first().ok_or(Error::Empty("PCA samples"))?.len();
    let mean: Vec<f64> = (0..b).map(|j| x.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
    let centered = Matrix::from_fn(n, b, |i, j| x[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
    let (_, vectors) = symmetric_eigen_desc(&cov)?;
    Ok((mean, vectors.columns(0, k).into_owned()))
}

fn pca_project(mean: &[f64], basis: &Matrix, x: &[f64]) -> Vec<f64> {
    let c = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(v, m)| v - m));
    (basis.transpose() * c).iter().copied().collect()
}

struct TrialOutcome {
    results: Vec<TrialResult>,
    maps: Vec<TrialMap>,
    purity: Option<PurityLog>,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    src: &'a Domain,
    tgt: &'a Domain,
    classes: Vec<ClassId>,
    eval_pixels: Vec<usize>,
    eval_truth: Vec<ClassId>,
}

impl Context<'_> {
    fn score(&self, map: &[ClassId]) -> Result<(f64, f64, Vec<f64>)> {
        let pred: Vec<ClassId> = self.eval_pixels.iter().map(|&p| map[p]).collect();
        let report = evaluate(&pred, &self.eval_truth)?;
        let f = self
            .classes
            .iter()
            .map(|c| {
                let i = report.classes.binary_search(c).expect("truth classes are in the report");
                report.f_measure[i]
            })
            .collect();
        Ok((report.overall_accuracy, report.kappa, f))
    }

    fn run_trial(&self, labeled: usize, trial: usize) -> Result<TrialOutcome> {
        let cfg = self.cfg;
        let mut rng = trial_rng(cfg.seed, labeled, trial);
        let sel = select(self.src, self.tgt, labeled, cfg.target_per_class, &mut rng)?;
        let svm_cfg = SvmConfig {
            seed: rng.gen(),
            ..cfg.svm.clone()
        };
        let labels_s: Vec<ClassId> = sel.source.iter().map(|&(_, c)| c).collect();
        let keep_map = trial < cfg.map_trials;
        let mut out = TrialOutcome {
            results: Vec::new(),
            maps: Vec::new(),
            purity: None,
        };
        let push = |method: Method, map: Vec<ClassId>, base: TrialResult, out: &mut TrialOutcome| -> Result<()> {
            let (oa, kappa, f) = self.score(&map)?;
            out.results.push(TrialResult {
                overall_accuracy: oa,
                kappa,
                f_measure: f,
                method,
                ..base
            });
            if keep_map {
                out.maps.push(TrialMap {
                    labeled_per_class: labeled,
                    trial,
                    method,
                    labels: map,
                });
            }
            Ok(())
        };
        let blank = TrialResult {
            labeled_per_class: labeled,
            trial,
            method: Method::Src,
            overall_accuracy: 0.0,
            kappa: 0.0,
            f_measure: Vec::new(),
            c: 0.0,
            runtime_secs: 0.0,
            objective_trace: Vec::new(),
            alignment_iterations: 0,
            converged: None,
            relabeled: 0,
        };

        if cfg.methods.contains(&Method::Src) {
            let start = Instant::now();
            let x: Vec<Vec<f64>> = sel.source.iter().map(|&(p, _)| self.src.cube.spectrum_at(p).to_vec()).collect();
            let scaler = Standardizer::fit(&x)?;
            let svm = train_svm(&scaler.apply_all(&x), &labels_s, &svm_cfg)?;
            let map = predict_map(
                self.tgt,
                cfg.predict_chunk,
                |px| Ok(px.iter().map(|&p| self.tgt.cube.spectrum_at(p).to_vec()).collect()),
                &scaler,
                &svm,
            )?;
            let base = TrialResult {
                c: svm.c,
                runtime_secs: start.elapsed().as_secs_f64(),
                ..blank.clone()
            };
            push(Method::Src, map, base, &mut out)?;
        }

        if cfg.methods.contains(&Method::Pca) {
            let start = Instant::now();
            let xs: Vec<Vec<f64>> = sel.source.iter().map(|&(p, _)| self.src.cube.spectrum_at(p).to_vec()).collect();
            let both: Vec<Vec<f64>> = xs
                .iter()
                .cloned()
                .chain(sel.target.iter().map(|&p| self.tgt.cube.spectrum_at(p).to_vec()))
                .collect();
            let (mean, basis) = fit_pca(&both, cfg.pca_components)?;
            let fs: Vec<Vec<f64>> = xs.iter().map(|x| pca_project(&mean, &basis, x)).collect();
            let scaler = Standardizer::fit(&fs)?;
            let svm = train_svm(&scaler.apply_all(&fs), &labels_s, &svm_cfg)?;
            let map = predict_map(
                self.tgt,
                cfg.predict_chunk,
                |px| Ok(px.iter().map(|&p| pca_project(&mean, &basis, self.tgt.cube.spectrum_at(p))).collect()),
                &scaler,
                &svm,
            )?;
            let base = TrialResult {
                c: svm.c,
                runtime_secs: start.elapsed().as_secs_f64(),
                ..blank.clone()
            };
            push(Method::Pca, map, base, &mut out)?;
        }

        if cfg.methods.contains(&Method::Ta) || cfg.methods.contains(&Method::TaP) {
            let start = Instant::now();
            let fit = fit_ta(cfg, self.src, self.tgt, &sel)?;
            let fs = fit.source_features();
            let scaler = Standardizer::fit(&fs)?;
            let svm = train_svm(&scaler.apply_all(&fs), &labels_s, &svm_cfg)?;
            let u = &fit.model.projections;
            let map = predict_map(
                self.tgt,
                cfg.predict_chunk,
                |px| ta_features(self.tgt, px, cfg.window, cfg.fill, &fit.mpca, u),
                &scaler,
                &svm,
            )?;
            let ta_secs = start.elapsed().as_secs_f64();
            let base = TrialResult {
                c: svm.c,
                runtime_secs: ta_secs,
                objective_trace: fit.model.objective_trace.clone(),
                alignment_iterations: fit.model.iterations,
                converged: Some(fit.model.converged),
                ..blank.clone()
            };
            if cfg.methods.contains(&Method::TaP) {
                let purify = Instant::now();
                let (relabeled_map, result) = greedy_relabel(&map, &self.tgt.segments, &self.tgt.cube, &cfg.purity)?;
                let tap = TrialResult {
                    runtime_secs: ta_secs + purify.elapsed().as_secs_f64(),
                    relabeled: result.relabeled_count(),
                    ..base.clone()
                };
                push(Method::TaP, relabeled_map, tap, &mut out)?;
                if keep_map {
                    out.purity = Some(PurityLog {
                        labeled_per_class: labeled,
                        trial,
                        result,
                    });
                }
            }
            if cfg.methods.contains(&Method::Ta) {
                push(Method::Ta, map, base, &mut out)?;
            }
        }
        out.results.sort_by_key(|r| r.method);
        out.maps.sort_by_key(|m| m.method);
        info!(
            "L={labeled} trial {trial}: {}",
            out.results
                .iter()
                .map(|r| format!("{} OA {:.4}", r.method, r.overall_accuracy))
                .collect::<Vec<_>>()
                .join(", ")
        );
        Ok(out)
    }
}

/// Runs every configured trial. Trials execute in parallel on the current
/// rayon pool; the output order is fixed.
pub fn run_experiment(cfg: &ExperimentConfig, src: &Domain, tgt: &Domain) -> Result<ExperimentOutput> {
    if src.cube.bands() != tgt.cube.bands() {
        return Err(Error::dims(format!(
            "source has {} bands, target {}",
            src.cube.bands(),
            tgt.cube.bands()
        )));
    }
    cfg.validate(src.cube.bands())?;
    let source_classes = src.class_pixels();
    if source_classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let max_labeled = *cfg.labeled_per_class.iter().max().expect("validated nonempty");
    for (class, pixels) in &source_classes {
        if pixels.len() < max_labeled {
            return Err(Error::TooFewLabeled {
                class: *class as u32,
                available: pixels.len(),
                needed: max_labeled,
            });
        }
    }
    let target_classes = tgt.class_pixels();
    for (class, pixels) in &target_classes {
        if pixels.len() < cfg.target_per_class {
            warn!(
                "target class {class} has {} pixels, fewer than target_per_class {}",
                pixels.len(),
                cfg.target_per_class
            );
        }
    }
    let gt = tgt.cube.ground_truth().expect("domain has ground truth");
    let eval_pixels: Vec<usize> = (0..gt.len()).filter(|&p| gt[p] != 0).collect();
    let ctx = Context {
        cfg,
        src,
        tgt,
        classes: target_classes.iter().map(|(c, _)| *c).collect(),
        eval_truth: eval_pixels.iter().map(|&p| gt[p]).collect(),
        eval_pixels,
    };

    let jobs: Vec<(usize, usize)> = cfg
        .labeled_per_class
        .iter()
        .flat_map(|&l| (0..cfg.trials).map(move |t| (l, t)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(l, t)| ctx.run_trial(l, t))
        .collect::<Result<Vec<_>>>()?;

    let mut output = ExperimentOutput {
        classes: ctx.classes.clone(),
        height: tgt.cube.height(),
        width: tgt.cube.width(),
        trials: Vec::new(),
        maps: Vec::new(),
        purity_logs: Vec::new(),
    };
    for o in outcomes {
        output.trials.extend(o.results);
        output.maps.extend(o.maps);
        output.purity_logs.extend(o.purity);
    }
    Ok(output)
}
