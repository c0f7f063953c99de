use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use tensoralign::classify::{evaluate, train_svm, Standardizer, SvmConfig};
use tensoralign::pipeline::{
    self, emit_map, read_map, run_experiment, select, synth, ta_features, trial_rng, write_outputs, Domain,
    DomainPaths, ExperimentConfig, Interleave, Method, Palette, RawDtype, RawLayout, Stat, TaBundle,
};
use tensoralign::purity::{greedy_relabel, SelectionMode};
use tensoralign::superpixel::{segment_cube, SlicConfig};
use tensoralign::{ClassId, Error, ErrorKind};

/// Environment variable holding the worker thread count.
const WORKERS_ENV: &str = "TENSORALIGN_WORKERS";

#[derive(Parser)]
#[command(name = "tensoralign", version, about = "Tensor alignment domain adaptation for hyperspectral cubes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import a headerless raw raster into the cube or label container.
    Convert(ConvertArgs),
    /// Segment a cube into superpixels.
    Segment(SegmentArgs),
    /// Fit a TA model on one random draw and save it.
    Align(AlignArgs),
    /// Classify a target cube with a saved TA model.
    Classify(ClassifyArgs),
    /// Run the multi-trial experiment protocol.
    Run(RunArgs),
    /// Relabel a classification map with pure-sample majority voting.
    Purify(PurifyArgs),
    /// Recompute the summary from a per-trial CSV.
    Report(ReportArgs),
    /// Write the synthetic two-domain fixture.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RasterTarget {
    Cube,
    Labels,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "cube")]
    kind: RasterTarget,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    bands: usize,
    /// u8, u16, i16, u32, i32, f32 or f64.
    #[arg(long, default_value = "f32")]
    dtype: String,
    #[arg(long)]
    big_endian: bool,
    /// bip, bil or bsq.
    #[arg(long, default_value = "bip")]
    interleave: String,
}

#[derive(Args, Clone)]
struct SlicArgs {
    #[arg(long, default_value_t = 10)]
    region_size: usize,
    #[arg(long, default_value_t = 10.0)]
    compactness: f64,
    #[arg(long, default_value_t = 10)]
    slic_iterations: usize,
}

impl SlicArgs {
    fn config(&self) -> SlicConfig {
        SlicConfig {
            region_size: self.region_size,
            compactness: self.compactness,
            iterations: self.slic_iterations,
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    slic: SlicArgs,
}

/// Data and protocol flags shared by `align` and `run`; each overrides the
/// matching field of the optional JSON config.
#[derive(Args, Clone)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    source_cube: Option<PathBuf>,
    #[arg(long)]
    source_gt: Option<PathBuf>,
    #[arg(long)]
    source_segments: Option<PathBuf>,
    #[arg(long)]
    target_cube: Option<PathBuf>,
    #[arg(long)]
    target_gt: Option<PathBuf>,
    #[arg(long)]
    target_segments: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    /// Comma separated, e.g. 5,5,20.
    #[arg(long, value_delimiter = ',')]
    mpca_dims: Option<Vec<usize>>,
    /// Comma separated, e.g. 1,1,10.
    #[arg(long, value_delimiter = ',')]
    core_dims: Option<Vec<usize>>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma separated list of labeled source pixels per class.
    #[arg(long, value_delimiter = ',')]
    labeled: Option<Vec<usize>>,
    #[arg(long)]
    target_per_class: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma separated subset of SRC, PCA, TA, TA_P.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    pca_components: Option<usize>,
    #[arg(long)]
    region_size: Option<usize>,
    #[arg(long)]
    map_trials: Option<usize>,
    /// Use the literal smallest-set selection for TA_P.
    #[arg(long)]
    purity_literal: bool,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        let domain = |cube: &Option<PathBuf>, gt: &Option<PathBuf>, seg: &Option<PathBuf>, old: Option<DomainPaths>| {
            match (cube, gt) {
                (Some(c), Some(g)) => Some(DomainPaths {
                    cube: c.clone(),
                    ground_truth: g.clone(),
                    segments: seg.clone(),
                }),
                _ => old.map(|mut d| {
                    if seg.is_some() {
                        d.segments = seg.clone();
                    }
                    d
                }),
            }
        };
        cfg.source = domain(&self.source_cube, &self.source_gt, &self.source_segments, cfg.source.take());
        cfg.target = domain(&self.target_cube, &self.target_gt, &self.target_segments, cfg.target.take());
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = &self.mpca_dims {
            cfg.mpca_dims = v.clone();
        }
        if let Some(v) = &self.core_dims {
            cfg.alignment.core_dims = v.clone();
        }
        if let Some(v) = self.lambda {
            cfg.alignment.lambda = v;
        }
        if let Some(v) = &self.labeled {
            cfg.labeled_per_class = v.clone();
        }
        if let Some(v) = self.target_per_class {
            cfg.target_per_class = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.methods {
            cfg.methods = v.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?;
        }
        if let Some(v) = self.pca_components {
            cfg.pca_components = v;
        }
        if let Some(v) = self.region_size {
            cfg.slic.region_size = v;
        }
        if let Some(v) = self.map_trials {
            cfg.map_trials = v;
        }
        if self.purity_literal {
            cfg.purity.mode = SelectionMode::SmallestAtMostTarget;
        }
        Ok(cfg)
    }
}

fn load_domains(cfg: &ExperimentConfig) -> Result<(Domain, Domain)> {
    let missing = |which: &str| Error::InvalidConfig(format!("{which} cube and ground truth are required"));
    let src = cfg.source.as_ref().ok_or_else(|| missing("source"))?;
    let tgt = cfg.target.as_ref().ok_or_else(|| missing("target"))?;
    Ok((Domain::load(src, &cfg.slic)?, Domain::load(tgt, &cfg.slic)?))
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Output model bundle (JSON).
    #[arg(long)]
    output: PathBuf,
    /// Optional CSV of the objective per outer iteration.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cube: PathBuf,
    /// Ground truth for scoring; pixels with class 0 are ignored.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    segments: Option<PathBuf>,
    #[command(flatten)]
    slic: SlicArgs,
    /// Output map (PGM).
    #[arg(long)]
    output: PathBuf,
    /// Optional metrics JSON.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PurifyArgs {
    /// Input map (PGM).
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    cube: PathBuf,
    #[arg(long)]
    segments: Option<PathBuf>,
    #[command(flatten)]
    slic: SlicArgs,
    #[arg(long)]
    output: PathBuf,
    /// CSV diff log of the relabeled superpixels.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    literal: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Per-trial CSV written by `run`.
    #[arg(long)]
    trials: PathBuf,
    /// Optional JSON output; the table is always printed.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn convert(a: &ConvertArgs) -> Result<()> {
    let bytes = std::fs::read(&a.input).map_err(|e| Error::Io {
        path: a.input.clone(),
        source: e,
    })?;
    let layout = RawLayout {
        height: a.height,
        width: a.width,
        bands: a.bands,
        dtype: a.dtype.parse::<RawDtype>()?,
        big_endian: a.big_endian,
        interleave: a.interleave.parse::<Interleave>()?,
    };
    match a.kind {
        RasterTarget::Cube => {
            let data = pipeline::decode_raw(&bytes, &layout)?;
            let cube = tensoralign::superpixel::HsiCube::new(a.height, a.width, a.bands, data)?;
            pipeline::save_cube(&a.output, &cube)?;
        }
        RasterTarget::Labels => {
            let labels = pipeline::decode_raw_labels(&bytes, &layout)?;
            pipeline::save_labels(&a.output, a.height, a.width, &labels)?;
        }
    }
    info!("wrote {}", a.output.display());
    Ok(())
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let cube = pipeline::load_cube(&a.cube, None)?;
    let seg = segment_cube(&cube, &a.slic.config())?;
    pipeline::save_segments(&a.output, &seg)?;
    println!("{} superpixels", seg.count);
    Ok(())
}

fn align(a: &AlignArgs) -> Result<()> {
    let cfg = a.experiment.resolve()?;
    let (src, tgt) = load_domains(&cfg)?;
    cfg.validate(src.cube.bands())?;
    let labeled = *cfg.labeled_per_class.first().expect("validated");
    let mut rng = trial_rng(cfg.seed, labeled, 0);
    let sel = select(&src, &tgt, labeled, cfg.target_per_class, &mut rng)?;
    let fit = pipeline::fit_ta(&cfg, &src, &tgt, &sel)?;
    fit.bundle(&cfg).save(&a.output)?;
    if let Some(path) = &a.trace {
        let mut s = String::from("iteration,objective\n");
        for (i, v) in fit.model.objective_trace.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "aligned {} source and {} target samples in {} iterations (converged: {}), final objective {:.6e}",
        sel.source.len(),
        sel.target.len(),
        fit.model.iterations,
        fit.model.converged,
        fit.model.objective_trace.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn load_domain_for_map(cube: &Path, gt: Option<&Path>, segments: Option<&Path>, slic: &SlicArgs) -> Result<Domain> {
    let mut cube = pipeline::load_cube(cube, gt)?;
    if cube.ground_truth().is_none() {
        let blank = vec![0; cube.pixels()];
        cube = cube.with_ground_truth(blank)?;
    }
    let seg = match segments {
        Some(p) => pipeline::load_segments(p)?,
        None => segment_cube(&cube, &slic.config())?,
    };
    Ok(Domain::new(cube, seg)?)
}

fn classify(a: &ClassifyArgs) -> Result<()> {
    let bundle = TaBundle::load(&a.model)?;
    let domain = load_domain_for_map(&a.cube, a.gt.as_deref(), a.segments.as_deref(), &a.slic)?;
    let u = bundle.alignment.projections()?;
    let scaler = Standardizer::fit(&bundle.source_features)?;
    let svm_cfg = SvmConfig {
        seed: a.seed,
        ..SvmConfig::default()
    };
    let svm = train_svm(&scaler.apply_all(&bundle.source_features), &bundle.source_labels, &svm_cfg)?;
    let map = pipeline::predict_map(
        &domain,
        16384,
        |px| ta_features(&domain, px, bundle.window, bundle.fill, &bundle.mpca, &u),
        &scaler,
        &svm,
    )?;
    write_map(&map, &domain, &a.output)?;
    score(&map, &domain, a.metrics.as_deref())
}

fn write_map(map: &[ClassId], domain: &Domain, path: &Path) -> Result<()> {
    let top = map.iter().copied().max().unwrap_or(0);
    emit_map(map, domain.cube.height(), domain.cube.width(), &Palette::default_for(top), path)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn score(map: &[ClassId], domain: &Domain, metrics: Option<&Path>) -> Result<()> {
    let gt = domain.cube.ground_truth().unwrap_or_default();
    let idx: Vec<usize> = (0..gt.len()).filter(|&p| gt[p] != 0).collect();
    if idx.is_empty() {
        return Ok(());
    }
    let pred: Vec<ClassId> = idx.iter().map(|&p| map[p]).collect();
    let truth: Vec<ClassId> = idx.iter().map(|&p| gt[p]).collect();
    let report = evaluate(&pred, &truth)?;
    println!("OA {:.4}  kappa {:.4}", report.overall_accuracy, report.kappa);
    if let Some(path) = metrics {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let cfg = a.experiment.resolve()?;
    let (src, tgt) = load_domains(&cfg)?;
    let output = run_experiment(&cfg, &src, &tgt)?;
    write_outputs(&a.out_dir, &output)?;
    let cfg_path = a.out_dir.join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).map_err(|e| Error::Io {
        path: cfg_path,
        source: e,
    })?;
    print_summary(&pipeline::summarize(&output.trials));
    Ok(())
}

fn print_summary(rows: &[pipeline::SummaryRow]) {
    println!("{:>8} {:>6} {:>7} {:>17} {:>17}", "labeled", "method", "trials", "OA", "kappa");
    for r in rows {
        let fmt = |s: &Stat| format!("{:.4} ± {:.4}", s.mean, s.stderr);
        println!(
            "{:>8} {:>6} {:>7} {:>17} {:>17}",
            r.labeled_per_class,
            r.method.name(),
            r.trials,
            fmt(&r.overall_accuracy),
            fmt(&r.kappa)
        );
    }
}

fn purify(a: &PurifyArgs) -> Result<()> {
    let (h, w, map) = read_map(&a.map)?;
    let domain = load_domain_for_map(&a.cube, None, a.segments.as_deref(), &a.slic)?;
    if (h, w) != (domain.cube.height(), domain.cube.width()) {
        bail!(Error::InvalidConfig(format!(
            "map is {h}x{w}, cube is {}x{}",
            domain.cube.height(),
            domain.cube.width()
        )));
    }
    let mut cfg = tensoralign::purity::PurityConfig::default();
    if a.literal {
        cfg.mode = SelectionMode::SmallestAtMostTarget;
    }
    let (out, result) = greedy_relabel(&map, &domain.segments, &domain.cube, &cfg)?;
    write_map(&out, &domain, &a.output)?;
    if let Some(path) = &a.log {
        let mut s = String::from("superpixel,pure,majority,agreeing_before,agreeing_after\n");
        for (id, pure, majority, before, after) in result.diff_log() {
            s.push_str(&format!("{id},{pure},{majority},{before},{after}\n"));
        }
        std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("relabeled {} pixels", result.relabeled_count());
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.trials).map_err(|e| Error::Io {
        path: a.trials.clone(),
        source: e,
    })?;
    let trials = parse_trials_csv(&text)?;
    let rows = pipeline::summarize(&trials);
    print_summary(&rows);
    if let Some(path) = &a.output {
        std::fs::write(path, serde_json::to_string_pretty(&rows)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn parse_trials_csv(text: &str) -> Result<Vec<pipeline::TrialResult>> {
    let bad = |line: usize, what: &str| Error::MalformedHeader(format!("trials CSV line {line}: {what}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty file"))?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| bad(1, name));
    let (cl, ct, cm, co, ck, cc, ci, cv, cr) = (
        col("labeled_per_class")?,
        col("trial")?,
        col("method")?,
        col("oa")?,
        col("kappa")?,
        col("c")?,
        col("iterations")?,
        col("converged")?,
        col("relabeled")?,
    );
    let f_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("f_")).collect();
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(bad(n + 2, "wrong field count").into());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(n + 2, header[i]));
        let int = |i: usize| f[i].parse::<usize>().map_err(|_| bad(n + 2, header[i]));
        out.push(pipeline::TrialResult {
            labeled_per_class: int(cl)?,
            trial: int(ct)?,
            method: f[cm].parse()?,
            overall_accuracy: num(co)?,
            kappa: num(ck)?,
            f_measure: f_cols.iter().map(|&i| num(i)).collect::<Result<_, _>>()?,
            c: num(cc)?,
            runtime_secs: 0.0,
            objective_trace: Vec::new(),
            alignment_iterations: int(ci)?,
            converged: match f[cv] {
                "" => None,
                s => Some(s == "true"),
            },
            relabeled: int(cr)?,
        });
    }
    Ok(out)
}

fn synth_fixture(a: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let (s, t) = synth::two_domain_cubes(a.seed)?;
    for (name, cube) in [("source", &s), ("target", &t)] {
        pipeline::save_cube(&a.out_dir.join(format!("{name}.cube")), cube)?;
        let gt = cube.ground_truth().expect("synthetic cubes carry ground truth");
        pipeline::save_labels(&a.out_dir.join(format!("{name}.gt")), cube.height(), cube.width(), gt)?;
    }
    println!("wrote source/target cubes and ground truth to {}", a.out_dir.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map(Error::kind);
    match kind {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Io) => 3,
        Some(ErrorKind::Numerical) => 4,
        None => 1,
    }
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            bail!(Error::InvalidConfig(format!("{WORKERS_ENV} must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    init_workers()?;
    match &cli.command {
        Command::Convert(a) => convert(a),
        Command::Segment(a) => segment(a),
        Command::Align(a) => align(a),
        Command::Classify(a) => classify(a),
        Command::Run(a) => run(a),
        Command::Purify(a) => purify(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth_fixture(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
