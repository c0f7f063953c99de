//! Experiment artifacts: per-trial CSV, JSON summary, traces, timings, maps
//! and purity diff logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::Method;
use super::experiment::{ExperimentOutput, TrialResult};
use super::map::{emit_map, Palette};
use crate::error::{Error, Result};
use crate::ClassId;

/// Mean and standard error of the mean (sample standard deviation over
/// `sqrt(n)`; 0 for a single trial).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: 0.0, stderr: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, stderr: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub labeled_per_class: usize,
    pub method: Method,
    pub trials: usize,
    pub overall_accuracy: Stat,
    pub kappa: Stat,
    pub f_measure: Vec<Stat>,
}

#[derive(Serialize)]
struct Summary<'a> {
    classes: &'a [ClassId],
    rows: Vec<SummaryRow>,
}

/// Groups trials by labeled count and method.
pub fn summarize(trials: &[TrialResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, Method), Vec<&TrialResult>> = BTreeMap::new();
    for t in trials {
        groups.entry((t.labeled_per_class, t.method)).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|((labeled, method), rows)| {
            let col = |f: &dyn Fn(&TrialResult) -> f64| Stat::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let k = rows[0].f_measure.len();
            SummaryRow {
                labeled_per_class: labeled,
                method,
                trials: rows.len(),
                overall_accuracy: col(&|r| r.overall_accuracy),
                kappa: col(&|r| r.kappa),
                f_measure: (0..k).map(|i| col(&|r| r.f_measure[i])).collect(),
            }
        })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// One row per trial and method. Runtimes are kept out so the file is
/// reproducible byte for byte.
pub fn write_trials_csv(path: &Path, output: &ExperimentOutput) -> Result<()> {
    let mut s = String::from("labeled_per_class,trial,method,oa,kappa,c,iterations,converged,relabeled");
    for c in &output.classes {
        write!(s, ",f_{c}").expect("write to String");
    }
    s.push('\n');
    for t in &output.trials {
        let converged = t.converged.map_or(String::new(), |c| c.to_string());
        write!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            t.labeled_per_class,
            t.trial,
            t.method,
            t.overall_accuracy,
            t.kappa,
            t.c,
            t.alignment_iterations,
            converged,
            t.relabeled
        )
        .expect("write to String");
        for f in &t.f_measure {
            write!(s, ",{f}").expect("write to String");
        }
        s.push('\n');
    }
    write(path, &s)
}

pub fn write_summary_json(path: &Path, output: &ExperimentOutput) -> Result<()> {
    let summary = Summary {
        classes: &output.classes,
        rows: summarize(&output.trials),
    };
    write(path, &serde_json::to_string_pretty(&summary)?)
}

/// Writes the full artifact set into `dir`:
///
/// - `trials.csv`, `summary.json`, `timings.csv`
/// - `traces/L{l}_trial{t}.csv` with the TA objective per outer iteration
/// - `maps/L{l}_trial{t}_{method}.pgm` plus legends, for the mapped trials
/// - `purity/L{l}_trial{t}.csv` with the relabeling diff of mapped trials
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    create_dir(dir)?;
    write_trials_csv(&dir.join("trials.csv"), output)?;
    write_summary_json(&dir.join("summary.json"), output)?;

    let mut timings = String::from("labeled_per_class,trial,method,runtime_secs\n");
    for t in &output.trials {
        writeln!(timings, "{},{},{},{}", t.labeled_per_class, t.trial, t.method, t.runtime_secs).expect("write to String");
    }
    write(&dir.join("timings.csv"), &timings)?;

    let traced: Vec<&TrialResult> = output
        .trials
        .iter()
        .filter(|t| !t.objective_trace.is_empty() && (t.method == Method::Ta || !has_ta(output, t)))
        .collect();
    if !traced.is_empty() {
        let traces = dir.join("traces");
        create_dir(&traces)?;
        for t in traced {
            let mut s = String::from("iteration,objective\n");
            for (i, v) in t.objective_trace.iter().enumerate() {
                writeln!(s, "{i},{v}").expect("write to String");
            }
            write(&traces.join(format!("L{}_trial{}.csv", t.labeled_per_class, t.trial)), &s)?;
        }
    }

    if !output.maps.is_empty() {
        let maps = dir.join("maps");
        create_dir(&maps)?;
        let top = output.maps.iter().flat_map(|m| m.labels.iter().copied()).max().unwrap_or(0);
        let palette = Palette::default_for(top.max(output.classes.last().copied().unwrap_or(0)));
        for m in &output.maps {
            let name = format!("L{}_trial{}_{}.pgm", m.labeled_per_class, m.trial, m.method);
            emit_map(&m.labels, output.height, output.width, &palette, &maps.join(name))?;
        }
    }

    if !output.purity_logs.is_empty() {
        let purity = dir.join("purity");
        create_dir(&purity)?;
        for log in &output.purity_logs {
            let mut s = String::from("superpixel,pure,majority,agreeing_before,agreeing_after\n");
            for (id, pure, majority, before, after) in log.result.diff_log() {
                writeln!(s, "{id},{pure},{majority},{before},{after}").expect("write to String");
            }
            write(&purity.join(format!("L{}_trial{}.csv", log.labeled_per_class, log.trial)), &s)?;
        }
    }
    Ok(())
}

fn has_ta(output: &ExperimentOutput, t: &TrialResult) -> bool {
    output
        .trials
        .iter()
        .any(|o| o.method == Method::Ta && o.trial == t.trial && o.labeled_per_class == t.labeled_per_class)
}
