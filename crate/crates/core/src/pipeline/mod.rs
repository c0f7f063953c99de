//! Data containers, the experiment protocol and its reports.

mod config;
mod container;
mod experiment;
mod map;
mod report;
pub mod synth;

pub use config::{DomainPaths, ExperimentConfig, Method};
pub use container::{
    decode_cube, decode_labels, decode_raster, decode_raw, decode_raw_labels, decode_segments, declared_checksum, encode_cube, encode_labels,
    encode_raster, encode_segments, load_cube, load_labels, load_segments, save_cube, save_labels, save_segments,
    sha256_hex, Interleave, RasterHeader, RasterKind, RawDtype, RawLayout,
};
pub use experiment::{
    fit_ta, predict_map, run_experiment, select, ta_features, trial_rng, Domain, ExperimentOutput, PurityLog,
    Selection, TaBundle, TaFit, TrialMap, TrialResult,
};
pub use map::{emit_map, legend_path, read_map, Palette};
pub use report::{summarize, write_outputs, write_summary_json, write_trials_csv, Stat, SummaryRow};
