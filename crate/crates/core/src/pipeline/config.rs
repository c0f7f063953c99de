use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentConfig;
use crate::classify::SvmConfig;
use crate::error::{Error, Result};
use crate::purity::PurityConfig;
use crate::superpixel::{FillRule, SlicConfig, DEFAULT_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// SVM on raw source center pixels, applied to the target unchanged.
    #[serde(rename = "SRC")]
    Src,
    /// SVM on a PCA subspace fit to both domains' center pixels.
    #[serde(rename = "PCA")]
    Pca,
    #[serde(rename = "TA")]
    Ta,
    /// TA followed by pure-sample relabeling.
    #[serde(rename = "TA_P")]
    TaP,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Src, Method::Pca, Method::Ta, Method::TaP];

    pub fn name(self) -> &'static str {
        match self {
            Method::Src => "SRC",
            Method::Pca => "PCA",
            Method::Ta => "TA",
            Method::TaP => "TA_P",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "SRC" => Ok(Method::Src),
            "PCA" | "PCA_BASELINE" => Ok(Method::Pca),
            "TA" => Ok(Method::Ta),
            "TA_P" | "TAP" => Ok(Method::TaP),
            _ => Err(Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

/// Files describing one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainPaths {
    pub cube: PathBuf,
    pub ground_truth: PathBuf,
    /// Precomputed superpixels; segmented on load when absent.
    #[serde(default)]
    pub segments: Option<PathBuf>,
}

impl DomainPaths {
    fn rebase(&mut self, dir: &Path) {
        for p in [Some(&mut self.cube), Some(&mut self.ground_truth), self.segments.as_mut()].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub source: Option<DomainPaths>,
    pub target: Option<DomainPaths>,
    pub window: usize,
    pub fill: FillRule,
    pub slic: SlicConfig,
    pub mpca_dims: Vec<usize>,
    pub alignment: AlignmentConfig,
    /// Each entry is run as its own block of trials.
    pub labeled_per_class: Vec<usize>,
    /// Target samples per class that take part in the alignment.
    pub target_per_class: usize,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Subspace size of the PCA baseline.
    pub pca_components: usize,
    pub svm: SvmConfig,
    pub purity: PurityConfig,
    /// Maps are written for trials `0..map_trials`.
    pub map_trials: usize,
    /// Target pixels classified per batch.
    pub predict_chunk: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: None,
            target: None,
            window: DEFAULT_WINDOW,
            fill: FillRule::default(),
            slic: SlicConfig::default(),
            mpca_dims: vec![5, 5, 20],
            alignment: AlignmentConfig::default(),
            labeled_per_class: vec![5, 10, 20, 40],
            target_per_class: 100,
            trials: 100,
            seed: 0,
            methods: Method::ALL.to_vec(),
            pca_components: 10,
            svm: SvmConfig::default(),
            purity: PurityConfig::default(),
            map_trials: 0,
            predict_chunk: 16384,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        // Relative data paths are taken relative to the config file.
        if let Some(dir) = path.parent() {
            for d in [cfg.source.as_mut(), cfg.target.as_mut()].into_iter().flatten() {
                d.rebase(dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks internal consistency against the band count of the data.
    pub fn validate(&self, bands: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.window == 0 || self.window.is_multiple_of(2) {
            return bad(format!("window {} must be odd", self.window));
        }
        if self.mpca_dims.len() != 3 {
            return bad(format!("MPCA dims {:?} must have three entries", self.mpca_dims));
        }
        let input = [self.window, self.window, bands];
        for (k, (&d, &i)) in self.mpca_dims.iter().zip(&input).enumerate() {
            if d == 0 || d > i {
                return bad(format!("MPCA dim {d} on mode {k} must lie in 1..={i}"));
            }
        }
        self.alignment.validate(&self.mpca_dims)?;
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.labeled_per_class.is_empty() || self.labeled_per_class.contains(&0) {
            return bad("labeled_per_class needs positive entries".into());
        }
        if self.target_per_class == 0 {
            return bad("target_per_class must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.pca_components == 0 || self.pca_components > bands {
            return bad(format!("PCA components {} must lie in 1..={bands}", self.pca_components));
        }
        if self.predict_chunk == 0 {
            return bad("predict_chunk must be positive".into());
        }
        self.purity.validate()
    }
}
