use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, ProjectionSet, Tensor};

#[derive(Debug, Clone)]
pub struct AlignmentModel {
    pub projections: ProjectionSet,
    pub source_cores: Vec<Tensor>,
    pub target_cores: Vec<Tensor>,
    /// Objective at initialization followed by its value after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Objective after every core update and every single-mode projection update.
    pub half_step_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
}

impl AlignmentModel {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format: ModelFile::FORMAT.to_string(),
            version: ModelFile::VERSION,
            input_dims: self.projections.input_dims(),
            core_dims: self.projections.core_dims(),
            lambda: self.lambda,
            projections: self
                .projections
                .factors()
                .iter()
                .map(|u| FactorRecord {
                    rows: u.nrows(),
                    cols: u.ncols(),
                    data: u.as_slice().to_vec(),
                })
                .collect(),
            objective_trace: self.objective_trace.clone(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// Versioned JSON container for trained projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub input_dims: Vec<usize>,
    pub core_dims: Vec<usize>,
    pub lambda: f64,
    pub projections: Vec<FactorRecord>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// A factor matrix in column-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ModelFile {
    pub const FORMAT: &'static str = "tensoralign.alignment-model";
    pub const VERSION: u32 = 1;

    pub fn projections(&self) -> Result<ProjectionSet> {
        let factors = self
            .projections
            .iter()
            .map(|f| {
                if f.data.len() != f.rows * f.cols {
                    return Err(Error::MalformedHeader(format!(
                        "factor {}x{} carries {} values",
                        f.rows,
                        f.cols,
                        f.data.len()
                    )));
                }
                Ok(Matrix::from_column_slice(f.rows, f.cols, &f.data))
            })
            .collect::<Result<Vec<_>>>()?;
        let set = ProjectionSet::new(factors)?;
        if set.input_dims() != self.input_dims || set.core_dims() != self.core_dims {
            return Err(Error::MalformedHeader("factor shapes disagree with declared dims".into()));
        }
        if set.max_orthonormality_error() > 1e-8 {
            return Err(Error::MalformedHeader("stored projections are not orthonormal".into()));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != Self::FORMAT {
            return Err(Error::MalformedHeader(format!("unknown model format {:?}", file.format)));
        }
        if file.version != Self::VERSION {
            return Err(Error::MalformedHeader(format!("unsupported model version {}", file.version)));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trip() {
        let u = ProjectionSet::new(vec![
            Matrix::from_column_slice(2, 1, &[0.6, 0.8]),
            Matrix::identity(3, 2),
        ])
        .unwrap();
        let model = AlignmentModel {
            projections: u.clone(),
            source_cores: vec![],
            target_cores: vec![],
            objective_trace: vec![3.0, 2.0, 1.5],
            half_step_trace: vec![],
            iterations: 2,
            converged: true,
            lambda: 1e-3,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.to_file().save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        assert_eq!(back.projections().unwrap(), u);
        assert_eq!(back.objective_trace, vec![3.0, 2.0, 1.5]);

        let mut bad = back.clone();
        bad.projections[0].data = vec![1.0, 1.0];
        assert!(bad.projections().is_err());
    }
}
