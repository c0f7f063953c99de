//! Linear SVM classification and accuracy assessment.

mod metrics;
mod svm;

pub use metrics::{evaluate, EvalReport};
pub use svm::{predict, train_svm, LinearSvmModel, Standardizer, SvmConfig, DEFAULT_C_GRID};
