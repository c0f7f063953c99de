pub mod alignment;
pub mod classify;
pub mod error;
pub mod graph;
pub mod pipeline;
pub mod purity;
pub mod superpixel;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};

/// Class identifier; 0 marks an unlabeled pixel in ground-truth grids.
pub type ClassId = u16;
