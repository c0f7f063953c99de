//! Superpixel segmentation of a cube and superpixel-constrained sample
//! construction.

mod cube;
mod pca;
mod samples;
mod slic;

pub use cube::HsiCube;
pub use pca::{pca_bands, PcImage};
pub use samples::{build_sample, build_samples, FillRule, TensorSample, DEFAULT_WINDOW};
pub use slic::{slic_segment, SlicConfig, SuperpixelMap};

use crate::error::Result;

/// Number of principal components the segmentation runs on.
pub const SEGMENTATION_COMPONENTS: usize = 3;

/// SLIC on the first three principal components of `cube`.
pub fn segment_cube(cube: &HsiCube, cfg: &SlicConfig) -> Result<SuperpixelMap> {
    let pcs = pca_bands(cube, SEGMENTATION_COMPONENTS.min(cube.bands()))?;
    slic_segment(&pcs, cfg)
}
