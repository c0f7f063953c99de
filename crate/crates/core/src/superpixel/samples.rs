//! Superpixel-constrained tensor samples: a `w x w x B` window around a
//! center pixel in which pixels from other superpixels are masked out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HsiCube, SuperpixelMap};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::ClassId;

pub const DEFAULT_WINDOW: usize = 5;

/// What replaces a window pixel lying in a different superpixel than the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillRule {
    /// Mean spectrum of the in-superpixel pixels of the window.
    #[default]
    Mean,
    /// The center pixel's spectrum.
    Center,
    Zero,
    /// No masking: the plain square window.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSample {
    /// Shape `(w, w, B)`: row offset, column offset, band.
    pub patch: Tensor,
    pub center: (usize, usize),
    pub label: Option<ClassId>,
    pub superpixel: u32,
    /// Number of window positions that were replaced.
    pub replaced: usize,
}

impl TensorSample {
    pub fn window(&self) -> usize {
        self.patch.shape()[0]
    }

    pub fn center_spectrum(&self) -> Vec<f64> {
        let w = self.window();
        let h = w / 2;
        (0..self.patch.shape()[2]).map(|b| self.patch.get(&[h, h, b])).collect()
    }
}

pub fn build_sample(
    cube: &HsiCube,
    seg: &SuperpixelMap,
    center: (usize, usize),
    window: usize,
    fill: FillRule,
) -> Result<TensorSample> {
    let (h, w, b) = (cube.height(), cube.width(), cube.bands());
    let (r0, c0) = center;
    if r0 >= h || c0 >= w {
        return Err(Error::dims(format!("center {center:?} outside {h}x{w} image")));
    }
    let half = (window / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let own = seg.label(r0, c0);

    // (di, dj) -> source pixel, and whether it lies in the center's superpixel.
    let mut positions = Vec::with_capacity(window * window);
    for dj in 0..window {
        for di in 0..window {
            let r = clamp(r0 as i64 + di as i64 - half, h);
            let c = clamp(c0 as i64 + dj as i64 - half, w);
            positions.push((di, dj, r, c, seg.label(r, c) == own));
        }
    }
    let replaced = if fill == FillRule::None {
        0
    } else {
        positions.iter().filter(|p| !p.4).count()
    };

    let fill_spectrum: Vec<f64> = match fill {
        FillRule::Mean => {
            let mut acc = vec![0.0; b];
            let mut n = 0usize;
            for &(_, _, r, c, inside) in &positions {
                if inside {
                    for (a, v) in acc.iter_mut().zip(cube.spectrum(r, c)) {
                        *a += v;
                    }
                    n += 1;
                }
            }
            acc.into_iter().map(|a| a / n as f64).collect()
        }
        FillRule::Center => cube.spectrum(r0, c0).to_vec(),
        FillRule::Zero | FillRule::None => vec![0.0; b],
    };

    let mut patch = Tensor::zeros(&[window, window, b]);
    for &(di, dj, r, c, inside) in &positions {
        let spec = if inside || fill == FillRule::None {
            cube.spectrum(r, c)
        } else {
            &fill_spectrum[..]
        };
        for (band, v) in spec.iter().enumerate() {
            patch.set(&[di, dj, band], *v);
        }
    }
    Ok(TensorSample {
        patch,
        center,
        label: cube.label_at(r0, c0),
        superpixel: own,
        replaced,
    })
}

/// Builds one sample per center. Borders are handled by edge replication.
pub fn build_samples(
    cube: &HsiCube,
    centers: &[(usize, usize)],
    window: usize,
    seg: &SuperpixelMap,
    fill: FillRule,
) -> Result<Vec<TensorSample>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("window {window} must be odd")));
    }
    if centers.is_empty() {
        return Err(Error::Empty("sample centers"));
    }
    if seg.height != cube.height() || seg.width != cube.width() {
        return Err(Error::dims("superpixel map does not match the cube"));
    }
    centers
        .par_iter()
        .map(|&c| build_sample(cube, seg, c, window, fill))
        .collect()
}
