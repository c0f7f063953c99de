//! SLIC superpixels on a multi-channel image.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::PcImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicConfig {
    pub region_size: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            region_size: 10,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

/// Per-pixel segment labels in raster order, contiguous in `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl SuperpixelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::dims(format!(
                "{} labels for a {height}x{width} image",
                labels.len()
            )));
        }
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("superpixel labels are not contiguous".into()));
        }
        Ok(Self {
            height,
            width,
            labels,
            count,
        })
    }

    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }

    /// Pixel indices (raster order) of each segment.
    pub fn segments(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (p, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(p);
        }
        out
    }

    /// True when every segment is a single 4-connected region.
    pub fn is_connected(&self) -> bool {
        let components = connected_components(&self.labels, self.height, self.width);
        let n_comp = components.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        n_comp == self.count
    }
}

/// Segments `image` with SLIC: grid-seeded centers moved to the lowest
/// gradient in their 3x3 neighbourhood, `iterations` rounds of local k-means
/// within 2S x 2S windows under `D² = d_c² + (d_s / S)² m²`, then
/// connectivity enforcement.
///
/// Channels are rescaled jointly so that the widest channel spans `[0, 100]`
/// before clustering, which puts `compactness` on the scale SLIC uses for
/// CIELAB input.
pub fn slic_segment(image: &PcImage, cfg: &SlicConfig) -> Result<SuperpixelMap> {
    let (h, w, c) = (image.height, image.width, image.channels);
    let s = cfg.region_size;
    if s < 2 {
        return Err(Error::InvalidConfig(format!("region size {s} < 2")));
    }
    if s > h.max(w) {
        return Err(Error::InvalidConfig(format!("region size {s} larger than {h}x{w} image")));
    }
    if cfg.compactness.is_nan() || cfg.compactness <= 0.0 {
        return Err(Error::InvalidConfig("compactness must be positive".into()));
    }

    let data = rescale(&image.data, c);
    let px = |r: usize, col: usize| &data[(r * w + col) * c..(r * w + col + 1) * c];

    // Seeds at grid-cell centers.
    let ny = h.div_ceil(s);
    let nx = w.div_ceil(s);
    let mut centers: Vec<Center> = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let y0 = gy * s;
            let x0 = gx * s;
            let cy = y0 + ((y0 + s).min(h) - y0) / 2;
            let cx = x0 + ((x0 + s).min(w) - x0) / 2;
            let (cy, cx) = lowest_gradient(&data, h, w, c, cy, cx);
            centers.push(Center {
                y: cy as f64,
                x: cx as f64,
                color: px(cy, cx).to_vec(),
            });
        }
    }

    let spatial_weight = (cfg.compactness / s as f64).powi(2);
    let mut labels = vec![u32::MAX; h * w];
    let mut dist = vec![f64::INFINITY; h * w];
    for _ in 0..cfg.iterations {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, ctr) in centers.iter().enumerate() {
            let cy = ctr.y.round() as i64;
            let cx = ctr.x.round() as i64;
            let r0 = (cy - s as i64).max(0) as usize;
            let r1 = ((cy + s as i64) as usize).min(h - 1);
            let c0 = (cx - s as i64).max(0) as usize;
            let c1 = ((cx + s as i64) as usize).min(w - 1);
            for r in r0..=r1 {
                for col in c0..=c1 {
                    let dc: f64 = px(r, col).iter().zip(&ctr.color).map(|(a, b)| (a - b) * (a - b)).sum();
                    let ds = (r as f64 - ctr.y).powi(2) + (col as f64 - ctr.x).powi(2);
                    let d = dc + ds * spatial_weight;
                    let i = r * w + col;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k as u32;
                    }
                }
            }
        }
        // Recompute centers as cluster means; empty clusters keep their position.
        let mut acc = vec![(0.0, 0.0, vec![0.0; c], 0usize); centers.len()];
        for r in 0..h {
            for col in 0..w {
                let l = labels[r * w + col];
                if l == u32::MAX {
                    continue;
                }
                let a = &mut acc[l as usize];
                a.0 += r as f64;
                a.1 += col as f64;
                for (s, v) in a.2.iter_mut().zip(px(r, col)) {
                    *s += v;
                }
                a.3 += 1;
            }
        }
        for (ctr, (sy, sx, sc, n)) in centers.iter_mut().zip(acc) {
            if n > 0 {
                let n = n as f64;
                ctr.y = sy / n;
                ctr.x = sx / n;
                ctr.color = sc.into_iter().map(|v| v / n).collect();
            }
        }
    }

    // Any pixel out of reach of every window joins its nearest center spatially.
    for r in 0..h {
        for col in 0..w {
            let i = r * w + col;
            if labels[i] == u32::MAX {
                let mut best = (f64::INFINITY, 0u32);
                for (k, ctr) in centers.iter().enumerate() {
                    let d = (r as f64 - ctr.y).powi(2) + (col as f64 - ctr.x).powi(2);
                    if d < best.0 {
                        best = (d, k as u32);
                    }
                }
                labels[i] = best.1;
            }
        }
    }

    let min_size = (s * s / 4).max(1);
    let labels = enforce_connectivity(&labels, h, w, min_size);
    SuperpixelMap::new(h, w, labels)
}

struct Center {
    y: f64,
    x: f64,
    color: Vec<f64>,
}

fn rescale(data: &[f64], c: usize) -> Vec<f64> {
    let mut lo = vec![f64::INFINITY; c];
    let mut hi = vec![f64::NEG_INFINITY; c];
    for px in data.chunks(c) {
        for k in 0..c {
            lo[k] = lo[k].min(px[k]);
            hi[k] = hi[k].max(px[k]);
        }
    }
    let span = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    let scale = if span > 0.0 { 100.0 / span } else { 1.0 };
    data.chunks(c)
        .flat_map(|px| px.iter().zip(&lo).map(move |(v, l)| (v - l) * scale))
        .collect()
}

fn lowest_gradient(data: &[f64], h: usize, w: usize, c: usize, cy: usize, cx: usize) -> (usize, usize) {
    let at = |r: usize, col: usize| &data[(r * w + col) * c..(r * w + col + 1) * c];
    let grad = |r: usize, col: usize| -> f64 {
        let (u, d) = (r.saturating_sub(1), (r + 1).min(h - 1));
        let (l, rt) = (col.saturating_sub(1), (col + 1).min(w - 1));
        let gy: f64 = at(d, col).iter().zip(at(u, col)).map(|(a, b)| (a - b).powi(2)).sum();
        let gx: f64 = at(r, rt).iter().zip(at(r, l)).map(|(a, b)| (a - b).powi(2)).sum();
        gx + gy
    };
    let mut best = (grad(cy, cx), cy, cx);
    for r in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
        for col in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
            let g = grad(r, col);
            if g < best.0 {
                best = (g, r, col);
            }
        }
    }
    (best.1, best.2)
}

/// Labels every 4-connected component of equal input labels with its own
/// id, in raster order of first appearance.
fn connected_components(labels: &[u32], h: usize, w: usize) -> Vec<u32> {
    let mut out = vec![u32::MAX; h * w];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if out[start] != u32::MAX {
            continue;
        }
        out[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbors4(p, h, w) {
                if out[q] == u32::MAX && labels[q] == labels[start] {
                    out[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    out
}

fn neighbors4(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (p / w, p % w);
    [
        (r > 0).then(|| p - w),
        (c > 0).then(|| p - 1),
        (c + 1 < w).then(|| p + 1),
        (r + 1 < h).then(|| p + w),
    ]
    .into_iter()
    .flatten()
}

/// Relabels components; those smaller than `min_size` are absorbed by an
/// already-relabeled neighbouring component.
fn enforce_connectivity(labels: &[u32], h: usize, w: usize, min_size: usize) -> Vec<u32> {
    let mut out = vec![u32::MAX; h * w];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    for start in 0..h * w {
        if out[start] != u32::MAX {
            continue;
        }
        let adjacent = neighbors4(start, h, w).find(|&q| out[q] != u32::MAX).map(|q| out[q]);
        members.clear();
        out[start] = next;
        members.push(start);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbors4(p, h, w) {
                if out[q] == u32::MAX && labels[q] == labels[start] {
                    out[q] = next;
                    members.push(q);
                    queue.push_back(q);
                }
            }
        }
        match adjacent {
            Some(adj) if members.len() < min_size => {
                for &m in &members {
                    out[m] = adj;
                }
            }
            _ => next += 1,
        }
    }
    out
}
