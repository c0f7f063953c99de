use super::HsiCube;
use crate::error::{Error, Result};
use crate::tensor::{symmetric_eigen_desc, Matrix};

/// Multi-channel image, pixel-interleaved like [`HsiCube`].
#[derive(Debug, Clone, PartialEq)]
pub struct PcImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    /// Eigenvalues of the band covariance, all of them, nonincreasing.
    pub eigenvalues: Vec<f64>,
}

impl PcImage {
    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels || channels == 0 {
            return Err(Error::dims("image data does not match its extents"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            eigenvalues: Vec::new(),
        })
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let s = (row * self.width + col) * self.channels;
        &self.data[s..s + self.channels]
    }

    /// Fraction of total band variance carried by the retained components.
    pub fn explained_variance(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(self.channels).map(|v| v.max(0.0)).sum::<f64>() / total
    }
}

/// Projects every pixel onto the top-`n` eigenvectors of the band covariance
/// (pixels as observations, mean removed).
pub fn pca_bands(cube: &HsiCube, n: usize) -> Result<PcImage> {
    let b = cube.bands();
    if n == 0 || n > b {
        return Err(Error::dims(format!("{n} components requested from {b} bands")));
    }
    let p = cube.pixels();
    let mut mean = vec![0.0; b];
    for px in 0..p {
        for (m, v) in mean.iter_mut().zip(cube.spectrum_at(px)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= p as f64);

    let mut cov = Matrix::zeros(b, b);
    let mut centered = vec![0.0; b];
    for px in 0..p {
        for (c, (v, m)) in centered.iter_mut().zip(cube.spectrum_at(px).iter().zip(&mean)) {
            *c = v - m;
        }
        for i in 0..b {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..b {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..b {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov /= (p.max(2) - 1) as f64;

    let (vals, vecs) = symmetric_eigen_desc(&cov)?;
    let top = vals[0].max(0.0);
    let rank = vals.iter().filter(|&&v| top > 0.0 && v > top * 1e-12).count();
    if rank < n {
        return Err(Error::DegenerateCovariance { rank, requested: n });
    }

    let mut data = Vec::with_capacity(p * n);
    for px in 0..p {
        let s = cube.spectrum_at(px);
        for k in 0..n {
            let v = vecs.column(k);
            data.push(s.iter().zip(&mean).zip(v.iter()).map(|((x, m), e)| (x - m) * e).sum());
        }
    }
    Ok(PcImage {
        height: cube.height(),
        width: cube.width(),
        channels: n,
        data,
        eigenvalues: vals.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn copied_bands_put_all_variance_in_first_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let data: Vec<f64> = base.iter().flat_map(|&v| [v, v, v, v]).collect();
        let cube = HsiCube::new(8, 8, 4, data).unwrap();
        let img = pca_bands(&cube, 1).unwrap();
        assert!(img.eigenvalues[1] / img.eigenvalues[0] < 1e-12);
        assert!(img.explained_variance() > 1.0 - 1e-12);
        assert!(matches!(pca_bands(&cube, 3), Err(Error::DegenerateCovariance { rank: 1, requested: 3 })));
    }

    #[test]
    fn full_rotation_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..6 * 5 * 4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let cube = HsiCube::new(6, 5, 4, data).unwrap();
        let img = pca_bands(&cube, 4).unwrap();
        // Pairwise distances are preserved by a rotation after centering.
        for (a, b) in [(0usize, 7usize), (3, 29), (12, 13)] {
            let d_cube: f64 = cube.spectrum_at(a).iter().zip(cube.spectrum_at(b)).map(|(x, y)| (x - y).powi(2)).sum();
            let pa = &img.data[a * 4..a * 4 + 4];
            let pb = &img.data[b * 4..b * 4 + 4];
            let d_img: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y).powi(2)).sum();
            assert!((d_cube - d_img).abs() <= 1e-8);
        }
        for w in img.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn three_dim_band_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis: Vec<[f64; 10]> = (0..3).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        let mut data = Vec::new();
        for _ in 0..100 {
            let c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            for b in 0..10 {
                let clean: f64 = c.iter().zip(&basis).map(|(ck, v)| ck * v[b]).sum();
                data.push(1.0 + clean + rng.gen_range(-1e-4..1e-4));
            }
        }
        let cube = HsiCube::new(10, 10, 10, data).unwrap();
        let img = pca_bands(&cube, 3).unwrap();
        assert!(img.explained_variance() >= 0.9999);
    }
}
