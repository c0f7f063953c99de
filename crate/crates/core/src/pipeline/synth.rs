//! Synthetic data generators for tests, demos and the bundled fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::superpixel::HsiCube;
use crate::tensor::{Matrix, ProjectionSet, Tensor};
use crate::ClassId;

/// Side length of the two-domain cube.
pub const TWO_DOMAIN_SIZE: usize = 32;
pub const TWO_DOMAIN_BANDS: usize = 8;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Class of a pixel in the two-domain layout: four 16x16 quadrants.
pub fn quadrant_class(row: usize, col: usize) -> ClassId {
    let half = TWO_DOMAIN_SIZE / 2;
    1 + 2 * (row >= half) as ClassId + (col >= half) as ClassId
}

/// Source and target cubes (32 x 32 x 8, four classes in quadrants).
///
/// Band pair (0, 1) carries a strong class signal under heavy per-pixel
/// noise; bands 2..6 carry moderate noise only; bands (6, 7) carry a faint
/// but nearly noise-free class code. The target is the source model with
/// bands (4, 5) and (6, 7) swapped, a rotation in band space, drawn with
/// independent noise. A classifier keyed on the clean source bands does not
/// transfer, while spatially pooled features on bands (0, 1) do.
pub fn two_domain_cubes(seed: u64) -> Result<(HsiCube, HsiCube)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = draw_cube(&mut rng, false)?;
    let target = draw_cube(&mut rng, true)?;
    Ok((source, target))
}

fn draw_cube(rng: &mut ChaCha8Rng, rotated: bool) -> Result<HsiCube> {
    const BASE: f64 = 5.0;
    const STRONG: f64 = 1.5;
    const STRONG_NOISE: f64 = 1.0;
    const MID_NOISE: f64 = 0.3;
    const CODE: f64 = 0.05;
    const CODE_NOISE: f64 = 0.005;
    let n = TWO_DOMAIN_SIZE;
    let mut data = Vec::with_capacity(n * n * TWO_DOMAIN_BANDS);
    let mut gt = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let class = quadrant_class(r, c);
            gt.push(class);
            let (sa, sb) = match class {
                1 => (1.0, 1.0),
                2 => (1.0, -1.0),
                3 => (-1.0, 1.0),
                _ => (-1.0, -1.0),
            };
            let mut v = [0.0; TWO_DOMAIN_BANDS];
            v[0] = STRONG * sa + STRONG_NOISE * normal(rng);
            v[1] = STRONG * sb + STRONG_NOISE * normal(rng);
            for x in &mut v[2..6] {
                *x = MID_NOISE * normal(rng);
            }
            v[6] = CODE * sb + CODE_NOISE * normal(rng);
            v[7] = CODE * sa + CODE_NOISE * normal(rng);
            if rotated {
                v.swap(4, 6);
                v.swap(5, 7);
            }
            data.extend(v.iter().map(|x| x + BASE));
        }
    }
    HsiCube::new(n, n, TWO_DOMAIN_BANDS, data)?.with_ground_truth(gt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub shape: Vec<usize>,
    pub core_dims: Vec<usize>,
    pub samples_per_domain: usize,
    pub classes: usize,
    /// Spread of the per-sample cores around their class center.
    pub core_spread: f64,
    /// Size of the perturbation separating the two factor sets.
    pub factor_shift: f64,
    pub noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            shape: vec![5, 5, 8],
            core_dims: vec![2, 2, 3],
            samples_per_domain: 24,
            classes: 3,
            core_spread: 0.3,
            factor_shift: 0.1,
            noise: 0.01,
        }
    }
}

/// Samples of a planted two-domain Tucker model.
#[derive(Debug, Clone)]
pub struct PlantedModel {
    pub xs: Vec<Tensor>,
    pub xt: Vec<Tensor>,
    pub labels_s: Vec<ClassId>,
    /// Cores shared by both domains: sample `i` of each domain uses core `i`.
    pub cores: Vec<Tensor>,
    pub source_factors: ProjectionSet,
    pub target_factors: ProjectionSet,
}

fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let m = Matrix::from_fn(rows, cols, |_, _| normal(rng));
    m.qr().q().columns(0, cols).into_owned()
}

fn orthonormalize(m: &Matrix) -> Matrix {
    let cols = m.ncols();
    m.clone().qr().q().columns(0, cols).into_owned()
}

/// Source tensors `[[G_i; U_S]] + noise` and target tensors
/// `[[G_i; U_T]] + noise`, where `U_T` is `U_S` perturbed by
/// `factor_shift` and re-orthonormalized.
pub fn planted_model(cfg: &PlantedConfig, seed: u64) -> Result<PlantedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source: Vec<Matrix> = cfg
        .shape
        .iter()
        .zip(&cfg.core_dims)
        .map(|(&i, &j)| random_orthonormal(&mut rng, i, j))
        .collect();
    let target: Vec<Matrix> = source
        .iter()
        .map(|u| orthonormalize(&(u + Matrix::from_fn(u.nrows(), u.ncols(), |_, _| cfg.factor_shift * normal(&mut rng)))))
        .collect();
    let source_factors = ProjectionSet::new(source)?;
    let target_factors = ProjectionSet::new(target)?;

    let centers: Vec<Tensor> = (0..cfg.classes)
        .map(|_| Tensor::from_fn(&cfg.core_dims, |_| normal(&mut rng)))
        .collect();
    let labels_s: Vec<ClassId> = (0..cfg.samples_per_domain).map(|i| (i % cfg.classes) as ClassId + 1).collect();
    let cores: Vec<Tensor> = labels_s
        .iter()
        .map(|&l| {
            let center = &centers[l as usize - 1];
            Tensor::from_fn(&cfg.core_dims, |idx| center.get(idx) + cfg.core_spread * normal(&mut rng))
        })
        .collect();
    let mut noisy = |u: &ProjectionSet, g: &Tensor| -> Result<Tensor> {
        let mut x = u.reconstruct(g)?;
        for v in x.data_mut() {
            *v += cfg.noise * normal(&mut rng);
        }
        Ok(x)
    };
    let xs = cores.iter().map(|g| noisy(&source_factors, g)).collect::<Result<Vec<_>>>()?;
    let xt = cores.iter().map(|g| noisy(&target_factors, g)).collect::<Result<Vec<_>>>()?;
    Ok(PlantedModel {
        xs,
        xt,
        labels_s,
        cores,
        source_factors,
        target_factors,
    })
}
