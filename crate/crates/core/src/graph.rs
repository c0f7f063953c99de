//! Binary weight graphs over samples and their Laplacians.
//!
//! The source graph links every pair of samples sharing a class label; the
//! target graph links each sample to its `k` nearest neighbours under the
//! spectral angle, symmetrized by logical OR.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_TARGET_NEIGHBORS: usize = 10;

/// Spectral angle between two spectra, in `[0, π]`.
pub fn spectral_angle(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims(format!("spectra of length {} and {}", x.len(), y.len())));
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroNorm);
    }
    // arccos of the normalized dot product, evaluated as 2·atan2(‖x̂ − ŷ‖, ‖x̂ + ŷ‖)
    // which stays accurate near 0 and π.
    let (mut dm, mut dp) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (a, b) = (a / nx, b / ny);
        dm += (a - b) * (a - b);
        dp += (a + b) * (a + b);
    }
    Ok(2.0 * dm.sqrt().atan2(dp.sqrt()))
}

/// Symmetric binary adjacency with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    weights: Matrix,
}

impl WeightGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            weights: Matrix::zeros(n, n),
        }
    }

    /// Validates symmetry, nonnegativity and the zero diagonal.
    pub fn from_weights(weights: Matrix) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::dims("weight matrix must be square"));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidConfig(format!("nonzero self-weight at node {i}")));
            }
            for j in 0..i {
                let w = weights[(i, j)];
                if w != weights[(j, i)] || w < 0.0 || !w.is_finite() {
                    return Err(Error::InvalidConfig(format!("bad weight between {i} and {j}")));
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights.row(i).sum()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        let n = self.len();
        (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).filter(|&(i, j)| self.weights[(i, j)] != 0.0).count()
    }

    pub fn laplacian(&self) -> Laplacian {
        laplacian(self)
    }
}

/// `w_ij = 1` iff samples `i != j` carry the same label.
pub fn source_graph<L: PartialEq>(labels: &[L]) -> WeightGraph {
    let n = labels.len();
    let weights = Matrix::from_fn(n, n, |i, j| if i != j && labels[i] == labels[j] { 1.0 } else { 0.0 });
    WeightGraph { weights }
}

/// Binary kNN graph under the spectral angle, symmetrized by OR.
///
/// Each row of `spectra` is one sample's spectrum (the center-pixel spectrum
/// of its tensor). Ties at the k-th neighbour go to the smaller index.
pub fn target_graph(spectra: &[Vec<f64>], k: usize) -> Result<WeightGraph> {
    let n = spectra.len();
    if n <= k {
        return Err(Error::InsufficientSamples { needed: k, got: n });
    }
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand = Vec::with_capacity(n - 1);
            for j in 0..n {
                if j != i {
                    cand.push((spectral_angle(&spectra[i], &spectra[j])?, j));
                }
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            Ok(cand.into_iter().take(k).map(|(_, j)| j).collect())
        })
        .collect::<Result<_>>()?;
    let mut weights = Matrix::zeros(n, n);
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            weights[(i, j)] = 1.0;
            weights[(j, i)] = 1.0;
        }
    }
    Ok(WeightGraph { weights })
}

/// `L = D − W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub matrix: Matrix,
    pub degrees: Vec<f64>,
}

impl Laplacian {
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    /// `Tr(G L Gᵀ)` where the columns of `g` are per-sample vectors.
    pub fn trace_form(&self, g: &Matrix) -> f64 {
        (g * &self.matrix).component_mul(g).sum()
    }
}

pub fn laplacian(g: &WeightGraph) -> Laplacian {
    let n = g.len();
    let degrees: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    let mut matrix = -g.weights.clone();
    for (i, d) in degrees.iter().enumerate() {
        matrix[(i, i)] = *d;
    }
    Laplacian { matrix, degrees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn angle_basics() {
        assert_eq!(spectral_angle(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((spectral_angle(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((spectral_angle(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - FRAC_PI_4).abs() < 1e-12);
        assert!(matches!(spectral_angle(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn angle_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.1..1.0)).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.gen_range(0.1..1.0)).collect();
            let c = rng.gen_range(0.01..100.0);
            let cy: Vec<f64> = y.iter().map(|v| v * c).collect();
            let a = spectral_angle(&x, &y).unwrap();
            let b = spectral_angle(&x, &cy).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn source_graph_edges() {
        let g = source_graph(&['a', 'a', 'b']);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(0, 2), 0.0);

        let g = source_graph(&[1, 1, 1, 1]);
        assert_eq!(g.edge_count(), 6);

        // sizes 2, 2, 1 -> one pair each from the first two classes
        let g = source_graph(&[1, 2, 1, 3, 2]);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn target_graph_identical_samples() {
        let s = vec![vec![1.0, 2.0]; 3];
        let g = target_graph(&s, 1).unwrap();
        for i in 0..3 {
            assert!(g.degree(i) >= 1.0);
        }
        assert_eq!(g.weights(), &g.weights().transpose());
        // ties go to the smaller index: 0->1, 1->0, 2->0
        assert_eq!(g.weight(2, 0), 1.0);
    }

    #[test]
    fn target_graph_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut spectra = Vec::new();
        for c in 0..2 {
            for _ in 0..12 {
                let base = if c == 0 { [1.0, 0.05, 0.05] } else { [0.05, 0.05, 1.0] };
                spectra.push(base.iter().map(|b| b + rng.gen_range(0.0..0.05)).collect());
            }
        }
        let g = target_graph(&spectra, 10).unwrap();
        for i in 0..12 {
            for j in 12..24 {
                assert_eq!(g.weight(i, j), 0.0);
            }
        }
        for i in 0..24 {
            assert!(g.degree(i) >= 10.0);
        }
    }

    #[test]
    fn target_graph_needs_more_than_k() {
        let s = vec![vec![1.0]; 10];
        assert!(matches!(target_graph(&s, 10), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn laplacian_small_cases() {
        let l = laplacian(&WeightGraph::empty(3));
        assert_eq!(l.matrix, Matrix::zeros(3, 3));
        let g = source_graph(&[0, 0]);
        let l = laplacian(&g);
        assert_eq!(l.matrix, Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn quadratic_form_matches_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<u8> = (0..9).map(|_| rng.gen_range(0..3)).collect();
        let g = source_graph(&labels);
        let l = laplacian(&g);
        let x = nalgebra::DVector::from_fn(9, |_, _| rng.gen_range(-1.0..1.0));
        let quad = (x.transpose() * &l.matrix * &x)[(0, 0)];
        let mut pair = 0.0;
        for i in 0..9 {
            for j in 0..9 {
                pair += 0.5 * g.weight(i, j) * (x[i] - x[j]).powi(2);
            }
        }
        assert!((quad - pair).abs() < 1e-10);
    }

    #[test]
    fn from_weights_validates() {
        let mut w = Matrix::zeros(2, 2);
        w[(0, 1)] = 1.0;
        assert!(WeightGraph::from_weights(w.clone()).is_err());
        w[(1, 0)] = 1.0;
        assert!(WeightGraph::from_weights(w).is_ok());
    }
}
