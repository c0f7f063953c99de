//! Dense M-mode tensors and the multilinear algebra the alignment solver is
//! built on.
//!
//! # Linearization
//!
//! Tensor data is stored in column-major ("first index fastest") order: the
//! element at multi-index `(i_1, ..., i_M)` lives at
//! `i_1 + I_1 * (i_2 + I_2 * (i_3 + ...))`.
//!
//! The mode-`k` unfolding `X_(k)` is the `I_k x prod_{l != k} I_l` matrix whose
//! row is `i_k` and whose column enumerates the remaining indices in the same
//! column-major order with mode `k` skipped:
//! `j = sum_{l != k} i_l * prod_{m < l, m != k} I_m`.
//!
//! Under this convention, with `U^(-k) = U^(M) ⊗ ... ⊗ U^(k+1) ⊗ U^(k-1) ⊗ ... ⊗ U^(1)`
//! (note the reversed order, see [`kron_excluding`]):
//!
//! ```text
//! unfold([[G; U]], k)      == U^(k) · unfold(G, k) · (U^(-k))ᵀ
//! vec(unfold([[G; U]], k)) == (U^(-k) ⊗ U^(k)) · vec(unfold(G, k))
//! ```
//!
//! where `vec` stacks matrix columns. Modes are 0-based throughout the API.

mod mpca;
mod svd;
mod tucker;

pub use mpca::{mpca_reduce, Mpca, MpcaConfig};
pub use svd::{leading_eigenvectors, symmetric_eigen_desc, truncated_svd, Svd};
pub use tucker::{tucker_decompose, tucker_decompose_modes, TuckerModel};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::dims(format!("tensor extents must be positive, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dims(format!(
                "shape {shape:?} holds {n} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for (d, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < shape[d] {
                    break;
                }
                *i = 0;
            }
        }
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut lin = 0;
        let mut stride = 1;
        for (i, n) in idx.iter().zip(&self.shape) {
            debug_assert!(i < n);
            lin += i * stride;
            stride *= n;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let lin = self.linear_index(idx);
        self.data[lin] = value;
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Squared Frobenius distance `‖self − other‖²`.
    pub fn distance_sq(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dims(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// Splits the extents around `mode` into (product before, extent, product after).
    fn split(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.shape[..mode].iter().product();
        let right = self.shape[mode + 1..].iter().product();
        (left, self.shape[mode], right)
    }

    /// Mode-`mode` unfolding `X_(mode)`; see the module docs for column order.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        self.check_mode(mode)?;
        let (left, n, right) = self.split(mode);
        let mut m = Matrix::zeros(n, left * right);
        for b in 0..right {
            for i in 0..n {
                let src = left * (i + n * b);
                for a in 0..left {
                    m[(i, a + left * b)] = self.data[src + a];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`Tensor::unfold`].
    pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<Tensor> {
        if mode >= shape.len() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: shape.len(),
            });
        }
        let mut t = Tensor::zeros(shape);
        let (left, n, right) = t.split(mode);
        if m.nrows() != n || m.ncols() != left * right {
            return Err(Error::dims(format!(
                "cannot fold a {}x{} matrix along mode {mode} into {shape:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        for b in 0..right {
            for i in 0..n {
                let dst = left * (i + n * b);
                for a in 0..left {
                    t.data[dst + a] = m[(i, a + left * b)];
                }
            }
        }
        Ok(t)
    }

    /// k-mode product `self ×_mode u`; the extent at `mode` becomes `u.nrows()`.
    pub fn mode_product(&self, u: &Matrix, mode: usize) -> Result<Tensor> {
        self.check_mode(mode)?;
        let (left, n, right) = self.split(mode);
        if u.ncols() != n {
            return Err(Error::dims(format!(
                "mode-{mode} product needs {n} columns, matrix is {}x{}",
                u.nrows(),
                u.ncols()
            )));
        }
        let rows = u.nrows();
        let mut shape = self.shape.clone();
        shape[mode] = rows;
        let mut out = vec![0.0; left * rows * right];
        for b in 0..right {
            for i in 0..n {
                let src = &self.data[left * (i + n * b)..left * (i + n * b) + left];
                for r in 0..rows {
                    let c = u[(r, i)];
                    if c == 0.0 {
                        continue;
                    }
                    let dst = &mut out[left * (r + rows * b)..left * (r + rows * b) + left];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
        }
        Ok(Tensor { shape, data: out })
    }

    /// `self ×_mode uᵀ` without materializing the transpose.
    pub fn mode_product_transposed(&self, u: &Matrix, mode: usize) -> Result<Tensor> {
        self.mode_product(&u.transpose(), mode)
    }

    /// Column vector of the raw data (the mode-0 vectorization).
    pub fn to_vector(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_column_slice(&self.data)
    }
}

/// Product of `t` with `factors[l]` on every mode `l != excluded`.
///
/// `factors.len()` must equal the tensor order; the excluded entry is ignored.
pub fn multi_mode_product_excluding(t: &Tensor, factors: &[Matrix], excluded: usize) -> Result<Tensor> {
    if factors.len() != t.order() {
        return Err(Error::dims(format!(
            "{} factors for a tensor of order {}",
            factors.len(),
            t.order()
        )));
    }
    if excluded >= t.order() {
        return Err(Error::ModeOutOfRange {
            mode: excluded,
            order: t.order(),
        });
    }
    let mut out = t.clone();
    for (l, u) in factors.iter().enumerate() {
        if l != excluded {
            out = out.mode_product(u, l)?;
        }
    }
    Ok(out)
}

/// `[[core; factors]] = core ×_1 U^(1) ... ×_M U^(M)`.
pub fn multi_mode_product(t: &Tensor, factors: &[Matrix]) -> Result<Tensor> {
    if factors.len() != t.order() {
        return Err(Error::dims(format!(
            "{} factors for a tensor of order {}",
            factors.len(),
            t.order()
        )));
    }
    let mut out = t.clone();
    for (l, u) in factors.iter().enumerate() {
        out = out.mode_product(u, l)?;
    }
    Ok(out)
}

/// `t ×_1 U^(1)ᵀ ... ×_M U^(M)ᵀ`.
pub fn multi_mode_product_transposed(t: &Tensor, factors: &[Matrix]) -> Result<Tensor> {
    if factors.len() != t.order() {
        return Err(Error::dims(format!(
            "{} factors for a tensor of order {}",
            factors.len(),
            t.order()
        )));
    }
    let mut out = t.clone();
    for (l, u) in factors.iter().enumerate() {
        out = out.mode_product_transposed(u, l)?;
    }
    Ok(out)
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// `U^(-l) = U^(M) ⊗ ... ⊗ U^(l+1) ⊗ U^(l-1) ⊗ ... ⊗ U^(1)`.
///
/// The reversed order is what makes the unfolding identities in the module
/// docs hold under column-major linearization.
pub fn kron_excluding(factors: &[Matrix], excluded: usize) -> Matrix {
    let mut acc = Matrix::identity(1, 1);
    for (l, u) in factors.iter().enumerate().rev() {
        if l != excluded {
            acc = kron(&acc, u);
        }
    }
    acc
}

/// Column-stacking vectorization of a matrix.
pub fn vec_matrix(m: &Matrix) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

/// Largest deviation of `uᵀu` from the identity.
pub fn orthonormality_error(u: &Matrix) -> f64 {
    let g = u.transpose() * u;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// The M orthonormal factor matrices shared by both domains. Factor `k` is
/// `I_k x J_k` and acts on mode `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSet {
    factors: Vec<Matrix>,
}

impl ProjectionSet {
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Empty("projection set"));
        }
        for (k, u) in factors.iter().enumerate() {
            if u.ncols() > u.nrows() {
                return Err(Error::RankExceedsExtent {
                    mode: k,
                    rank: u.ncols(),
                    extent: u.nrows(),
                });
            }
        }
        Ok(Self { factors })
    }

    pub fn identity(shape: &[usize]) -> Self {
        Self {
            factors: shape.iter().map(|&n| Matrix::identity(n, n)).collect(),
        }
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> &Matrix {
        &self.factors[mode]
    }

    pub(crate) fn set_factor(&mut self, mode: usize, u: Matrix) {
        debug_assert_eq!(u.shape(), self.factors[mode].shape());
        self.factors[mode] = u;
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    /// Full extents `(I_1 ... I_M)`.
    pub fn input_dims(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.nrows()).collect()
    }

    /// Core extents `(J_1 ... J_M)`.
    pub fn core_dims(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.ncols()).collect()
    }

    pub fn max_orthonormality_error(&self) -> f64 {
        self.factors.iter().map(orthonormality_error).fold(0.0, f64::max)
    }

    /// Core of `x` in the subspace: `x ×_1 U^(1)ᵀ ... ×_M U^(M)ᵀ`.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        multi_mode_product_transposed(x, &self.factors)
    }

    /// `[[g; U]]`.
    pub fn reconstruct(&self, g: &Tensor) -> Result<Tensor> {
        multi_mode_product(g, &self.factors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn unfold_2x2x2_matches_index_enumeration() {
        let t = Tensor::new(vec![2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
        // Enumerate the definition directly: column j = i_2 + 2 * i_3.
        let mut expected = Matrix::zeros(2, 4);
        for i1 in 0..2 {
            for i2 in 0..2 {
                for i3 in 0..2 {
                    expected[(i1, i2 + 2 * i3)] = (1 + i1 + 2 * i2 + 4 * i3) as f64;
                }
            }
        }
        assert_eq!(t.unfold(0).unwrap(), expected);
        assert_eq!(
            expected,
            Matrix::from_row_slice(2, 4, &[1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 6.0, 8.0])
        );
    }

    #[test]
    fn unfold_rank_one_tensor_is_rank_one_matrix() {
        let a = [1.0, -2.0, 0.5];
        let b = [2.0, 3.0];
        let c = [1.0, 4.0, -1.0, 2.0];
        let t = Tensor::from_fn(&[3, 2, 4], |i| a[i[0]] * b[i[1]] * c[i[2]]);
        let m = t.unfold(0).unwrap();
        // Column j = i_2 + 2 i_3 equals a scaled by b[i_2] c[i_3].
        for i2 in 0..2 {
            for i3 in 0..4 {
                for i1 in 0..3 {
                    assert_eq!(m[(i1, i2 + 2 * i3)], a[i1] * b[i2] * c[i3]);
                }
            }
        }
        let svd = m.clone().svd(false, false);
        let nonzero = svd.singular_values.iter().filter(|s| **s > 1e-12).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn fold_matches_index_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 3, 8);
        let t = Tensor::fold(&m, 0, &[3, 2, 4]).unwrap();
        for i1 in 0..3 {
            for i2 in 0..2 {
                for i3 in 0..4 {
                    assert_eq!(t.get(&[i1, i2, i3]), m[(i1, i2 + 2 * i3)]);
                }
            }
        }
    }

    #[test]
    fn fold_scalar_tensor() {
        let m = Matrix::from_element(1, 1, 4.5);
        let t = Tensor::fold(&m, 0, &[1, 1, 1]).unwrap();
        assert_eq!(t.data(), &[4.5]);
    }

    #[test]
    fn unfold_rejects_bad_mode() {
        let t = Tensor::zeros(&[2, 2, 2]);
        assert!(matches!(t.unfold(3), Err(Error::ModeOutOfRange { mode: 3, order: 3 })));
        let m = Matrix::zeros(2, 3);
        assert!(Tensor::fold(&m, 0, &[2, 2, 2]).is_err());
    }

    #[test]
    fn mode_product_with_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        for k in 0..3 {
            let id = Matrix::identity(t.shape()[k], t.shape()[k]);
            assert_eq!(t.mode_product(&id, k).unwrap(), t);
        }
    }

    #[test]
    fn mode_products_on_distinct_modes_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        let a = random_matrix(&mut rng, 2, 3);
        let b = random_matrix(&mut rng, 5, 4);
        let ab = t.mode_product(&a, 0).unwrap().mode_product(&b, 1).unwrap();
        let ba = t.mode_product(&b, 1).unwrap().mode_product(&a, 0).unwrap();
        for (x, y) in ab.data().iter().zip(ba.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_product_row_of_ones_sums_frontal_slices() {
        let t = Tensor::new(vec![2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
        let ones = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let s = t.mode_product(&ones, 2).unwrap();
        assert_eq!(s.shape(), &[2, 2, 1]);
        // frontal slices are [1 3; 2 4] and [5 7; 6 8]
        assert_eq!(s.data(), &[6.0, 8.0, 10.0, 12.0]);
    }

    #[test]
    fn mode_product_equals_fold_of_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tensor(&mut rng, &[3, 4, 5]);
        for k in 0..3 {
            let u = random_matrix(&mut rng, 2, t.shape()[k]);
            let direct = t.mode_product(&u, k).unwrap();
            let mut shape = t.shape().to_vec();
            shape[k] = 2;
            let via = Tensor::fold(&(&u * t.unfold(k).unwrap()), k, &shape).unwrap();
            for (x, y) in direct.data().iter().zip(via.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let t = Tensor::zeros(&[2, 3, 4]);
        assert!(t.mode_product(&Matrix::zeros(2, 2), 1).is_err());
    }

    #[test]
    fn multi_mode_excluding_identity_and_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_tensor(&mut rng, &[3, 3, 3]);
        let ids: Vec<Matrix> = (0..3).map(|_| Matrix::identity(3, 3)).collect();
        assert_eq!(multi_mode_product_excluding(&t, &ids, 1).unwrap(), t);

        let f: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut rng, 2, 3)).collect();
        let got = multi_mode_product_excluding(&t, &f, 2).unwrap();
        let want = t.mode_product(&f[0], 0).unwrap().mode_product(&f[1], 1).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn multi_mode_excluding_matches_kronecker_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(&mut rng, &[3, 3, 3]);
        let f: Vec<Matrix> = (0..3).map(|_| random_matrix(&mut rng, 2, 3)).collect();
        for k in 0..3 {
            let got = multi_mode_product_excluding(&t, &f, k).unwrap().unfold(k).unwrap();
            let want = t.unfold(k).unwrap() * kron_excluding(&f, k).transpose();
            assert!((got - want).amax() < 1e-12);
        }
    }

    #[test]
    fn kron_small_cases() {
        assert_eq!(kron(&Matrix::identity(2, 2), &Matrix::identity(3, 3)), Matrix::identity(6, 6));
        let a = Matrix::from_element(1, 1, 2.0);
        let b = Matrix::from_element(1, 1, 3.0);
        assert_eq!(kron(&a, &b)[(0, 0)], 6.0);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(U G Vᵀ) == (V ⊗ U) vec(G), checked against a direct multiply.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_matrix(&mut rng, 2, 3);
        let g = random_matrix(&mut rng, 3, 2);
        let v = random_matrix(&mut rng, 2, 2);
        let lhs = vec_matrix(&(&u * &g * v.transpose()));
        let rhs = kron(&v, &u) * vec_matrix(&g);
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn tensor_new_validates_length() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }
}
