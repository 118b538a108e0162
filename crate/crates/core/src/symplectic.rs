//! Symplectic matrices in interleaved `(q1, p1, ..., qN, pN)` ordering.
//!
//! Row and column `2k` carry the `q` quadrature of mode `k`, `2k + 1` the
//! `p` quadrature (zero-based). The symplectic form is
//! `Omega = diag(w, ..., w)` with `w = [[0, 1], [-1, 0]]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{det2, expm, Mat};
use crate::scalar::Real;

/// Block-diagonal symplectic form `diag(w, ..., w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm<T> {
    n_modes: usize,
    matrix: Mat<T>,
}

impl<T: Real> SymplecticForm<T> {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<T> {
        self.matrix
    }
}

pub fn omega_form<T: Real>(n_modes: usize) -> Result<SymplecticForm<T>> {
    if n_modes == 0 {
        return Err(Error::InvalidDimension(
            "symplectic form needs at least one mode".into(),
        ));
    }
    Ok(SymplecticForm {
        n_modes,
        matrix: omega_matrix(n_modes),
    })
}

pub(crate) fn omega_matrix<T: Real>(n_modes: usize) -> Mat<T> {
    let mut m = Mat::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        m[(2 * k, 2 * k + 1)] = T::one();
        m[(2 * k + 1, 2 * k)] = -T::one();
    }
    m
}

fn check_even_square<T: Real>(m: &Mat<T>) -> Result<usize> {
    if !m.is_square() || m.nrows() == 0 || m.nrows() % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "expected a non-empty square matrix of even dimension, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows() / 2)
}

/// Max-norm residual `|M Omega M^T - Omega|`.
pub fn symplectic_residual<T: Real>(m: &Mat<T>) -> Result<T> {
    let n = check_even_square(m)?;
    let omega = omega_matrix::<T>(n);
    let prod = &(m * &omega) * &m.transpose();
    Ok(prod.max_abs_diff(&omega))
}

/// Pulls a nearly symplectic matrix back onto the group. Each pass solves
/// the linearised condition for `M (1 + K)`, so the defect roughly squares.
pub(crate) fn resymplectify<T: Real>(m: &Mat<T>, passes: usize) -> Mat<T> {
    let omega = omega_matrix::<T>(m.nrows() / 2);
    let mut x = m.clone();
    for _ in 0..passes {
        let defect = &(&x.transpose() * &omega) * &x;
        let e = Mat::from_fn(x.nrows(), x.ncols(), |i, j| defect[(i, j)] - omega[(i, j)]);
        let k = (&omega * &e).scale(T::lit(0.5));
        x = &x + &(&x * &k);
    }
    x
}

pub fn is_symplectic<T: Real>(m: &Mat<T>, tol: T) -> Result<bool> {
    Ok(symplectic_residual(m)? <= tol)
}

/// Phase-space rotation `[[cos t, sin t], [-sin t, cos t]]`.
pub fn rotation<T: Real>(theta: T) -> Mat<T> {
    let (s, c) = theta.sin_cos();
    Mat::from_rows(&[vec![c, s], vec![-s, c]]).unwrap()
}

/// Single-mode squeezer `diag(exp(-r), exp(r))`.
pub fn squeeze<T: Real>(r: T) -> Result<Mat<T>> {
    if !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "squeezing parameter {r} is not finite"
        )));
    }
    Ok(Mat::from_diag(&[(-r).exp(), r.exp()]))
}

/// A `2N x 2N` matrix certified symplectic at construction.
///
/// Products of certified matrices are symplectic by closure and are not
/// re-certified; use [`symplectic_residual`] to measure drift.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix<T> {
    n_modes: usize,
    matrix: Mat<T>,
}

impl<T: Real> SymplecticMatrix<T> {
    /// Certifies `m` at the scalar's default tolerance.
    pub fn new(m: Mat<T>) -> Result<Self> {
        Self::with_tolerance(m, T::lit(T::SYMPLECTIC_TOL))
    }

    pub fn with_tolerance(m: Mat<T>, tol: T) -> Result<Self> {
        let n_modes = check_even_square(&m)?;
        let residual = symplectic_residual(&m)?;
        if !(residual <= tol) {
            return Err(Error::NotSymplectic {
                residual: residual.to_f64_lossy(),
                tolerance: tol.to_f64_lossy(),
            });
        }
        Ok(Self { n_modes, matrix: m })
    }

    /// Wraps a matrix known to be symplectic by construction (products,
    /// permutations, local layers).
    pub(crate) fn trusted(m: Mat<T>) -> Self {
        debug_assert!(m.is_square() && m.nrows() % 2 == 0);
        Self {
            n_modes: m.nrows() / 2,
            matrix: m,
        }
    }

    pub fn identity(n_modes: usize) -> Self {
        Self::trusted(Mat::identity(2 * n_modes))
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<T> {
        self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.matrix[(i, j)]
    }

    pub fn max_abs(&self) -> T {
        self.matrix.max_abs()
    }

    pub fn residual(&self) -> T {
        symplectic_residual(&self.matrix).expect("dimension checked at construction")
    }

    /// `self * rhs`.
    pub fn compose(&self, rhs: &Self) -> Self {
        assert_eq!(self.n_modes, rhs.n_modes, "mode count mismatch");
        Self::trusted(&self.matrix * &rhs.matrix)
    }

    /// `S^-1 = -Omega S^T Omega`.
    pub fn inverse(&self) -> Self {
        let omega = omega_matrix::<T>(self.n_modes);
        Self::trusted(-&(&(&omega * &self.matrix.transpose()) * &omega))
    }

    pub fn transpose(&self) -> Self {
        Self::trusted(self.matrix.transpose())
    }

    /// The 2x2 block coupling output mode `k` to input mode `l`.
    pub fn mode_block(&self, k: usize, l: usize) -> Mat<T> {
        self.matrix.block(2 * k, 2 * l, 2, 2)
    }

    /// Restriction to the trailing modes `first..N`.
    pub fn trailing_block(&self, first: usize) -> Mat<T> {
        let d = self.dim() - 2 * first;
        self.matrix.block(2 * first, 2 * first, d, d)
    }

    /// Conjugates by a mode relabeling: mode `k` of `self` becomes mode
    /// `perm.image(k)` of the result.
    pub fn relabeled(&self, perm: &ModePermutation) -> Self {
        let p = perm.matrix::<T>();
        Self::trusted(&(&p * &self.matrix) * &p.transpose())
    }
}

/// Direct sum of single-mode 2x2 symplectic blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLayer<T> {
    blocks: Vec<Mat<T>>,
}

pub(crate) fn block_det_ok<T: Real>(b: &Mat<T>, tol: T) -> bool {
    let scale = T::one().max(b.max_abs() * b.max_abs());
    (det2(b) - T::one()).abs() <= tol * scale
}

impl<T: Real> LocalLayer<T> {
    pub fn new(blocks: Vec<Mat<T>>) -> Result<Self> {
        Self::with_tolerance(blocks, T::lit(T::SYMPLECTIC_TOL))
    }

    pub fn with_tolerance(blocks: Vec<Mat<T>>, tol: T) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidDimension(
                "a local layer needs at least one block".into(),
            ));
        }
        for (mode, b) in blocks.iter().enumerate() {
            if b.nrows() != 2 || b.ncols() != 2 {
                return Err(Error::InvalidDimension(format!("block {mode} is not 2x2")));
            }
            if !block_det_ok(b, tol) {
                return Err(Error::NonSymplecticBlock {
                    mode,
                    det: det2(b).to_f64_lossy(),
                });
            }
        }
        Ok(Self { blocks })
    }

    pub fn identity(n_modes: usize) -> Self {
        Self {
            blocks: vec![Mat::identity(2); n_modes],
        }
    }

    pub(crate) fn trusted(blocks: Vec<Mat<T>>) -> Self {
        Self { blocks }
    }

    pub fn n_modes(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Mat<T>] {
        &self.blocks
    }

    pub fn block(&self, mode: usize) -> &Mat<T> {
        &self.blocks[mode]
    }

    /// Blockwise product `self * rhs`.
    pub fn compose(&self, rhs: &Self) -> Self {
        assert_eq!(self.n_modes(), rhs.n_modes());
        Self {
            blocks: self
                .blocks
                .iter()
                .zip(&rhs.blocks)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn relabeled(&self, perm: &ModePermutation) -> Self {
        let mut blocks = vec![Mat::identity(2); self.n_modes()];
        for (k, b) in self.blocks.iter().enumerate() {
            blocks[perm.image(k)] = b.clone();
        }
        Self { blocks }
    }

    pub fn to_matrix(&self) -> SymplecticMatrix<T> {
        let n = self.n_modes();
        let mut m = Mat::zeros(2 * n, 2 * n);
        for (k, b) in self.blocks.iter().enumerate() {
            m.set_block(2 * k, 2 * k, b);
        }
        SymplecticMatrix::trusted(m)
    }
}

/// Direct-sum embedding, re-checking every block determinant.
pub fn layer_to_matrix<T: Real>(layer: &LocalLayer<T>) -> Result<SymplecticMatrix<T>> {
    let tol = T::lit(T::SYMPLECTIC_TOL);
    for (mode, b) in layer.blocks().iter().enumerate() {
        if !block_det_ok(b, tol) {
            return Err(Error::NonSymplecticBlock {
                mode,
                det: det2(b).to_f64_lossy(),
            });
        }
    }
    Ok(layer.to_matrix())
}

/// Relabeling of modes; `image(k)` is the new index of old mode `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePermutation {
    image: Vec<usize>,
}

impl ModePermutation {
    pub fn identity(n_modes: usize) -> Self {
        Self {
            image: (0..n_modes).collect(),
        }
    }

    pub fn from_images(image: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; image.len()];
        for &i in &image {
            if i >= image.len() || seen[i] {
                return Err(Error::InvalidParameter(format!(
                    "{image:?} is not a permutation"
                )));
            }
            seen[i] = true;
        }
        Ok(Self { image })
    }

    /// Transposition of modes `a` and `b`.
    pub fn transposition(n_modes: usize, a: usize, b: usize) -> Self {
        let mut image: Vec<usize> = (0..n_modes).collect();
        image.swap(a, b);
        Self { image }
    }

    /// Sends `mode` to mode 0, keeping the relative order of the others.
    pub fn to_front(n_modes: usize, mode: usize) -> Self {
        let mut image = vec![0; n_modes];
        let order = std::iter::once(mode).chain((0..n_modes).filter(|&k| k != mode));
        for (new, old) in order.enumerate() {
            image[old] = new;
        }
        Self { image }
    }

    /// Sends `first` to mode 0 and `last` to mode `N - 1`, keeping the
    /// relative order of every other mode.
    pub fn to_ends(n_modes: usize, first: usize, last: usize) -> Self {
        debug_assert!(first != last || n_modes == 1);
        let mut order = vec![first];
        order.extend((0..n_modes).filter(|&k| k != first && k != last));
        if last != first {
            order.push(last);
        }
        let mut image = vec![0; n_modes];
        for (new, &old) in order.iter().enumerate() {
            image[old] = new;
        }
        Self { image }
    }

    pub fn n_modes(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self, k: usize) -> usize {
        self.image[k]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.image.len()];
        for (k, &i) in self.image.iter().enumerate() {
            inv[i] = k;
        }
        Self { image: inv }
    }

    /// `P` with `P x` moving the quadratures of mode `k` to mode `image(k)`.
    pub fn matrix<T: Real>(&self) -> Mat<T> {
        let n = self.image.len();
        let mut p = Mat::zeros(2 * n, 2 * n);
        for (k, &i) in self.image.iter().enumerate() {
            p[(2 * i, 2 * k)] = T::one();
            p[(2 * i + 1, 2 * k + 1)] = T::one();
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorKind {
    Row,
    Column,
}

/// A row or column whose two entries on one mode vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroSubvector {
    pub kind: VectorKind,
    pub index: usize,
    pub mode: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenericityReport {
    pub zero_subvectors: Vec<ZeroSubvector>,
    /// `(k, l)`: the block mapping input mode `l` to output mode `k` vanishes.
    pub vanishing_blocks: Vec<(usize, usize)>,
    pub is_generic: bool,
}

/// Scans every mode-projected row/column subvector and every 2x2 mode
/// block of `s` against `threshold * |s|_max`.
pub fn genericity_report<T: Real>(s: &Mat<T>, threshold: T) -> GenericityReport {
    let n = s.nrows() / 2;
    let cut = threshold * s.max_abs();
    let mut zero_subvectors = Vec::new();
    for i in 0..s.nrows() {
        for m in 0..n {
            if s[(i, 2 * m)].hypot(s[(i, 2 * m + 1)]) <= cut {
                zero_subvectors.push(ZeroSubvector {
                    kind: VectorKind::Row,
                    index: i,
                    mode: m,
                });
            }
        }
    }
    for j in 0..s.ncols() {
        for m in 0..n {
            if s[(2 * m, j)].hypot(s[(2 * m + 1, j)]) <= cut {
                zero_subvectors.push(ZeroSubvector {
                    kind: VectorKind::Column,
                    index: j,
                    mode: m,
                });
            }
        }
    }
    let mut vanishing_blocks = Vec::new();
    for k in 0..n {
        for l in 0..n {
            if s.block(2 * k, 2 * l, 2, 2).max_abs() <= cut {
                vanishing_blocks.push((k, l));
            }
        }
    }
    let is_generic = zero_subvectors.is_empty() && vanishing_blocks.is_empty();
    GenericityReport {
        zero_subvectors,
        vanishing_blocks,
        is_generic,
    }
}

const GENERATION_ATTEMPTS: usize = 32;

/// Random symmetric matrix with independent upper-triangle entries uniform in `[-1, 1]`.
pub(crate) fn random_symmetric<T: Real>(rng: &mut impl Rng, dim: usize) -> Mat<T> {
    let mut h = Mat::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let x = T::lit(rng.gen_range(-1.0..=1.0));
            h[(i, j)] = x;
            h[(j, i)] = x;
        }
    }
    h
}

/// Seeded generic symplectic matrix `exp(Omega H)`.
pub fn random_generic_symplectic<T: Real>(
    n_modes: usize,
    seed: u64,
) -> Result<SymplecticMatrix<T>> {
    if n_modes == 0 {
        return Err(Error::InvalidDimension("need at least one mode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = omega_matrix::<T>(n_modes);
    let tol = T::lit(T::SYMPLECTIC_TOL);
    let threshold = T::lit(T::GENERICITY_TOL);
    for _ in 0..GENERATION_ATTEMPTS {
        let h = random_symmetric::<T>(&mut rng, 2 * n_modes);
        let s = expm(&(&omega * &h));
        if !s.is_finite() {
            continue;
        }
        let Ok(s) = SymplecticMatrix::with_tolerance(s, tol) else {
            continue;
        };
        if genericity_report(s.matrix(), threshold).is_generic {
            return Ok(s);
        }
    }
    Err(Error::GenerationFailure {
        attempts: GENERATION_ATTEMPTS,
    })
}

/// Random single-mode symplectic block `R(-a) Z(r) R(b)` with `|r| <= max_squeeze`.
pub(crate) fn random_local_block<T: Real>(rng: &mut impl Rng, max_squeeze: f64) -> Mat<T> {
    let pi = std::f64::consts::PI;
    let a = T::lit(rng.gen_range(-pi..pi));
    let b = T::lit(rng.gen_range(-pi..pi));
    let r = T::lit(rng.gen_range(-max_squeeze..=max_squeeze));
    let z = squeeze(r).expect("finite");
    &(&rotation(-a) * &z) * &rotation(b)
}

pub(crate) fn random_local_layer<T: Real>(
    rng: &mut impl Rng,
    n_modes: usize,
    max_squeeze: f64,
) -> LocalLayer<T> {
    LocalLayer::trusted(
        (0..n_modes)
            .map(|_| random_local_block(rng, max_squeeze))
            .collect(),
    )
}
