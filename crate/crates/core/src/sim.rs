//! Gaussian states and behavioural checks of synthesized nets.
//!
//! Vacuum covariance is `I / 2` (quadratures `q = (a + a^dag) / sqrt 2`).
//! The checks below only look at means: the dynamics are linear, so the
//! covariance sees exactly the same 2x2 blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{det2, inv2, symmetric_eigen, Mat};
use crate::scalar::Real;
use crate::symplectic::{omega_matrix, SymplecticMatrix};

pub const DEFAULT_TRIALS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState<T> {
    mean: Vec<T>,
    covariance: Mat<T>,
}

impl<T: Real> GaussianState<T> {
    pub fn new(mean: Vec<T>, covariance: Mat<T>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || d % 2 != 0 || covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "mean of length {d} with a {}x{} covariance",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        Ok(Self { mean, covariance })
    }

    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidDimension("need at least one mode".into()));
        }
        let d = 2 * n_modes;
        Ok(Self {
            mean: vec![T::zero(); d],
            covariance: Mat::identity(d).scale(T::half()),
        })
    }

    /// Vacuum fluctuations displaced by `(amp_q, amp_p)` on `mode` (zero-based).
    pub fn coherent(n_modes: usize, mode: usize, amp_q: T, amp_p: T) -> Result<Self> {
        if mode >= n_modes {
            return Err(Error::InvalidParameter(format!(
                "mode {mode} out of range for {n_modes} modes"
            )));
        }
        let mut s = Self::vacuum(n_modes)?;
        s.mean[2 * mode] = amp_q;
        s.mean[2 * mode + 1] = amp_p;
        Ok(s)
    }

    /// Vacuum fluctuations around an arbitrary mean.
    pub fn displaced(mean: Vec<T>) -> Result<Self> {
        if mean.is_empty() || mean.len() % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "mean of odd length {}",
                mean.len()
            )));
        }
        let d = mean.len();
        Self::new(mean, Mat::identity(d).scale(T::half()))
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn covariance(&self) -> &Mat<T> {
        &self.covariance
    }

    /// Mean of one mode's quadratures.
    pub fn mode_mean(&self, mode: usize) -> [T; 2] {
        [self.mean[2 * mode], self.mean[2 * mode + 1]]
    }

    /// `mean -> S mean`, `cov -> S cov S^T`.
    pub fn evolve(&self, s: &SymplecticMatrix<T>) -> Result<Self> {
        if s.dim() != self.mean.len() {
            return Err(Error::InvalidDimension(format!(
                "{}-mode state evolved by a {}-mode map",
                self.n_modes(),
                s.n_modes()
            )));
        }
        let m = s.matrix();
        Ok(Self {
            mean: m.mul_vec(&self.mean),
            covariance: &(m * &self.covariance) * &m.transpose(),
        })
    }

    /// Symplectic eigenvalues, ascending, one per mode.
    ///
    /// Taken from `V^(1/2) Omega^T V Omega V^(1/2)`, which is symmetric and
    /// has every `nu^2` twice.
    pub fn symplectic_eigenvalues(&self) -> Vec<T> {
        let n = self.n_modes();
        let (vals, vecs) = symmetric_eigen(&self.covariance);
        let sqrt_diag: Vec<T> = vals.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
        let root = &(&vecs * &Mat::from_diag(&sqrt_diag)) * &vecs.transpose();
        let omega = omega_matrix::<T>(n);
        let inner = &(&(&omega.transpose() * &self.covariance) * &omega) * &root;
        let mut sym = &root * &inner;
        // symmetrize against rounding
        sym = (&sym + &sym.transpose()).scale(T::half());
        let (nu2, _) = symmetric_eigen(&sym);
        (0..n).map(|k| nu2[2 * k].max(T::zero()).sqrt()).collect()
    }

    /// Symmetric covariance respecting the uncertainty bound `nu >= 1/2`.
    pub fn is_physical(&self, tol: T) -> bool {
        let asym = (&self.covariance - &self.covariance.transpose()).max_abs();
        asym <= tol
            && self
                .symplectic_eigenvalues()
                .iter()
                .all(|&nu| nu >= T::half() - tol)
    }
}

fn random_unit<T: Real>(rng: &mut ChaCha8Rng, len: usize) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| T::lit(x / norm)).collect();
        }
    }
}

fn output_after<T: Real>(net: &SymplecticMatrix<T>, input: Vec<T>) -> Vec<T> {
    let state = GaussianState::displaced(input).expect("even length");
    state.evolve(net).expect("dimensions match").mean().to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingCheck {
    pub passed: bool,
    /// Largest output change across the cut per unit input change,
    /// relative to `|net|_max`.
    pub max_leakage: f64,
}

/// Perturbs the input of `mode` and of the other modes in turn and measures
/// how much crosses over.
pub fn verify_decoupled<T: Real>(
    net: &SymplecticMatrix<T>,
    mode: usize,
    trials: usize,
    seed: u64,
) -> DecouplingCheck {
    verify_decoupled_with(net, mode, trials, seed, T::lit(T::ZERO_TOL))
}

pub fn verify_decoupled_with<T: Real>(
    net: &SymplecticMatrix<T>,
    mode: usize,
    trials: usize,
    seed: u64,
    tol: T,
) -> DecouplingCheck {
    let n = net.n_modes();
    let d = net.dim();
    let scale = net.max_abs().to_f64_lossy().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut leak = 0.0f64;
    let inside = |i: usize| i / 2 == mode;
    for _ in 0..trials.max(1) {
        let base: Vec<T> = random_unit(&mut rng, d);
        let out0 = output_after(net, base.clone());

        let dm: Vec<T> = random_unit(&mut rng, 2);
        let mut x = base.clone();
        x[2 * mode] = x[2 * mode] + dm[0];
        x[2 * mode + 1] = x[2 * mode + 1] + dm[1];
        let out1 = output_after(net, x);
        for i in (0..d).filter(|&i| !inside(i)) {
            leak = leak.max((out1[i] - out0[i]).abs().to_f64_lossy() / scale);
        }

        if n > 1 {
            let dr: Vec<T> = random_unit(&mut rng, d - 2);
            let mut x = base;
            let mut it = dr.into_iter();
            for (i, xi) in x.iter_mut().enumerate() {
                if !inside(i) {
                    *xi = *xi + it.next().expect("sized");
                }
            }
            let out2 = output_after(net, x);
            for i in (0..d).filter(|&i| inside(i)) {
                leak = leak.max((out2[i] - out0[i]).abs().to_f64_lossy() / scale);
            }
        }
    }
    DecouplingCheck {
        passed: leak <= tol.to_f64_lossy(),
        max_leakage: leak,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCheck {
    pub passed: bool,
    /// Fitted `G` with `output(to) = G input(from)`, row-major.
    pub block: [[f64; 2]; 2],
    /// Largest fit residual over trials, relative to `|net|_max`.
    pub residual: f64,
    /// `|det G - 1|`.
    pub det_error: f64,
}

/// Fits the map from the input of `from` to the output of `to` over
/// random full inputs; spectator dependence shows up as residual.
pub fn verify_transfer<T: Real>(
    net: &SymplecticMatrix<T>,
    from: usize,
    to: usize,
    trials: usize,
    seed: u64,
    tol: T,
) -> TransferCheck {
    let d = net.dim();
    let scale = net.max_abs().to_f64_lossy().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trials = trials.max(2);
    let mut xs = Vec::with_capacity(trials);
    let mut ys = Vec::with_capacity(trials);
    for _ in 0..trials {
        let input: Vec<T> = random_unit(&mut rng, d);
        let out = output_after(net, input.clone());
        xs.push([input[2 * from], input[2 * from + 1]]);
        ys.push([out[2 * to], out[2 * to + 1]]);
    }
    // G = (Y X^T) (X X^T)^-1
    let mut xxt = Mat::<T>::zeros(2, 2);
    let mut yxt = Mat::<T>::zeros(2, 2);
    for (x, y) in xs.iter().zip(&ys) {
        for a in 0..2 {
            for b in 0..2 {
                xxt[(a, b)] = xxt[(a, b)] + x[a] * x[b];
                yxt[(a, b)] = yxt[(a, b)] + y[a] * x[b];
            }
        }
    }
    let Some(inv) = inv2(&xxt) else {
        return TransferCheck {
            passed: false,
            block: [[f64::NAN; 2]; 2],
            residual: f64::INFINITY,
            det_error: f64::INFINITY,
        };
    };
    let g = &yxt * &inv;
    let mut residual = 0.0f64;
    for (x, y) in xs.iter().zip(&ys) {
        let fit = g.mul_vec(&x[..]);
        for a in 0..2 {
            residual = residual.max((y[a] - fit[a]).abs().to_f64_lossy() / scale);
        }
    }
    let det_error = (det2(&g) - T::one()).abs().to_f64_lossy();
    let gmax = g.max_abs().to_f64_lossy();
    let t = tol.to_f64_lossy();
    TransferCheck {
        passed: residual <= t && det_error <= t * gmax.max(1.0).powi(2),
        block: [
            [g[(0, 0)].to_f64_lossy(), g[(0, 1)].to_f64_lossy()],
            [g[(1, 0)].to_f64_lossy(), g[(1, 1)].to_f64_lossy()],
        ],
        residual,
        det_error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapCheck {
    pub passed: bool,
    /// `i -> j`.
    pub forward: TransferCheck,
    /// `j -> i`.
    pub backward: TransferCheck,
}

impl SwapCheck {
    pub fn max_residual(&self) -> f64 {
        self.forward.residual.max(self.backward.residual)
    }
}

/// Both directions of [`verify_transfer`] between modes `i` and `j`.
pub fn verify_swap<T: Real>(
    net: &SymplecticMatrix<T>,
    i: usize,
    j: usize,
    trials: usize,
    seed: u64,
) -> SwapCheck {
    verify_swap_with(net, i, j, trials, seed, T::lit(T::ZERO_TOL))
}

pub fn verify_swap_with<T: Real>(
    net: &SymplecticMatrix<T>,
    i: usize,
    j: usize,
    trials: usize,
    seed: u64,
    tol: T,
) -> SwapCheck {
    let forward = verify_transfer(net, i, j, trials, seed, tol);
    let backward = verify_transfer(net, j, i, trials, seed.wrapping_add(1), tol);
    SwapCheck {
        passed: forward.passed && backward.passed,
        forward,
        backward,
    }
}
