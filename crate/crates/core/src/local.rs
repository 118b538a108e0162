//! Single-mode (2x2) symplectic operations: vector alignment and the
//! rotation-squeeze-rotation parametrization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{det2, inv2, singular_values2, Mat};
use crate::scalar::{wrap_angle, Real};
use crate::symplectic::{block_det_ok, rotation, squeeze, LocalLayer};

/// Below this squeezing the two rotations are merged into one.
const PURE_ROTATION_CUTOFF: f64 = 1e-12;

/// `L = R(-theta) Z(r) R(phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOpDecomposition<T> {
    pub theta: T,
    pub r: T,
    pub phi: T,
}

impl<T: Real> LocalOpDecomposition<T> {
    pub fn recompose(&self) -> Mat<T> {
        let z = squeeze(self.r).expect("finite squeezing");
        &(&rotation(-self.theta) * &z) * &rotation(self.phi)
    }

    /// Squeezing cost `|r|`.
    pub fn cost(&self) -> T {
        self.r.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePolicy {
    /// `L a = b` exactly.
    #[default]
    Unit,
    /// `L a = c b` with `c = |a| / |b|`, so `L` is a pure rotation.
    SqueezeFree,
}

fn norm2<T: Real>(v: [T; 2]) -> T {
    v[0].hypot(v[1])
}

/// Finds a 2x2 symplectic `L` and scale `c > 0` with `L a = c b`.
///
/// The block is built as rotate-`a`-onto-the-q-axis, squeeze, rotate onto
/// the direction of `b`.
pub fn align_one<T: Real>(a: [T; 2], b: [T; 2], policy: ScalePolicy) -> Result<(Mat<T>, T)> {
    let na = norm2(a);
    let nb = norm2(b);
    if !(na > T::zero()) || !na.is_finite() {
        return Err(Error::DegenerateVector(format!(
            "source vector {a:?} vanishes"
        )));
    }
    if !(nb > T::zero()) || !nb.is_finite() {
        return Err(Error::DegenerateVector(format!(
            "target vector {b:?} vanishes"
        )));
    }
    let phi = a[1].atan2(a[0]);
    let theta = b[1].atan2(b[0]);
    let (r, c) = match policy {
        ScalePolicy::Unit => ((na / nb).ln(), T::one()),
        ScalePolicy::SqueezeFree => (T::zero(), na / nb),
    };
    let l = LocalOpDecomposition { theta, r, phi }.recompose();
    Ok((l, c))
}

/// Tolerances for [`align_pair_with`].
#[derive(Debug, Clone, Copy)]
pub struct PairOptions<T> {
    /// Relative tolerance on the symplectic-area match.
    pub area_tol: T,
    /// Largest accepted condition number of the source pair.
    pub max_condition: T,
}

impl<T: Real> Default for PairOptions<T> {
    fn default() -> Self {
        Self {
            area_tol: T::lit(1e-8),
            max_condition: T::lit(1e8),
        }
    }
}

/// `L = [b1 b2] [a1 a2]^-1`, the unique linear map with `L a1 = b1` and `L a2 = b2`.
pub fn align_pair<T: Real>(a1: [T; 2], a2: [T; 2], b1: [T; 2], b2: [T; 2]) -> Result<Mat<T>> {
    align_pair_with(a1, a2, b1, b2, PairOptions::default())
}

pub fn align_pair_with<T: Real>(
    a1: [T; 2],
    a2: [T; 2],
    b1: [T; 2],
    b2: [T; 2],
    opts: PairOptions<T>,
) -> Result<Mat<T>> {
    let src = Mat::from_rows(&[vec![a1[0], a2[0]], vec![a1[1], a2[1]]]).unwrap();
    let dst = Mat::from_rows(&[vec![b1[0], b2[0]], vec![b1[1], b2[1]]]).unwrap();
    let src_area = det2(&src);
    let dst_area = det2(&dst);
    let Some(src_inv) = inv2(&src) else {
        return Err(Error::DegeneratePair {
            det: src_area.to_f64_lossy(),
        });
    };
    let (smax, smin) = singular_values2(&src);
    let condition = if smin > T::zero() {
        smax / smin
    } else {
        T::infinity()
    };
    if !(condition <= opts.max_condition) {
        return Err(Error::IllConditioned {
            condition: condition.to_f64_lossy(),
            limit: opts.max_condition.to_f64_lossy(),
        });
    }
    let scale = src_area.abs().max(dst_area.abs());
    if !((src_area - dst_area).abs() <= opts.area_tol * scale) {
        return Err(Error::UnsatisfiableAlignment {
            source_area: src_area.to_f64_lossy(),
            target_area: dst_area.to_f64_lossy(),
        });
    }
    Ok(&dst * &src_inv)
}

/// Rotation-squeeze-rotation parameters of a det-1 block.
///
/// Canonical branch: `r >= 0` and `theta` in `(-pi/2, pi/2]`; a pure
/// rotation is reported as `(theta, 0, 0)` with `theta` in `(-pi, pi]`.
pub fn euler_decompose<T: Real>(l: &Mat<T>) -> Result<LocalOpDecomposition<T>> {
    if l.nrows() != 2 || l.ncols() != 2 {
        return Err(Error::InvalidDimension("expected a 2x2 block".into()));
    }
    if !block_det_ok(l, T::lit(T::SYMPLECTIC_TOL)) {
        return Err(Error::NonSymplecticBlock {
            mode: 0,
            det: det2(l).to_f64_lossy(),
        });
    }
    // l = Rot(beta) diag(sx, sy) Rot(gamma), Rot(x) = [[cos, -sin], [sin, cos]].
    let half = T::half();
    let e = (l[(0, 0)] + l[(1, 1)]) * half;
    let f = (l[(0, 0)] - l[(1, 1)]) * half;
    let g = (l[(1, 0)] + l[(0, 1)]) * half;
    let h = (l[(1, 0)] - l[(0, 1)]) * half;
    let q = e.hypot(h);
    let rr = f.hypot(g);
    let sx = q + rr;
    let a1 = g.atan2(f);
    let a2 = h.atan2(e);
    let beta = (a2 + a1) * half;
    let gamma = (a2 - a1) * half;

    // diag(sx, sy) = Rot(pi/2) Z(ln sx) Rot(-pi/2), and R(x) = Rot(-x).
    let quarter = T::pi() * half;
    let r = sx.ln();
    let mut theta = beta + quarter;
    let mut phi = quarter - gamma;

    if r <= T::lit(PURE_ROTATION_CUTOFF) {
        return Ok(LocalOpDecomposition {
            theta: wrap_angle(theta - phi),
            r: T::zero(),
            phi: T::zero(),
        });
    }
    theta = wrap_angle(theta);
    if theta <= -quarter {
        theta = theta + T::pi();
        phi = phi + T::pi();
    } else if theta > quarter {
        theta = theta - T::pi();
        phi = phi - T::pi();
    }
    Ok(LocalOpDecomposition {
        theta,
        r,
        phi: wrap_angle(phi),
    })
}

/// Per-mode squeezing cost `|r|` of a layer.
pub fn squeezing_cost<T: Real>(layer: &LocalLayer<T>) -> Result<Vec<T>> {
    layer
        .blocks()
        .iter()
        .enumerate()
        .map(|(mode, b)| {
            euler_decompose(b).map(|d| d.cost()).map_err(|e| match e {
                Error::NonSymplecticBlock { det, .. } => Error::NonSymplecticBlock { mode, det },
                other => other,
            })
        })
        .collect()
}
