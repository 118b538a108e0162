//! Explicit index formulas for the single-mode layers.
//!
//! For one mode, let `c = (c_q, c_p)` be the projection of the column that
//! has to be moved and `r = (r_q, r_p)` the projection of the row whose
//! symplectic dual is the target, so the block must send `c` to `w r` with
//! `w = [[0, 1], [-1, 0]]`. With `i_hi, i_lo = (q, p)` for `i = 1` and
//! `(p, q)` for `i = 2`:
//!
//! ```text
//! L_ij = (-1)^(i+1) r_(i_lo) c_(j_hi) / |c|^2  -  (-1)^(j+1) r_(i_hi) c_(j_lo) / |r|^2
//! ```
//!
//! The first term sends `c` to `w r`; the second is orthogonal to `c` and
//! fixes the determinant to one. This equals `R(-theta) Z(r) R(phi)` from
//! [`crate::local::align_one`] in exact arithmetic, but is evaluated from
//! the matrix entries directly.

use crate::matrix::Mat;
use crate::scalar::Real;

/// `(hi, lo)` component indices for formula index `i` (1-based).
fn hi_lo(i: usize) -> (usize, usize) {
    if i == 1 {
        (0, 1)
    } else {
        (1, 0)
    }
}

/// Block sending `c` to `w r`. Callers guarantee both vectors are nonzero.
pub(crate) fn index_formula_block<T: Real>(r: [T; 2], c: [T; 2]) -> Mat<T> {
    let c_norm2 = c[0] * c[0] + c[1] * c[1];
    let r_norm2 = r[0] * r[0] + r[1] * r[1];
    let sign = |k: usize| if k % 2 == 1 { T::one() } else { -T::one() };
    Mat::from_fn(2, 2, |i0, j0| {
        let (i, j) = (i0 + 1, j0 + 1);
        let (i_hi, i_lo) = hi_lo(i);
        let (j_hi, j_lo) = hi_lo(j);
        sign(i) * r[i_lo] * c[j_hi] / c_norm2 - sign(j) * r[i_hi] * c[j_lo] / r_norm2
    })
}

/// The passive pivot block `-w = R(-pi/2)`.
pub(crate) fn passive_pivot<T: Real>() -> Mat<T> {
    Mat::from_rows(&[vec![T::zero(), -T::one()], vec![T::one(), T::zero()]]).unwrap()
}
