//! The two sandwich moves every builder is made of.
//!
//! A sandwich `X = P L Q` places one local layer `L` between two symplectic
//! factors. With `c_b` the columns of `Q` and `r_a` the rows of `P`:
//!
//! * the *q-step* solves `L c_(2j) = lam Omega r_(2k)^T` blockwise, which
//!   routes `q` of input mode `j` onto `p` of output mode `k` only;
//! * the *p-step* assumes `c_(2j)` and `Omega r_(2k)^T` already live on a
//!   single pivot mode and additionally sends `c_(2j+1)` to
//!   `A Omega r_(2k)^T + mu Omega r_(2k+1)^T`, so that input mode `j` and
//!   output mode `k` talk exclusively to each other (`lam mu = 1`).
//!
//! Each move is certified on the resulting product. The closed-form layer
//! is tried first; if its product misses the pattern, the layer is rebuilt
//! with the geometric solver.

use serde::{Deserialize, Serialize};

use super::closed_form::{index_formula_block, passive_pivot};
use super::pattern::{check_pattern, StructurePattern};
use crate::error::{Error, Result};
use crate::local::{align_one, align_pair_with, PairOptions, ScalePolicy};
use crate::matrix::{det2, inv2, solve_psd, Mat};
use crate::scalar::Real;
use crate::symplectic::{genericity_report, rotation, LocalLayer, SymplecticMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerStrategy {
    /// Closed form, then the constructive solver if certification fails.
    #[default]
    Auto,
    ClosedForm,
    Constructive,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions<T> {
    pub strategy: LayerStrategy,
    /// Mode whose blocks must all be pure rotations.
    pub exempt_mode: Option<usize>,
    /// Relative tolerance for structural zeros and pinned entries.
    pub zero_tol: T,
    /// Relative threshold for a vanishing subvector.
    pub genericity_tol: T,
    pub pair: PairOptions<T>,
    /// Spend the leftover shear freedom of each constrained block on keeping
    /// the sandwich small. The value weighs the size of the blocks
    /// themselves against the product; `None` keeps the raw solver blocks.
    pub balance: Option<T>,
    /// Try the other entries of [`BALANCE_CANDIDATES`] when the first
    /// construction is inaccurate, keeping the best certified one.
    pub search: bool,
}

/// Block weights tried in order by builders with `search` on.
pub const BALANCE_CANDIDATES: [Option<f64>; 4] = [Some(0.0), Some(1e-2), Some(1.0), None];

impl<T: Real> Default for BuildOptions<T> {
    fn default() -> Self {
        Self {
            strategy: LayerStrategy::Auto,
            exempt_mode: None,
            zero_tol: T::lit(T::ZERO_TOL),
            genericity_tol: T::lit(T::GENERICITY_TOL),
            pair: PairOptions::default(),
            balance: Some(T::zero()),
            search: true,
        }
    }
}

impl<T: Real> BuildOptions<T> {
    pub fn with_strategy(mut self, strategy: LayerStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_exempt_mode(mut self, mode: Option<usize>) -> Self {
        self.exempt_mode = mode;
        self
    }

    pub fn with_zero_tol(mut self, tol: T) -> Self {
        self.zero_tol = tol;
        self
    }

    pub fn with_balance(mut self, weight: Option<T>) -> Self {
        self.balance = weight;
        self
    }

    pub fn with_search(mut self, on: bool) -> Self {
        self.search = on;
        self
    }
}

/// Whether a step's overall scale is pinned to one or free to choose.
///
/// Only the last step of a builder shows its scale in the net; earlier
/// steps may pick whatever keeps the layers least squeezed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Scale {
    Unit,
    Free,
}

/// Scale whose log is the mean of the log ratios, i.e. the one minimizing
/// the summed squared squeezing of unit-policy blocks.
fn geometric_mean<T: Real>(ratios: impl Iterator<Item = T>) -> T {
    let (sum, count) = ratios.fold((T::zero(), 0usize), |(s, c), r| (s + r.ln(), c + 1));
    if count == 0 {
        T::one()
    } else {
        (sum / T::lit(count as f64)).exp()
    }
}

/// One solved sandwich.
#[derive(Debug, Clone)]
pub(crate) struct Sandwich<T> {
    pub layer: LocalLayer<T>,
    pub product: SymplecticMatrix<T>,
}

fn norm<T: Real>(v: [T; 2]) -> T {
    v[0].hypot(v[1])
}

fn scaled<T: Real>(v: [T; 2], s: T) -> [T; 2] {
    [v[0] * s, v[1] * s]
}

fn col_sub<T: Real>(m: &Mat<T>, j: usize, mode: usize) -> [T; 2] {
    [m[(2 * mode, j)], m[(2 * mode + 1, j)]]
}

fn row_sub<T: Real>(m: &Mat<T>, i: usize, mode: usize) -> [T; 2] {
    [m[(i, 2 * mode)], m[(i, 2 * mode + 1)]]
}

/// `w r` for a row subvector `r`.
fn dual<T: Real>(r: [T; 2]) -> [T; 2] {
    [r[1], -r[0]]
}

/// Source/target subvectors of one mode, or `None` when both vanish.
fn classify<T: Real>(
    src: [T; 2],
    dst: [T; 2],
    src_cut: T,
    dst_cut: T,
    mode: usize,
    left: &SymplecticMatrix<T>,
    right: &SymplecticMatrix<T>,
    threshold: T,
) -> Result<Option<()>> {
    let src_zero = norm(src) <= src_cut;
    let dst_zero = norm(dst) <= dst_cut;
    match (src_zero, dst_zero) {
        (true, true) => Ok(None),
        (false, false) => Ok(Some(())),
        (true, false) => Err(Error::EdgeCase {
            context: format!("column subvector on mode {mode} vanishes but its target does not"),
            report: Box::new(genericity_report(right.matrix(), threshold)),
        }),
        (false, true) => Err(Error::EdgeCase {
            context: format!(
                "row subvector on mode {mode} vanishes but the column it must meet does not"
            ),
            report: Box::new(genericity_report(left.matrix(), threshold)),
        }),
    }
}

/// Shears every anchored block along its fixed vector.
///
/// For a block `L` with a pinned image `L a`, `L (I + t a (w a)^T)` keeps
/// both `L a` and `det L`. The sandwich is affine in the `t`s, so the
/// Frobenius-smallest one, plus `weight` times a penalty on the blocks, is
/// a small least-squares problem. Anchors are chosen by the caller so that
/// every pattern row and column stays put.
fn balance<T: Real>(
    left: &SymplecticMatrix<T>,
    right: &SymplecticMatrix<T>,
    layer: &mut LocalLayer<T>,
    anchors: &[(usize, [T; 2])],
    weight: T,
) {
    if anchors.is_empty() {
        return;
    }
    let (lm, rm) = (left.matrix(), right.matrix());
    let d = lm.nrows();
    let base = left.compose(&layer.to_matrix()).compose(right);
    let mut us = Vec::with_capacity(anchors.len());
    let mut vs = Vec::with_capacity(anchors.len());
    let mut dirs = Vec::with_capacity(anchors.len());
    for &(m, a) in anchors {
        let na = norm(a);
        let a = scaled(a, na.recip());
        let img = layer.block(m).mul_vec(&a);
        let img = [img[0], img[1]];
        let wa = [a[1], -a[0]];
        let u: Vec<T> = (0..d)
            .map(|i| lm[(i, 2 * m)] * img[0] + lm[(i, 2 * m + 1)] * img[1])
            .collect();
        let v: Vec<T> = (0..d)
            .map(|c| rm[(2 * m, c)] * wa[0] + rm[(2 * m + 1, c)] * wa[1])
            .collect();
        us.push(u);
        vs.push(v);
        dirs.push((img, wa));
    }
    let dot = |x: &[T], y: &[T]| x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    let k = anchors.len();
    let mut g = Mat::zeros(k, k);
    let mut h = vec![T::zero(); k];
    for p in 0..k {
        for q in 0..k {
            g[(p, q)] = dot(&us[p], &us[q]) * dot(&vs[p], &vs[q]);
        }
        let nv = base.matrix().mul_vec(&vs[p]);
        h[p] = -dot(&us[p], &nv);
    }
    // Penalize the blocks themselves, weighted by the factors they sit
    // between; a small product built from a huge block is still inaccurate.
    for (p, &(m, _)) in anchors.iter().enumerate() {
        let lw = (0..d).fold(T::zero(), |acc, i| {
            acc + lm[(i, 2 * m)].powi(2) + lm[(i, 2 * m + 1)].powi(2)
        });
        let rw = (0..d).fold(T::zero(), |acc, c| {
            acc + rm[(2 * m, c)].powi(2) + rm[(2 * m + 1, c)].powi(2)
        });
        let (img, wa) = dirs[p];
        let l0wa = layer.block(m).mul_vec(&wa);
        let lw = lw * weight;
        g[(p, p)] = g[(p, p)] + lw * rw * (img[0] * img[0] + img[1] * img[1]);
        h[p] = h[p] - lw * rw * (img[0] * l0wa[0] + img[1] * l0wa[1]);
    }
    let t = solve_psd(&g, &h);
    let mut blocks = layer.blocks().to_vec();
    for (p, &(m, _)) in anchors.iter().enumerate() {
        if !t[p].is_finite() || t[p] == T::zero() {
            continue;
        }
        let (img, wa) = dirs[p];
        let b = &mut blocks[m];
        for r in 0..2 {
            for c in 0..2 {
                b[(r, c)] = b[(r, c)] + t[p] * img[r] * wa[c];
            }
        }
    }
    *layer = LocalLayer::trusted(blocks);
}

/// Block for a mode the sandwich does not need to touch.
///
/// If the mode is decoupled in both factors, the block can undo them so the
/// product sees the identity there (a rotation only, for the exempt mode).
/// Otherwise it is left alone.
fn spectator_block<T: Real>(
    left: &SymplecticMatrix<T>,
    right: &SymplecticMatrix<T>,
    m: usize,
    rotation_only: bool,
    tol: T,
) -> Mat<T> {
    let n = left.n_modes();
    let isolated = |f: &SymplecticMatrix<T>| {
        let cut = tol * f.max_abs();
        (0..n)
            .filter(|&o| o != m)
            .all(|o| f.mode_block(m, o).max_abs() <= cut && f.mode_block(o, m).max_abs() <= cut)
    };
    if !isolated(left) || !isolated(right) {
        return Mat::identity(2);
    }
    let (Some(li), Some(ri)) = (inv2(&left.mode_block(m, m)), inv2(&right.mode_block(m, m))) else {
        return Mat::identity(2);
    };
    let b = &li * &ri;
    if rotation_only {
        let e = (b[(0, 0)] + b[(1, 1)]) * T::half();
        let h = (b[(1, 0)] - b[(0, 1)]) * T::half();
        let q = e.hypot(h);
        if !(q > T::zero()) {
            return Mat::identity(2);
        }
        let (c, s) = (e / q, h / q);
        return Mat::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
    }
    let d = det2(&b);
    if !(d > T::zero()) || !d.is_finite() {
        return Mat::identity(2);
    }
    b.scale(d.sqrt().recip())
}

fn certify<T: Real>(
    left: &SymplecticMatrix<T>,
    layer: &LocalLayer<T>,
    right: &SymplecticMatrix<T>,
    pattern: &StructurePattern,
    tol: T,
) -> (SymplecticMatrix<T>, f64, bool) {
    let product = left.compose(&layer.to_matrix()).compose(right);
    let report = check_pattern(product.matrix(), pattern, tol);
    (product, report.max_violation, report.passed())
}

/// Runs the requested strategy, falling back as configured.
fn solve<T: Real>(
    left: &SymplecticMatrix<T>,
    right: &SymplecticMatrix<T>,
    pattern: &StructurePattern,
    opts: &BuildOptions<T>,
    anchors: &[(usize, [T; 2])],
    mut build: impl FnMut(LayerStrategy) -> Result<LocalLayer<T>>,
) -> Result<Sandwich<T>> {
    let order: &[LayerStrategy] = match opts.strategy {
        LayerStrategy::Auto => &[LayerStrategy::ClosedForm, LayerStrategy::Constructive],
        LayerStrategy::ClosedForm => &[LayerStrategy::ClosedForm],
        LayerStrategy::Constructive => &[LayerStrategy::Constructive],
    };
    let mut last = None;
    for (attempt, &strategy) in order.iter().enumerate() {
        let mut layer = match build(strategy) {
            Ok(l) => l,
            Err(e) if attempt + 1 < order.len() => {
                last = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Some(weight) = opts.balance {
            balance(left, right, &mut layer, anchors, weight);
        }
        let (product, worst, ok) = certify(left, &layer, right, pattern, opts.zero_tol);
        if ok {
            return Ok(Sandwich { layer, product });
        }
        last = Some(Error::CertificationFailed(format!(
            "{} step off by {worst:e} with {strategy:?} layer",
            pattern.name()
        )));
    }
    Err(last.expect("at least one strategy"))
}

/// `left L right` with `q` of input mode `j` routed to output mode `k`.
pub(crate) fn q_step<T: Real>(
    left: &SymplecticMatrix<T>,
    right: &SymplecticMatrix<T>,
    j: usize,
    k: usize,
    scale: Scale,
    opts: &BuildOptions<T>,
) -> Result<Sandwich<T>> {
    let n = left.n_modes();
    let free = scale == Scale::Free && opts.strategy != LayerStrategy::ClosedForm;
    let th = opts.genericity_tol;
    let src_cut = th * right.max_abs();
    let dst_cut = th * left.max_abs();

    let mut active = vec![false; n];
    for (m, slot) in active.iter_mut().enumerate() {
        let a = col_sub(right.matrix(), 2 * j, m);
        let r = row_sub(left.matrix(), 2 * k, m);
        *slot = classify(a, r, src_cut, dst_cut, m, left, right, th)?.is_some();
    }

    let ratio =
        |m: usize| norm(col_sub(right.matrix(), 2 * j, m)) / norm(row_sub(left.matrix(), 2 * k, m));
    let lam = match opts.exempt_mode.filter(|&e| active[e]) {
        Some(e) => ratio(e),
        None if free => geometric_mean((0..n).filter(|&m| active[m]).map(ratio)),
        None => T::one(),
    };

    let mut pattern = StructurePattern::transducer_star(n, j, k);
    if opts.exempt_mode.is_some() || free {
        pattern = pattern.scale_free();
    }

    let anchors: Vec<_> = (0..n)
        .filter(|&m| active[m] && opts.exempt_mode != Some(m))
        .map(|m| (m, col_sub(right.matrix(), 2 * j, m)))
        .collect();

    solve(left, right, &pattern, opts, &anchors, |strategy| {
        let mut blocks = Vec::with_capacity(n);
        for m in 0..n {
            if !active[m] {
                blocks.push(spectator_block(
                    left,
                    right,
                    m,
                    opts.exempt_mode == Some(m),
                    opts.zero_tol,
                ));
                continue;
            }
            let a = col_sub(right.matrix(), 2 * j, m);
            let r = row_sub(left.matrix(), 2 * k, m);
            let block = match strategy {
                LayerStrategy::ClosedForm => index_formula_block(scaled(r, lam), a),
                _ if opts.exempt_mode == Some(m) => {
                    align_one(a, dual(r), ScalePolicy::SqueezeFree)?.0
                }
                _ => align_one(a, scaled(dual(r), lam), ScalePolicy::Unit)?.0,
            };
            blocks.push(block);
        }
        Ok(LocalLayer::trusted(blocks))
    })
}

/// `left L right` making input mode `j` and output mode `k` exclusive
/// partners. Requires column `2j` of `right` and row `2k` of `left` to be
/// supported on `pivot` only, which is what a preceding q-step leaves.
pub(crate) fn p_step<T: Real>(
    left: &SymplecticMatrix<T>,
    right: &SymplecticMatrix<T>,
    j: usize,
    k: usize,
    pivot: usize,
    scale: Scale,
    opts: &BuildOptions<T>,
) -> Result<Sandwich<T>> {
    let n = left.n_modes();
    let free = scale == Scale::Free && opts.strategy != LayerStrategy::ClosedForm;
    let (lm, rm) = (left.matrix(), right.matrix());
    let th = opts.genericity_tol;
    let src_cut = th * right.max_abs();
    let dst_cut = th * left.max_abs();

    for m in (0..n).filter(|&m| m != pivot) {
        let c1 = norm(col_sub(rm, 2 * j, m));
        let r1 = norm(row_sub(lm, 2 * k, m));
        if c1 > opts.zero_tol * right.max_abs() || r1 > opts.zero_tol * left.max_abs() {
            return Err(Error::CertificationFailed(format!(
                "p-step needs column {} and row {} localized on mode {pivot}; mode {m} carries weight",
                2 * j,
                2 * k
            )));
        }
    }

    let c1 = col_sub(rm, 2 * j, pivot);
    let c2 = col_sub(rm, 2 * j + 1, pivot);
    let w1 = dual(row_sub(lm, 2 * k, pivot));
    let w2 = dual(row_sub(lm, 2 * k + 1, pivot));
    if !(norm(c1) > src_cut) || !(norm(w1) > dst_cut) {
        return Err(Error::EdgeCase {
            context: format!("pivot mode {pivot} carries no weight"),
            report: Box::new(genericity_report(rm, th)),
        });
    }

    let mut active = vec![false; n];
    for (m, slot) in active.iter_mut().enumerate() {
        if m != pivot {
            let a = col_sub(rm, 2 * j + 1, m);
            let r = row_sub(lm, 2 * k + 1, m);
            *slot = classify(a, r, src_cut, dst_cut, m, left, right, th)?.is_some();
        }
    }

    let (lam, mu) = match opts.exempt_mode {
        Some(e) if e == pivot => {
            let lam = norm(c1) / norm(w1);
            (lam, lam.recip())
        }
        Some(e) if active[e] => {
            let mu = norm(col_sub(rm, 2 * j + 1, e)) / norm(row_sub(lm, 2 * k + 1, e));
            (mu.recip(), mu)
        }
        _ if free => {
            let mu =
                geometric_mean(
                    std::iter::once(norm(w1) / norm(c1)).chain((0..n).filter(|&m| active[m]).map(
                        |m| norm(col_sub(rm, 2 * j + 1, m)) / norm(row_sub(lm, 2 * k + 1, m)),
                    )),
                );
            (mu.recip(), mu)
        }
        _ => (T::one(), T::one()),
    };

    // Coefficient of `w1` in the image of `c2` under the rotation taking
    // the direction of `c1` onto that of `w1`. With matching norms this
    // makes the pivot block a pure rotation.
    let turn = w1[1].atan2(w1[0]) - c1[1].atan2(c1[0]);
    let rc2 = rotation(-turn).mul_vec(&c2);
    let area = w1[0] * w2[1] - w1[1] * w2[0];
    let coeff = (rc2[0] * w2[1] - rc2[1] * w2[0]) / area;

    let mut pattern = StructurePattern::transducer(n, j, k);
    if opts.exempt_mode.is_some() || free {
        pattern = pattern.scale_free();
    }

    // The pivot shear only moves the free entry (2k+1, 2j+1).
    let anchors: Vec<_> = std::iter::once(pivot)
        .chain((0..n).filter(|&m| active[m]))
        .filter(|&m| opts.exempt_mode != Some(m))
        .map(|m| {
            (
                m,
                if m == pivot {
                    c1
                } else {
                    col_sub(rm, 2 * j + 1, m)
                },
            )
        })
        .collect();

    solve(left, right, &pattern, opts, &anchors, |strategy| {
        let mut blocks = Vec::with_capacity(n);
        for m in 0..n {
            if m == pivot {
                let block = match strategy {
                    LayerStrategy::ClosedForm => passive_pivot(),
                    _ => {
                        let t1 = scaled(w1, lam);
                        let t2 = [coeff * w1[0] + mu * w2[0], coeff * w1[1] + mu * w2[1]];
                        align_pair_with(c1, c2, t1, t2, opts.pair)?
                    }
                };
                blocks.push(block);
                continue;
            }
            if !active[m] {
                blocks.push(spectator_block(
                    left,
                    right,
                    m,
                    opts.exempt_mode == Some(m),
                    opts.zero_tol,
                ));
                continue;
            }
            let a = col_sub(rm, 2 * j + 1, m);
            let r = row_sub(lm, 2 * k + 1, m);
            let block = match strategy {
                LayerStrategy::ClosedForm => index_formula_block(scaled(r, mu), a),
                _ if opts.exempt_mode == Some(m) => {
                    align_one(a, dual(r), ScalePolicy::SqueezeFree)?.0
                }
                _ => align_one(a, scaled(dual(r), mu), ScalePolicy::Unit)?.0,
            };
            blocks.push(block);
        }
        Ok(LocalLayer::trusted(blocks))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::random_generic_symplectic;

    fn opts(strategy: LayerStrategy) -> BuildOptions<f64> {
        BuildOptions::default().with_strategy(strategy)
    }

    #[test]
    fn q_step_decouples_q_quadrature() {
        let s = random_generic_symplectic::<f64>(2, 3).unwrap();
        for strategy in [LayerStrategy::ClosedForm, LayerStrategy::Constructive] {
            let step = q_step(&s, &s, 0, 0, Scale::Unit, &opts(strategy)).unwrap();
            let x = step.product.matrix();
            assert!((x[(0, 1)] - 1.0).abs() < 1e-9);
            assert!((x[(1, 0)] + 1.0).abs() < 1e-9);
            for i in [0, 2, 3] {
                assert!(x[(i, 0)].abs() < 1e-9 && x[(0, i)].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn closed_form_and_solver_layers_coincide() {
        let s = random_generic_symplectic::<f64>(3, 11).unwrap();
        let a = q_step(&s, &s, 0, 2, Scale::Unit, &opts(LayerStrategy::ClosedForm)).unwrap();
        let b = q_step(
            &s,
            &s,
            0,
            2,
            Scale::Unit,
            &opts(LayerStrategy::Constructive),
        )
        .unwrap();
        for m in 0..3 {
            assert!(a.layer.block(m).max_abs_diff(b.layer.block(m)) < 1e-9);
        }
    }

    #[test]
    fn p_step_after_q_step_decouples_mode() {
        let s = random_generic_symplectic::<f64>(3, 5).unwrap();
        let q = q_step(&s, &s, 0, 0, Scale::Unit, &opts(LayerStrategy::Auto)).unwrap();
        let p = p_step(
            &q.product,
            &q.product,
            0,
            0,
            0,
            Scale::Unit,
            &opts(LayerStrategy::ClosedForm),
        )
        .unwrap();
        let pattern = StructurePattern::decoupled(3, 0);
        assert!(check_pattern(p.product.matrix(), &pattern, 1e-8).passed());
    }

    #[test]
    fn exempt_mode_blocks_are_rotations() {
        let s = random_generic_symplectic::<f64>(3, 8).unwrap();
        for e in 0..3 {
            let o = opts(LayerStrategy::Auto).with_exempt_mode(Some(e));
            let q = q_step(&s, &s, 0, 0, Scale::Unit, &o).unwrap();
            let p = p_step(&q.product, &q.product, 0, 0, 0, Scale::Unit, &o).unwrap();
            for layer in [&q.layer, &p.layer] {
                let b = layer.block(e);
                assert!((&b.transpose() * b).max_abs_diff(&Mat::identity(2)) < 1e-10);
            }
        }
    }

    #[test]
    fn p_step_rejects_unlocalized_pivot() {
        let s = random_generic_symplectic::<f64>(2, 1).unwrap();
        assert!(matches!(
            p_step(&s, &s, 0, 0, 0, Scale::Unit, &opts(LayerStrategy::Auto)),
            Err(Error::CertificationFailed(_))
        ));
    }
}
