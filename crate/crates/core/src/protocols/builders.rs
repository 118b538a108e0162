//! Decoupling, transduction and swap sequences built from sandwich moves.
//!
//! Mode indices are zero-based. Every builder relabels the coupler so the
//! modes it works on sit at the ends, solves there, and maps the layers
//! back; the returned steps always refer to the coupler as given.

use serde::{Deserialize, Serialize};

use super::pattern::StructurePattern;
use super::sandwich::{p_step, q_step, BuildOptions, Scale, BALANCE_CANDIDATES};
use super::sequence::{Chain, ProtocolSequence, Step};
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::scalar::Real;
use crate::symplectic::{genericity_report, LocalLayer, ModePermutation, SymplecticMatrix};

fn check_mode(n: usize, mode: usize, what: &str) -> Result<()> {
    if mode >= n {
        return Err(Error::InvalidParameter(format!(
            "{what} {mode} out of range for {n} modes"
        )));
    }
    Ok(())
}

/// True when every block row and block column carries exactly one
/// non-vanishing 2x2 block.
fn is_permutation_like<T: Real>(s: &SymplecticMatrix<T>, threshold: T) -> bool {
    let n = s.n_modes();
    let cut = threshold * s.max_abs();
    let live = |k: usize, l: usize| s.mode_block(k, l).max_abs() > cut;
    (0..n).all(|k| (0..n).filter(|&l| live(k, l)).count() == 1)
        && (0..n).all(|l| (0..n).filter(|&k| live(k, l)).count() == 1)
}

fn require_generic<T: Real>(
    s: &SymplecticMatrix<T>,
    opts: &BuildOptions<T>,
    routing: bool,
) -> Result<()> {
    let report = genericity_report(s.matrix(), opts.genericity_tol);
    if report.is_generic {
        return Ok(());
    }
    if routing && is_permutation_like(s, opts.genericity_tol) {
        return Err(Error::UnsatisfiableTransduction(
            "coupler only permutes modes up to local operations".into(),
        ));
    }
    Err(Error::EdgeCase {
        context: "coupler is not generic".into(),
        report: Box::new(report),
    })
}

/// Options with the exempt mode moved into the relabeled frame.
fn framed<T: Real>(opts: &BuildOptions<T>, perm: &ModePermutation) -> Result<BuildOptions<T>> {
    if let Some(e) = opts.exempt_mode {
        check_mode(perm.n_modes(), e, "exempt mode")?;
    }
    Ok(opts.with_exempt_mode(opts.exempt_mode.map(|e| perm.image(e))))
}

fn pattern_for<T: Real>(pattern: StructurePattern, opts: &BuildOptions<T>) -> StructurePattern {
    if opts.exempt_mode.is_some() {
        pattern.scale_free()
    } else {
        pattern
    }
}

/// Relaxed patterns do not pin the scale of the last step, so it may be
/// chosen freely as well.
fn final_variants<T: Real>(opts: &BuildOptions<T>) -> usize {
    if opts.exempt_mode.is_some() {
        2
    } else {
        1
    }
}

fn final_scale(variant: usize) -> Scale {
    if variant == 0 {
        Scale::Unit
    } else {
        Scale::Free
    }
}

/// The four-copy decoupling `S' L S'` with `S' = S L^q S`, in the current frame.
struct Decoupled<T> {
    half: Chain<T>,
    full: Chain<T>,
}

fn decoupled_chain<T: Real>(
    s: &SymplecticMatrix<T>,
    final_scale: Scale,
    opts: &BuildOptions<T>,
) -> Result<Decoupled<T>> {
    let c = Chain::coupler(s);
    let q = q_step(s, s, 0, 0, Scale::Free, opts)?;
    let half = Chain::sandwich(&c, q.layer, &c, q.product);
    let p = p_step(&half.matrix, &half.matrix, 0, 0, 0, final_scale, opts)?;
    let full = Chain::sandwich(&half, p.layer, &half, p.product);
    Ok(Decoupled { half, full })
}

/// Four-copy transducer from mode 0 to mode `N - 1`, reusing the q-decoupled half.
fn transducer_chain<T: Real>(
    s: &SymplecticMatrix<T>,
    half: &Chain<T>,
    final_scale: Scale,
    opts: &BuildOptions<T>,
) -> Result<Chain<T>> {
    let last = s.n_modes() - 1;
    let c = Chain::coupler(s);
    let star = q_step(s, s, 0, last, Scale::Free, opts)?;
    let star = Chain::sandwich(&c, star.layer, &c, star.product);
    let p = p_step(&star.matrix, &half.matrix, 0, last, 0, final_scale, opts)?;
    Ok(Chain::sandwich(&star, p.layer, half, p.product))
}

/// Single q-step on a two-mode coupler: returns `S' = S L S` and `L`.
pub fn decouple_q_two_mode<T: Real>(
    s: &SymplecticMatrix<T>,
) -> Result<(SymplecticMatrix<T>, LocalLayer<T>)> {
    if s.n_modes() != 2 {
        return Err(Error::InvalidDimension(format!(
            "expected 2 modes, got {}",
            s.n_modes()
        )));
    }
    let opts = BuildOptions::default();
    require_generic(s, &opts, false)?;
    let q = q_step(s, s, 0, 0, Scale::Unit, &opts)?;
    Ok((q.product, q.layer))
}

/// Two copies decoupling the `q` quadrature of `mode`.
pub fn decouple_q<T: Real>(
    s: &SymplecticMatrix<T>,
    mode: usize,
    opts: &BuildOptions<T>,
) -> Result<ProtocolSequence<T>> {
    let n = s.n_modes();
    check_mode(n, mode, "mode")?;
    require_generic(s, opts, false)?;
    let perm = ModePermutation::to_front(n, mode);
    let sp = s.relabeled(&perm);
    let pattern = pattern_for(StructurePattern::q_decoupled(n, mode), opts);
    searched_over(opts, final_variants(opts), |o, v| {
        let c = Chain::coupler(&sp);
        let q = q_step(&sp, &sp, 0, 0, final_scale(v), &framed(o, &perm)?)?;
        let chain = Chain::sandwich(&c, q.layer, &c, q.product);
        ProtocolSequence::assemble(s, chain.unrelabeled(&perm), pattern.clone(), o.zero_tol)
    })
}

/// Errors worth another attempt with a different balance weight.
fn numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::CertificationFailed(_)
            | Error::IllConditioned { .. }
            | Error::UnsatisfiableAlignment { .. }
            | Error::DegeneratePair { .. }
            | Error::DegenerateVector(_)
            | Error::NonSymplecticBlock { .. }
    )
}

/// Runs `build` for each of `variants` equivalent constructions with the
/// requested balance weight and then the other candidate weights, stopping
/// at the first result within tolerance. Otherwise returns the most
/// accurate certified sequence.
fn searched_over<T: Real>(
    opts: &BuildOptions<T>,
    variants: usize,
    build: impl Fn(&BuildOptions<T>, usize) -> Result<ProtocolSequence<T>>,
) -> Result<ProtocolSequence<T>> {
    if !opts.search {
        return build(opts, 0);
    }
    let mut weights = vec![opts.balance];
    for w in BALANCE_CANDIDATES.iter().map(|w| w.map(T::lit)) {
        if !weights.contains(&w) {
            weights.push(w);
        }
    }
    let zero_tol = opts.zero_tol.to_f64_lossy();
    let sym_tol = T::SYMPLECTIC_TOL;
    let mut best: Option<(f64, ProtocolSequence<T>)> = None;
    let mut first_err = None;
    for variant in 0..variants {
        for &w in &weights {
            match build(&opts.with_balance(w).with_search(false), variant) {
                Ok(seq) => {
                    let score = (seq.report().max_violation / zero_tol)
                        .max(seq.net().residual().to_f64_lossy() / sym_tol);
                    if score <= 1.0 {
                        return Ok(seq);
                    }
                    if best.as_ref().map_or(true, |(b, _)| score < *b) {
                        best = Some((score, seq));
                    }
                }
                Err(e) if numerical(&e) => {
                    first_err.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
    }
    match (best, first_err) {
        (Some((_, seq)), _) => Ok(seq),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one candidate runs"),
    }
}

/// Four copies decoupling `mode` from every other mode.
pub fn decouple_mode<T: Real>(
    s: &SymplecticMatrix<T>,
    mode: usize,
    opts: &BuildOptions<T>,
) -> Result<ProtocolSequence<T>> {
    let n = s.n_modes();
    if n < 2 {
        return Err(Error::InvalidDimension(
            "decoupling needs at least two modes".into(),
        ));
    }
    check_mode(n, mode, "mode")?;
    require_generic(s, opts, false)?;
    let perm = ModePermutation::to_front(n, mode);
    let sp = s.relabeled(&perm);
    let pattern = pattern_for(StructurePattern::decoupled(n, mode), opts);
    searched_over(opts, final_variants(opts), |o, v| {
        let d = decoupled_chain(&sp, final_scale(v), &framed(o, &perm)?)?;
        ProtocolSequence::assemble(s, d.full.unrelabeled(&perm), pattern.clone(), o.zero_tol)
    })
}

pub fn decouple_two_mode<T: Real>(
    s: &SymplecticMatrix<T>,
    opts: &BuildOptions<T>,
) -> Result<ProtocolSequence<T>> {
    if s.n_modes() != 2 {
        return Err(Error::InvalidDimension(format!(
            "expected 2 modes, got {}",
            s.n_modes()
        )));
    }
    decouple_mode(s, 0, opts)
}

/// Four copies sending input mode `from` exclusively to output mode `to`.
pub fn build_transducer<T: Real>(
    s: &SymplecticMatrix<T>,
    from: usize,
    to: usize,
    opts: &BuildOptions<T>,
) -> Result<ProtocolSequence<T>> {
    let n = s.n_modes();
    check_mode(n, from, "source mode")?;
    check_mode(n, to, "destination mode")?;
    if from == to {
        return Err(Error::InvalidParameter(
            "transduction needs two distinct modes".into(),
        ));
    }
    require_generic(s, opts, true)?;
    let perm = ModePermutation::to_ends(n, from, to);
    let sp = s.relabeled(&perm);
    let pattern = pattern_for(StructurePattern::transducer(n, from, to), opts);
    searched_over(opts, final_variants(opts), |o, v| {
        let local = framed(o, &perm)?;
        let c = Chain::coupler(&sp);
        let q = q_step(&sp, &sp, 0, 0, Scale::Free, &local)?;
        let half = Chain::sandwich(&c, q.layer, &c, q.product);
        let td = transducer_chain(&sp, &half, final_scale(v), &local)?;
        ProtocolSequence::assemble(s, td.unrelabeled(&perm), pattern.clone(), o.zero_tol)
    })
}

/// Transducer from the first mode to the last.
pub fn build_asymmetric_transducer<T: Real>(
    s: &SymplecticMatrix<T>,
    opts: &BuildOptions<T>,
) -> Result<ProtocolSequence<T>> {
    let n = s.n_modes();
    if n < 2 {
        return Err(Error::InvalidDimension(
            "transduction needs at least two modes".into(),
        ));
    }
    build_transducer(s, 0, n - 1, opts)
}

pub fn transduce_two_mode<T: Real>(
    s: &SymplecticMatrix<T>,
    opts: &BuildOptions<T>,
) -> Result<ProtocolSequence<T>> {
    if s.n_modes() != 2 {
        return Err(Error::InvalidDimension(format!(
            "expected 2 modes, got {}",
            s.n_modes()
        )));
    }
    build_transducer(s, 0, 1, opts)
}

/// Sixteen copies exchanging modes `i` and `j`.
///
/// With `D` the decoupling of mode `i` and `T` the transducer `i -> j`,
/// the net is `(T L2 D) L3 (D L1 D)`: `L1` q-decouples `j` inside `D`,
/// `L2` routes `q` of `j` into the output row of `i`, and `L3` finishes
/// the `j -> i` transfer.
pub fn build_swap<T: Real>(
    s: &SymplecticMatrix<T>,
    i: usize,
    j: usize,
    opts: &BuildOptions<T>,
) -> Result<ProtocolSequence<T>> {
    let n = s.n_modes();
    check_mode(n, i, "mode")?;
    check_mode(n, j, "mode")?;
    if i == j {
        return Err(Error::InvalidParameter(
            "swap needs two distinct modes".into(),
        ));
    }
    require_generic(s, opts, true)?;
    let last = n - 1;
    let pattern = StructurePattern::swap(n, i, j);
    // Exchanging the roles of `i` and `j` gives a different sequence for
    // the same swap.
    searched_over(opts, 2, |o, variant| {
        let (a, b) = if variant == 0 { (i, j) } else { (j, i) };
        let perm = ModePermutation::to_ends(n, a, b);
        let sp = s.relabeled(&perm);
        let local = framed(o, &perm)?;
        let dc = decoupled_chain(&sp, Scale::Free, &local)?;
        let td = transducer_chain(&sp, &dc.half, Scale::Free, &local)?;
        let d = dc.full;

        let l1 = q_step(&d.matrix, &d.matrix, last, last, Scale::Free, &local)?;
        let u = Chain::sandwich(&d, l1.layer, &d, l1.product);
        let l2 = q_step(&td.matrix, &d.matrix, last, 0, Scale::Free, &local)?;
        let t = Chain::sandwich(&td, l2.layer, &d, l2.product);
        let l3 = p_step(&t.matrix, &u.matrix, last, 0, last, Scale::Free, &local)?;
        let net = Chain::sandwich(&t, l3.layer, &u, l3.product);

        ProtocolSequence::assemble(s, net.unrelabeled(&perm), pattern.clone(), o.zero_tol)
    })
}

/// Decoupling of every mode by repeated use of the previous stage's net.
#[derive(Debug, Clone)]
pub struct DecouplingCascade<T> {
    /// Stage `k` uses the net of stage `k - 1` (stage 0 uses the coupler)
    /// and decouples mode `order[k]`.
    pub stages: Vec<ProtocolSequence<T>>,
    /// Modes in the order they were split off; the last entry is the mode
    /// left over once all others are decoupled.
    pub order: Vec<usize>,
}

impl<T: Real> DecouplingCascade<T> {
    pub fn net(&self) -> &SymplecticMatrix<T> {
        self.stages.last().expect("cascade has a stage").net()
    }

    /// Uses of the original coupler, `4^(N-1)`.
    pub fn coupler_count(&self) -> usize {
        self.stages.iter().map(|s| s.coupler_count()).product()
    }

    /// The whole cascade written against the original coupler.
    pub fn flatten(
        &self,
        coupler: &SymplecticMatrix<T>,
        zero_tol: T,
    ) -> Result<ProtocolSequence<T>> {
        let mut steps = vec![Step::Coupler];
        for stage in &self.stages {
            let mut next = Vec::new();
            for step in stage.steps() {
                match step {
                    Step::Coupler => next.extend(steps.iter().cloned()),
                    layer => next.push(layer.clone()),
                }
            }
            steps = next;
        }
        let n = coupler.n_modes();
        let all: Vec<usize> = (0..n).collect();
        ProtocolSequence::assemble(
            coupler,
            steps,
            StructurePattern::block_diagonal(n, &all),
            zero_tol,
        )
    }
}

/// Layer `k` of a stage, with `resets[m]` filling in the already
/// decoupled modes.
fn embed_layer<T: Real>(
    layer: &LocalLayer<T>,
    k: usize,
    resets: &[Option<[Mat<T>; 3]>],
    modes: &[usize],
) -> LocalLayer<T> {
    let mut blocks: Vec<Mat<T>> = resets
        .iter()
        .map(|r| {
            r.as_ref()
                .map_or_else(|| Mat::identity(2), |r| r[k].clone())
        })
        .collect();
    for (b, &m) in layer.blocks().iter().zip(modes) {
        blocks[m] = b.clone();
    }
    LocalLayer::trusted(blocks)
}

/// Rotations that turn a decoupled block `d` into the identity over one
/// stage. Writing `d = U diag(a, b) V` with rotations `U`, `V` and a
/// quarter turn `J`, `d (V^T J U^T) d = ab U J V` is itself a rotation
/// `W`, and `d A d W^-2 d A d = 1` for `A = V^T J U^T`. No squeezing is
/// spent, so the exempt mode can be reset too.
fn reset_blocks<T: Real>(d: &Mat<T>) -> Option<[Mat<T>; 3]> {
    if !d.is_finite() {
        return None;
    }
    let half = T::half();
    let e = (d[(0, 0)] + d[(1, 1)]) * half;
    let f = (d[(0, 0)] - d[(1, 1)]) * half;
    let g = (d[(1, 0)] + d[(0, 1)]) * half;
    let h = (d[(1, 0)] - d[(0, 1)]) * half;
    let (a1, a2) = (g.atan2(f), h.atan2(e));
    let turn = |x: T| {
        let (sn, cs) = x.sin_cos();
        Mat::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) | (1, 1) => cs,
            (0, 1) => -sn,
            _ => sn,
        })
    };
    // d = turn(beta) diag(a, b) turn(gamma)
    let beta = (a2 + a1) * half;
    let gamma = (a2 - a1) * half;
    let quarter = T::pi() * half;
    let a = turn(quarter - gamma - beta);
    let w = beta + quarter + gamma;
    Some([a.clone(), turn(-(w + w)), a])
}

fn principal_block<T: Real>(s: &SymplecticMatrix<T>, modes: &[usize]) -> SymplecticMatrix<T> {
    let m = s.matrix();
    let at = |i: usize| 2 * modes[i / 2] + i % 2;
    SymplecticMatrix::trusted(crate::matrix::Mat::from_fn(
        2 * modes.len(),
        2 * modes.len(),
        |i, j| m[(at(i), at(j))],
    ))
}

/// Decouples one mode per stage until every mode stands alone, each
/// stage acting on the block of modes left by the previous one. Stages
/// prefer the mode whose net has the smallest largest entry, which keeps
/// rounding growth down over the `4^(N-1)` copies; when a later stage
/// cannot be certified the other orders are tried as well.
pub fn decouple_all<T: Real>(
    s: &SymplecticMatrix<T>,
    opts: &BuildOptions<T>,
) -> Result<DecouplingCascade<T>> {
    let n = s.n_modes();
    if n < 2 {
        return Err(Error::InvalidDimension(
            "decoupling needs at least two modes".into(),
        ));
    }
    if let Some(e) = opts.exempt_mode {
        check_mode(n, e, "exempt mode")?;
    }
    let mut stages = Vec::with_capacity(n - 1);
    let mut order = Vec::with_capacity(n);
    let mut budget = CASCADE_BUDGET;
    cascade_from(
        s,
        &mut order,
        (0..n).collect(),
        &mut stages,
        opts,
        &mut budget,
    )?;
    Ok(DecouplingCascade { stages, order })
}

/// Stage builds allowed per cascade before giving up on other orders.
const CASCADE_BUDGET: usize = 6000;

fn cascade_from<T: Real>(
    coupler: &SymplecticMatrix<T>,
    order: &mut Vec<usize>,
    remaining: Vec<usize>,
    stages: &mut Vec<ProtocolSequence<T>>,
    opts: &BuildOptions<T>,
    budget: &mut usize,
) -> Result<()> {
    if remaining.len() == 1 {
        order.push(remaining[0]);
        return Ok(());
    }
    let mut tries = stage_candidates(coupler, order, &remaining, opts, budget);
    let Some(first) = tries.first() else {
        return Err(Error::CertificationFailed(
            "no decoupling stage could be built".into(),
        ));
    };
    if let Err(e) = first {
        return Err(e.clone());
    }
    tries.retain(|t| t.is_ok());
    let mut first_err = None;
    for (local, full) in tries.into_iter().flatten() {
        if !full.report().passed() {
            first_err.get_or_insert_with(|| {
                Error::CertificationFailed(format!(
                    "cascade stage misses its pattern by {:e}",
                    full.report().max_violation
                ))
            });
            continue;
        }
        let mut rest = remaining.clone();
        order.push(rest.remove(local));
        stages.push(full);
        match cascade_from(
            &stages[stages.len() - 1].net().clone(),
            order,
            rest,
            stages,
            opts,
            budget,
        ) {
            Ok(()) => return Ok(()),
            Err(e) => {
                first_err.get_or_insert(e);
                stages.pop();
                order.pop();
            }
        }
    }
    Err(first_err.expect("a stage was attempted"))
}

/// Every way of splitting one mode off `coupler`, best first. A lone
/// error means no choice produced a sequence at all.
fn stage_candidates<T: Real>(
    coupler: &SymplecticMatrix<T>,
    order: &[usize],
    remaining: &[usize],
    opts: &BuildOptions<T>,
    budget: &mut usize,
) -> Vec<Result<(usize, ProtocolSequence<T>)>> {
    let n = coupler.n_modes();
    // Layers are designed on the nearest symplectic block; the stage
    // itself is assembled and checked against the real one.
    let sub = SymplecticMatrix::trusted(crate::symplectic::resymplectify(
        principal_block(coupler, remaining).matrix(),
        2,
    ));
    let local_exempt = opts
        .exempt_mode
        .and_then(|e| remaining.iter().position(|&m| m == e));
    let sub_opts = opts.with_exempt_mode(local_exempt);
    // Decoupled modes are brought back to the identity so their blocks
    // do not compound from stage to stage.
    let resets: Vec<Option<[Mat<T>; 3]>> = (0..n)
        .map(|m| {
            if order.contains(&m) {
                reset_blocks(&coupler.matrix().block(2 * m, 2 * m, 2, 2))
            } else {
                None
            }
        })
        .collect();
    // With two modes left either choice finishes the job.
    let candidates = 0..if remaining.len() == 2 {
        1
    } else {
        remaining.len()
    };
    let mut built = Vec::new();
    let mut first_err = None;
    // The default search first, then each balance weight on its own: the
    // most accurate stage in isolation is not always the one that keeps
    // later stages accurate.
    let settings: Vec<BuildOptions<T>> = std::iter::once(sub_opts)
        .chain(
            BALANCE_CANDIDATES
                .iter()
                .map(|w| sub_opts.with_balance(w.map(T::lit)).with_search(false)),
        )
        .collect();
    let tries = candidates.flat_map(|l| settings.iter().map(move |o| (l, o)));
    for (local, o) in tries {
        if *budget == 0 {
            break;
        }
        *budget -= 1;
        let attempt = decouple_mode(&sub, local, o).and_then(|seq| {
            let mut k = 0;
            let steps: Vec<Step<T>> = seq
                .steps()
                .iter()
                .map(|st| match st {
                    Step::Layer(l) => {
                        k += 1;
                        Step::Layer(embed_layer(l, k - 1, &resets, remaining))
                    }
                    Step::Coupler => Step::Coupler,
                })
                .collect();
            let mut done = order.to_vec();
            done.push(remaining[local]);
            let pattern = StructurePattern::block_diagonal(n, &done);
            ProtocolSequence::assemble(coupler, steps, pattern, opts.zero_tol)
        });
        match attempt {
            Ok(full) => built.push((local, full)),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if built.is_empty() {
        return first_err.into_iter().map(Err).collect();
    }
    built.sort_by(|(_, a), (_, b)| {
        (!a.report().passed(), a.net().max_abs())
            .partial_cmp(&(!b.report().passed(), b.net().max_abs()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    built.into_iter().map(Ok).collect()
}

/// Builder selector for [`relax_squeezing`] and front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Builder {
    DecoupleTwoMode,
    TransduceTwoMode,
    Decouple { mode: usize },
    Transducer { from: usize, to: usize },
    AsymmetricTransducer,
    Swap { i: usize, j: usize },
}

impl Builder {
    pub fn build<T: Real>(
        &self,
        s: &SymplecticMatrix<T>,
        opts: &BuildOptions<T>,
    ) -> Result<ProtocolSequence<T>> {
        match *self {
            Self::DecoupleTwoMode => decouple_two_mode(s, opts),
            Self::TransduceTwoMode => transduce_two_mode(s, opts),
            Self::Decouple { mode } => decouple_mode(s, mode, opts),
            Self::Transducer { from, to } => build_transducer(s, from, to, opts),
            Self::AsymmetricTransducer => build_asymmetric_transducer(s, opts),
            Self::Swap { i, j } => build_swap(s, i, j, opts),
        }
    }
}

/// Runs `builder` with every block of `exempt_mode` restricted to a rotation.
pub fn relax_squeezing<T: Real>(
    builder: Builder,
    s: &SymplecticMatrix<T>,
    exempt_mode: usize,
    opts: &BuildOptions<T>,
) -> Result<ProtocolSequence<T>> {
    check_mode(s.n_modes(), exempt_mode, "exempt mode")?;
    builder.build(s, &opts.with_exempt_mode(Some(exempt_mode)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::pattern::check_pattern;
    use crate::symplectic::random_generic_symplectic;

    fn opts() -> BuildOptions<f64> {
        BuildOptions::default()
    }

    #[test]
    fn two_mode_decoupling_pattern_and_count() {
        let s = random_generic_symplectic::<f64>(2, 21).unwrap();
        let seq = decouple_two_mode(&s, &opts()).unwrap();
        assert_eq!(seq.coupler_count(), 4);
        assert_eq!(seq.layers().count(), 3);
        let net = seq.net().matrix();
        assert!((net[(0, 1)] - 1.0).abs() < 1e-8);
        assert!((net[(1, 0)] + 1.0).abs() < 1e-8);
        assert!(seq.net().residual() < 1e-9);
    }

    #[test]
    fn q_step_alone_uses_two_copies() {
        let s = random_generic_symplectic::<f64>(3, 2).unwrap();
        let seq = decouple_q(&s, 1, &opts()).unwrap();
        assert_eq!(seq.coupler_count(), 2);
        let (sp, layer) =
            decouple_q_two_mode(&random_generic_symplectic::<f64>(2, 2).unwrap()).unwrap();
        assert_eq!(layer.n_modes(), 2);
        assert!((sp.get(0, 1) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn decouple_any_mode() {
        let s = random_generic_symplectic::<f64>(4, 6).unwrap();
        for mode in 0..4 {
            let seq = decouple_mode(&s, mode, &opts()).unwrap();
            let p = StructurePattern::decoupled(4, mode);
            assert!(check_pattern(seq.net().matrix(), &p, 1e-8).passed());
        }
    }

    #[test]
    fn transducer_and_swap() {
        let s = random_generic_symplectic::<f64>(3, 17).unwrap();
        let td = build_transducer(&s, 2, 0, &opts()).unwrap();
        assert_eq!(td.coupler_count(), 4);
        let sw = build_swap(&s, 0, 2, &opts()).unwrap();
        assert_eq!(sw.coupler_count(), 16);
        assert_eq!(sw.layers().count(), 15);
    }

    #[test]
    fn two_mode_swap_also_works() {
        let s = random_generic_symplectic::<f64>(2, 5).unwrap();
        let sw = build_swap(&s, 1, 0, &opts()).unwrap();
        assert_eq!(sw.coupler_count(), 16);
    }

    #[test]
    fn cascade_block_diagonalizes() {
        let s = random_generic_symplectic::<f64>(3, 12).unwrap();
        let c = decouple_all(&s, &opts()).unwrap();
        assert_eq!(c.stages.len(), 2);
        assert_eq!(c.coupler_count(), 16);
        let flat = c.flatten(&s, 1e-8).unwrap();
        assert_eq!(flat.coupler_count(), 16);
        assert!(flat.net().matrix().max_abs_diff(c.net().matrix()) < 1e-8 * c.net().max_abs());
    }

    #[test]
    fn identity_is_an_edge_case() {
        let s = SymplecticMatrix::<f64>::identity(3);
        assert!(matches!(
            decouple_mode(&s, 0, &opts()),
            Err(Error::EdgeCase { .. })
        ));
        assert!(matches!(
            build_swap(&s, 0, 1, &opts()),
            Err(Error::UnsatisfiableTransduction(_))
        ));
    }

    #[test]
    fn bad_indices() {
        let s = random_generic_symplectic::<f64>(3, 1).unwrap();
        assert!(matches!(
            build_swap(&s, 1, 1, &opts()),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            decouple_mode(&s, 3, &opts()),
            Err(Error::InvalidParameter(_))
        ));
    }
}
