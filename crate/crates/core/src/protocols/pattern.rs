//! Zero/pinned-entry patterns that certify synthesized nets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::matrix::Mat;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// `q` of one mode decoupled after a single sandwich.
    QDecoupled,
    /// One or more modes fully decoupled from the rest.
    Decoupled,
    /// `q` of the source mode routed onto `p` of the destination mode.
    TransducerStar,
    /// Source mode routed exclusively onto the destination mode.
    Transducer,
    /// Two modes exchanged, everything else kept among itself.
    Swap,
}

impl PatternKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::QDecoupled => "q_decoupled",
            Self::Decoupled => "decoupled",
            Self::TransducerStar => "transducer_star",
            Self::Transducer => "transducer",
            Self::Swap => "swap",
        }
    }
}

/// Entries a certified net must show. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructurePattern {
    pub kind: PatternKind,
    pub n_modes: usize,
    pub target_modes: Vec<usize>,
    pub zero_positions: Vec<(usize, usize)>,
    pub pinned_entries: Vec<(usize, usize, i8)>,
    /// Pinned `+-1` entries are only required to be nonzero with the pinned
    /// sign. Used by squeezing-relaxed builds, whose nets carry a positive
    /// rescaling of those entries.
    pub scale_free: bool,
}

fn mode_of(index: usize) -> usize {
    index / 2
}

impl StructurePattern {
    fn assemble(
        kind: PatternKind,
        n_modes: usize,
        target_modes: Vec<usize>,
        zeros: BTreeSet<(usize, usize)>,
        pinned: Vec<(usize, usize, i8)>,
    ) -> Self {
        let pinned_pos: BTreeSet<_> = pinned.iter().map(|&(r, c, _)| (r, c)).collect();
        Self {
            kind,
            n_modes,
            target_modes,
            zero_positions: zeros
                .into_iter()
                .filter(|p| !pinned_pos.contains(p))
                .collect(),
            pinned_entries: pinned,
            scale_free: false,
        }
    }

    /// Column `2 from` equals `-e_(2 to + 1)` and row `2 to` equals `e_(2 from + 1)^T`.
    pub fn transducer_star(n_modes: usize, from: usize, to: usize) -> Self {
        let d = 2 * n_modes;
        let (q_in, q_out) = (2 * from, 2 * to);
        let mut zeros = BTreeSet::new();
        for i in 0..d {
            zeros.insert((i, q_in));
            zeros.insert((q_out, i));
        }
        let pinned = vec![
            (q_out, q_in, 0),
            (q_out, q_in + 1, 1),
            (q_out + 1, q_in, -1),
        ];
        let kind = if from == to {
            PatternKind::QDecoupled
        } else {
            PatternKind::TransducerStar
        };
        Self::assemble(kind, n_modes, vec![from, to], zeros, pinned)
    }

    pub fn q_decoupled(n_modes: usize, mode: usize) -> Self {
        Self::transducer_star(n_modes, mode, mode)
    }

    /// Input mode `from` reaches only output mode `to`, and output mode `to`
    /// sees only input mode `from`. With `from == to` this is decoupling.
    pub fn transducer(n_modes: usize, from: usize, to: usize) -> Self {
        let d = 2 * n_modes;
        let mut zeros = BTreeSet::new();
        for i in 0..d {
            for j in 0..d {
                let col_in = mode_of(j) == from;
                let row_out = mode_of(i) == to;
                if col_in != row_out {
                    zeros.insert((i, j));
                }
            }
        }
        let (q_in, q_out) = (2 * from, 2 * to);
        let pinned = vec![
            (q_out, q_in, 0),
            (q_out, q_in + 1, 1),
            (q_out + 1, q_in, -1),
        ];
        let kind = if from == to {
            PatternKind::Decoupled
        } else {
            PatternKind::Transducer
        };
        Self::assemble(kind, n_modes, vec![from, to], zeros, pinned)
    }

    pub fn decoupled(n_modes: usize, mode: usize) -> Self {
        let mut p = Self::transducer(n_modes, mode, mode);
        p.target_modes = vec![mode];
        p
    }

    /// Every listed mode decoupled from every other mode; no pinned entries.
    pub fn block_diagonal(n_modes: usize, modes: &[usize]) -> Self {
        let d = 2 * n_modes;
        let mut zeros = BTreeSet::new();
        for &m in modes {
            for i in 0..d {
                for j in 0..d {
                    if (mode_of(i) == m) != (mode_of(j) == m) {
                        zeros.insert((i, j));
                    }
                }
            }
        }
        Self::assemble(
            PatternKind::Decoupled,
            n_modes,
            modes.to_vec(),
            zeros,
            Vec::new(),
        )
    }

    /// Modes `a` and `b` couple only to each other; no pinned entries.
    pub fn swap(n_modes: usize, a: usize, b: usize) -> Self {
        let d = 2 * n_modes;
        let partner = |m: usize| {
            if m == a {
                Some(b)
            } else if m == b {
                Some(a)
            } else {
                None
            }
        };
        let mut zeros = BTreeSet::new();
        for i in 0..d {
            for j in 0..d {
                let (mi, mj) = (mode_of(i), mode_of(j));
                let row_ok = partner(mi).map_or(true, |p| p == mj);
                let col_ok = partner(mj).map_or(true, |p| p == mi);
                if !(row_ok && col_ok) {
                    zeros.insert((i, j));
                }
            }
        }
        Self::assemble(PatternKind::Swap, n_modes, vec![a, b], zeros, Vec::new())
    }

    pub fn scale_free(mut self) -> Self {
        self.scale_free = true;
        self
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Zero,
    Pinned(i8),
    Sign(i8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternViolation {
    pub row: usize,
    pub col: usize,
    pub expected: Expectation,
    pub actual: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatternReport {
    pub violations: Vec<PatternViolation>,
    /// Largest deviation over all checked entries (zeros measured relative
    /// to the max-norm, pinned entries absolute).
    pub max_violation: f64,
}

impl PatternReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists required zeros above `tol * |m|_max` and pinned entries off by more than `tol`.
pub fn check_pattern<T: Real>(m: &Mat<T>, pattern: &StructurePattern, tol: T) -> PatternReport {
    let d = 2 * pattern.n_modes;
    if m.nrows() != d || m.ncols() != d {
        return PatternReport {
            violations: vec![PatternViolation {
                row: m.nrows(),
                col: m.ncols(),
                expected: Expectation::Zero,
                actual: f64::NAN,
                deviation: f64::INFINITY,
            }],
            max_violation: f64::INFINITY,
        };
    }
    let tol = tol.to_f64_lossy();
    let scale = m.max_abs().to_f64_lossy().max(f64::MIN_POSITIVE);
    let mut report = PatternReport::default();
    let mut record = |row, col, expected, actual: f64, deviation: f64, bad: bool| {
        if deviation > report.max_violation || deviation.is_nan() {
            report.max_violation = deviation;
        }
        if bad {
            report.violations.push(PatternViolation {
                row,
                col,
                expected,
                actual,
                deviation,
            });
        }
    };
    for &(i, j) in &pattern.zero_positions {
        let x = m[(i, j)].to_f64_lossy();
        let dev = x.abs() / scale;
        record(i, j, Expectation::Zero, x, dev, !(dev <= tol));
    }
    for &(i, j, v) in &pattern.pinned_entries {
        let x = m[(i, j)].to_f64_lossy();
        if pattern.scale_free && v != 0 {
            let ok = x * f64::from(v) > tol * scale;
            let dev = if ok { 0.0 } else { (x - f64::from(v)).abs() };
            record(i, j, Expectation::Sign(v), x, dev, !ok);
        } else {
            let dev = (x - f64::from(v)).abs();
            record(i, j, Expectation::Pinned(v), x, dev, !(dev <= tol));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::omega_matrix;

    #[test]
    fn identity_against_decoupled() {
        let p = StructurePattern::decoupled(2, 0);
        let r = check_pattern(&Mat::<f64>::identity(4), &p, 1e-8);
        assert!(!r.passed());
        assert!(r.violations.iter().all(|v| v.expected != Expectation::Zero));
        assert!(r
            .violations
            .iter()
            .any(|v| (v.row, v.col, v.expected) == (0, 1, Expectation::Pinned(1))));
    }

    #[test]
    fn omega_passes_decoupled() {
        let p = StructurePattern::decoupled(2, 0);
        let r = check_pattern(&omega_matrix::<f64>(2), &p, 1e-8);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn pattern_sizes() {
        // one mode decoupled out of three: 2 * (2 * 4) off-diagonal entries
        let p = StructurePattern::decoupled(3, 1);
        assert_eq!(p.zero_positions.len(), 16);
        assert_eq!(p.pinned_entries.len(), 3);

        let q = StructurePattern::q_decoupled(2, 0);
        // row 0 and column 0 share one entry; three positions are pinned
        assert_eq!(q.zero_positions.len(), 4 + 4 - 1 - 3);

        let s = StructurePattern::swap(2, 0, 1);
        assert_eq!(s.zero_positions.len(), 8);
        let s3 = StructurePattern::swap(3, 0, 2);
        assert_eq!(s3.zero_positions.len(), 36 - 4 - 4 - 4);
    }

    #[test]
    fn scale_free_checks_sign_only() {
        let mut m = omega_matrix::<f64>(2);
        m[(0, 1)] = 4.0;
        m[(1, 0)] = -0.25;
        let p = StructurePattern::decoupled(2, 0);
        assert!(!check_pattern(&m, &p, 1e-8).passed());
        assert!(check_pattern(&m, &p.clone().scale_free(), 1e-8).passed());
        m[(0, 1)] = -4.0;
        assert!(!check_pattern(&m, &p.scale_free(), 1e-8).passed());
    }

    #[test]
    fn dimension_mismatch_is_a_violation() {
        let p = StructurePattern::decoupled(3, 0);
        assert!(!check_pattern(&Mat::<f64>::identity(4), &p, 1e-8).passed());
    }
}
