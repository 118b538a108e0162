use super::pattern::{check_pattern, PatternReport, StructurePattern};
use crate::error::{Error, Result};
use crate::local::squeezing_cost;
use crate::matrix::Mat;
use crate::scalar::Real;
use crate::symplectic::{LocalLayer, ModePermutation, SymplecticMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum Step<T> {
    /// One use of the fixed coupler.
    Coupler,
    Layer(LocalLayer<T>),
}

/// Coupler uses and local layers in time order, with the certified product.
#[derive(Debug, Clone)]
pub struct ProtocolSequence<T> {
    steps: Vec<Step<T>>,
    net: SymplecticMatrix<T>,
    coupler_count: usize,
    squeezing_budget: Vec<T>,
    pattern: StructurePattern,
    report: PatternReport,
}

/// Left-multiplies `acc` by one step.
fn apply_step<T: Real>(acc: &Mat<T>, step: &Step<T>, coupler: &Mat<T>) -> Mat<T> {
    match step {
        Step::Coupler => coupler * acc,
        Step::Layer(layer) => {
            let mut out = acc.clone();
            for (m, b) in layer.blocks().iter().enumerate() {
                for c in 0..acc.ncols() {
                    let (x, y) = (acc[(2 * m, c)], acc[(2 * m + 1, c)]);
                    out[(2 * m, c)] = b[(0, 0)] * x + b[(0, 1)] * y;
                    out[(2 * m + 1, c)] = b[(1, 0)] * x + b[(1, 1)] * y;
                }
            }
            out
        }
    }
}

/// Product of `steps` in time order, the first step acting first.
pub fn replay<T: Real>(steps: &[Step<T>], coupler: &Mat<T>) -> Mat<T> {
    steps.iter().fold(Mat::identity(coupler.nrows()), |acc, s| {
        apply_step(&acc, s, coupler)
    })
}

/// Fuses neighbouring layers so coupler uses and layers alternate.
pub(crate) fn merge_layers<T: Real>(steps: Vec<Step<T>>) -> Vec<Step<T>> {
    let mut out: Vec<Step<T>> = Vec::with_capacity(steps.len());
    for step in steps {
        match (out.last_mut(), step) {
            (Some(Step::Layer(prev)), Step::Layer(next)) => *prev = next.compose(prev),
            (_, step) => out.push(step),
        }
    }
    out
}

impl<T: Real> ProtocolSequence<T> {
    /// Multiplies out `steps`, measures budgets and certifies `pattern`.
    pub fn assemble(
        coupler: &SymplecticMatrix<T>,
        steps: Vec<Step<T>>,
        pattern: StructurePattern,
        zero_tol: T,
    ) -> Result<Self> {
        let n = coupler.n_modes();
        if pattern.n_modes != n {
            return Err(Error::InvalidDimension(format!(
                "pattern for {} modes, coupler has {n}",
                pattern.n_modes
            )));
        }
        let mut budget = vec![T::zero(); n];
        let mut coupler_count = 0;
        for step in &steps {
            match step {
                Step::Coupler => coupler_count += 1,
                Step::Layer(layer) => {
                    if layer.n_modes() != n {
                        return Err(Error::InvalidDimension(
                            "layer size differs from coupler".into(),
                        ));
                    }
                    for (b, c) in budget.iter_mut().zip(squeezing_cost(layer)?) {
                        *b = b.max(c);
                    }
                }
            }
        }
        let net = SymplecticMatrix::trusted(replay(&steps, coupler.matrix()));
        let report = check_pattern(net.matrix(), &pattern, zero_tol);
        if !report.passed() {
            return Err(Error::CertificationFailed(format!(
                "net misses the {} pattern by {:e}",
                pattern.name(),
                report.max_violation
            )));
        }
        Ok(Self {
            steps,
            net,
            coupler_count,
            squeezing_budget: budget,
            pattern,
            report,
        })
    }

    pub fn steps(&self) -> &[Step<T>] {
        &self.steps
    }

    pub fn layers(&self) -> impl Iterator<Item = &LocalLayer<T>> {
        self.steps.iter().filter_map(|s| match s {
            Step::Layer(l) => Some(l),
            Step::Coupler => None,
        })
    }

    pub fn net(&self) -> &SymplecticMatrix<T> {
        &self.net
    }

    pub fn coupler_count(&self) -> usize {
        self.coupler_count
    }

    /// Per-mode largest `|r|` over all layers.
    pub fn squeezing_budget(&self) -> &[T] {
        &self.squeezing_budget
    }

    pub fn pattern(&self) -> &StructurePattern {
        &self.pattern
    }

    pub fn report(&self) -> &PatternReport {
        &self.report
    }

    pub fn n_modes(&self) -> usize {
        self.net.n_modes()
    }

    /// Recomputes the product of the steps against `coupler`.
    pub fn replay(&self, coupler: &Mat<T>) -> Mat<T> {
        replay(&self.steps, coupler)
    }
}

/// A product of coupler uses and layers, tracked together with its value.
#[derive(Debug, Clone)]
pub(crate) struct Chain<T> {
    pub steps: Vec<Step<T>>,
    pub matrix: SymplecticMatrix<T>,
}

impl<T: Real> Chain<T> {
    pub fn coupler(s: &SymplecticMatrix<T>) -> Self {
        Self {
            steps: vec![Step::Coupler],
            matrix: s.clone(),
        }
    }

    /// `left * layer * right` as a chain; `product` is the already computed value.
    pub fn sandwich(
        left: &Self,
        layer: LocalLayer<T>,
        right: &Self,
        product: SymplecticMatrix<T>,
    ) -> Self {
        let mut steps = right.steps.clone();
        steps.push(Step::Layer(layer));
        steps.extend(left.steps.iter().cloned());
        Self {
            steps,
            matrix: product,
        }
    }

    /// Steps expressed in the frame before `perm` was applied.
    pub fn unrelabeled(self, perm: &ModePermutation) -> Vec<Step<T>> {
        let back = perm.inverse();
        self.steps
            .into_iter()
            .map(|s| match s {
                Step::Layer(l) => Step::Layer(l.relabeled(&back)),
                Step::Coupler => Step::Coupler,
            })
            .collect()
    }
}
