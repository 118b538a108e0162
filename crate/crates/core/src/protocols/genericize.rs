//! Repair of non-generic couplers by repetition with random local layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sequence::{merge_layers, ProtocolSequence, Step};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::symplectic::{genericity_report, random_local_layer, LocalLayer, SymplecticMatrix};

/// Largest squeezing drawn for the random dressing layers.
const DRESSING_SQUEEZE: f64 = 0.5;

/// `matrix = (post S pre)^power`, generic at the requested threshold.
#[derive(Debug, Clone)]
pub struct Genericized<T> {
    pub matrix: SymplecticMatrix<T>,
    pub power: usize,
    /// Applied before each coupler use.
    pub pre_layer: LocalLayer<T>,
    /// Applied after each coupler use.
    pub post_layer: LocalLayer<T>,
    /// Vanishing 2x2 blocks of each power tried, starting at 1.
    pub vanishing_history: Vec<usize>,
}

/// Largest repetition count tried for `n` modes.
pub fn max_power(n_modes: usize) -> usize {
    (n_modes * n_modes.saturating_sub(1)).max(1)
}

/// Draws the dressing layers from `seed` and searches `K = 1, 2, ...`.
pub fn genericize<T: Real>(s: &SymplecticMatrix<T>, seed: u64) -> Result<Genericized<T>> {
    genericize_with(s, seed, T::lit(T::GENERICITY_TOL))
}

pub fn genericize_with<T: Real>(
    s: &SymplecticMatrix<T>,
    seed: u64,
    threshold: T,
) -> Result<Genericized<T>> {
    let n = s.n_modes();
    let limit = max_power(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pre = random_local_layer::<T>(&mut rng, n, DRESSING_SQUEEZE);
    let post = random_local_layer::<T>(&mut rng, n, DRESSING_SQUEEZE);
    let dressed = post.to_matrix().compose(s).compose(&pre.to_matrix());

    let mut power = dressed.clone();
    let mut history = Vec::new();
    for k in 1..=limit {
        if k > 1 {
            power = dressed.compose(&power);
        }
        let report = genericity_report(power.matrix(), threshold);
        history.push(report.vanishing_blocks.len());
        if report.is_generic {
            return Ok(Genericized {
                matrix: power,
                power: k,
                pre_layer: pre,
                post_layer: post,
                vanishing_history: history,
            });
        }
    }
    Err(Error::PermutationLike { max_power: limit })
}

impl<T: Real> Genericized<T> {
    /// Rewrites a sequence built on `self.matrix` in terms of the original coupler.
    pub fn expand(
        &self,
        seq: &ProtocolSequence<T>,
        original: &SymplecticMatrix<T>,
        zero_tol: T,
    ) -> Result<ProtocolSequence<T>> {
        let mut steps = Vec::new();
        for step in seq.steps() {
            match step {
                Step::Coupler => {
                    for _ in 0..self.power {
                        steps.push(Step::Layer(self.pre_layer.clone()));
                        steps.push(Step::Coupler);
                        steps.push(Step::Layer(self.post_layer.clone()));
                    }
                }
                layer => steps.push(layer.clone()),
            }
        }
        ProtocolSequence::assemble(
            original,
            merge_layers(steps),
            seq.pattern().clone(),
            zero_tol,
        )
    }
}
