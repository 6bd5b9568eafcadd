//! Objective suite: exact and stochastic gradient oracles with optimum,
//! Lipschitz and weak-quasi-convexity metadata.
//!
//! Oracles return gradients of the objective `F`
//! ([`SignConvention::ObjectiveGradient`](crate::coin_betting::SignConvention)).
//! Stochastic oracles draw from a random stream keyed by `(seed, query)`, so
//! the same query index always yields the same sample.

mod abs_shift;
mod logistic;
mod noisy;
mod quadratic;
mod registry;
mod wqc;

pub use abs_shift::AbsShift;
pub use logistic::{LogisticConfig, LogisticProblem};
pub use noisy::Noisy;
pub use quadratic::{DomainBox, Quadratic};
pub use registry::{build_problem, ProblemSpec};
pub use wqc::WeakQuasiConvex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coin_betting::GradientSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub point: Vec<f64>,
    pub value: f64,
}

pub trait Problem: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    /// Default starting point `w1`.
    fn initial_point(&self) -> Vec<f64>;

    fn evaluate(&self, w: &[f64]) -> f64;

    /// A (stochastic) subgradient of `F` at `w` for oracle query `query`.
    fn subgradient(&self, w: &[f64], query: u64) -> GradientSample;

    /// Gradient of `F` itself, where differentiable.
    fn exact_gradient(&self, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn optimum(&self) -> Option<Optimum> {
        None
    }

    /// Per-coordinate bound on `|subgradient_i|`.
    fn lipschitz(&self) -> Option<Vec<f64>> {
        None
    }

    /// Weak quasi-convexity constant over [`Problem::domain`].
    fn tau(&self) -> Option<f64> {
        None
    }

    fn domain(&self) -> Option<DomainBox> {
        None
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn is_stochastic(&self) -> bool {
        false
    }

    /// Oracle queries that make up one pass over the data, for epoch-based problems.
    fn queries_per_epoch(&self) -> Option<u64> {
        None
    }

    /// Extra key/value pairs echoed into run metadata.
    fn metadata(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Random stream for one oracle query.
pub(crate) fn query_rng(seed: u64, query: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(query);
    rng
}

/// Central finite difference of `F` along coordinate `i`.
pub fn central_difference(problem: &dyn Problem, w: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = w.to_vec();
    let mut minus = w.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (problem.evaluate(&plus) - problem.evaluate(&minus)) / (2.0 * h)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;

    /// Relative error of the exact gradient against central differences at
    /// `points` random points drawn from `sample`.
    pub fn max_fd_error(
        problem: &dyn Problem,
        points: usize,
        h: f64,
        mut sample: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    ) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0.0_f64;
        for _ in 0..points {
            let w = sample(&mut rng);
            let g = problem.exact_gradient(&w).unwrap();
            for i in 0..problem.dim() {
                let fd = central_difference(problem, &w, i, h);
                let err = (fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
        worst
    }

    pub fn uniform_point(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(lo..hi)).collect()
    }

    /// `F(w) − F(w*) ≤ τ (w − w*)ᵀ ∇F(w)` on a grid of the (one-dimensional
    /// slice of the) domain.
    pub fn tau_holds_on_segment(problem: &dyn Problem, points: usize) -> bool {
        let tau = problem.tau().unwrap();
        let opt = problem.optimum().unwrap();
        let domain = problem.domain().unwrap();
        (0..=points).all(|k| {
            let frac = k as f64 / points as f64;
            let w: Vec<f64> = domain
                .lower
                .iter()
                .zip(&domain.upper)
                .map(|(lo, hi)| lo + frac * (hi - lo))
                .collect();
            let g = problem.subgradient(&w, 0).to_objective();
            let inner: f64 = w
                .iter()
                .zip(&opt.point)
                .zip(&g)
                .map(|((wi, oi), gi)| (wi - oi) * gi)
                .sum();
            problem.evaluate(&w) - opt.value <= tau * inner + 1e-12
        })
    }
}
