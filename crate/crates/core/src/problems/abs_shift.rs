use super::{Optimum, Problem};
use crate::coin_betting::GradientSample;

/// `F(x) = |x − target|` with subgradient `0` at the kink.
#[derive(Debug, Clone)]
pub struct AbsShift {
    pub target: f64,
}

impl AbsShift {
    pub fn new(target: f64) -> Self {
        Self { target }
    }

    fn slope(&self, x: f64) -> f64 {
        if x > self.target {
            1.0
        } else if x < self.target {
            -1.0
        } else {
            0.0
        }
    }
}

impl Problem for AbsShift {
    fn name(&self) -> String {
        format!("abs-shift({})", self.target)
    }

    fn dim(&self) -> usize {
        1
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn evaluate(&self, w: &[f64]) -> f64 {
        (w[0] - self.target).abs()
    }

    fn subgradient(&self, w: &[f64], _query: u64) -> GradientSample {
        GradientSample::objective(vec![self.slope(w[0])])
    }

    fn exact_gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(vec![self.slope(w[0])])
    }

    fn optimum(&self) -> Option<Optimum> {
        Some(Optimum {
            point: vec![self.target],
            value: 0.0,
        })
    }

    fn lipschitz(&self) -> Option<Vec<f64>> {
        Some(vec![1.0])
    }

    fn tau(&self) -> Option<f64> {
        Some(1.0)
    }

    fn is_convex(&self) -> bool {
        true
    }
}
