use super::{DomainBox, Optimum, Problem};
use crate::coin_betting::GradientSample;

/// `F(x) = x² / (1 + x²)`: nonconvex on `[−1, 1]` but 1-weakly-quasi-convex there.
#[derive(Debug, Clone, Default)]
pub struct WeakQuasiConvex;

impl WeakQuasiConvex {
    pub fn derivative(x: f64) -> f64 {
        let d = 1.0 + x * x;
        2.0 * x / (d * d)
    }

    /// `max |F'|` is attained at `|x| = 1/√3`, inside the domain.
    pub fn max_slope() -> f64 {
        Self::derivative(1.0 / 3.0_f64.sqrt())
    }
}

impl Problem for WeakQuasiConvex {
    fn name(&self) -> String {
        "wqc".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.9]
    }

    fn evaluate(&self, w: &[f64]) -> f64 {
        let x2 = w[0] * w[0];
        x2 / (1.0 + x2)
    }

    fn subgradient(&self, w: &[f64], _query: u64) -> GradientSample {
        GradientSample::objective(vec![Self::derivative(w[0])])
    }

    fn exact_gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(vec![Self::derivative(w[0])])
    }

    fn optimum(&self) -> Option<Optimum> {
        Some(Optimum {
            point: vec![0.0],
            value: 0.0,
        })
    }

    fn lipschitz(&self) -> Option<Vec<f64>> {
        Some(vec![Self::max_slope()])
    }

    fn tau(&self) -> Option<f64> {
        Some(1.0)
    }

    fn domain(&self) -> Option<DomainBox> {
        Some(DomainBox::uniform(1, -1.0, 1.0).expect("valid box"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{max_fd_error, tau_holds_on_segment, uniform_point};

    #[test]
    fn tight_at_the_edge() {
        let p = WeakQuasiConvex;
        let gap = p.evaluate(&[1.0]) - p.evaluate(&[0.0]);
        assert_eq!(gap, 0.5);
        assert_eq!(1.0 * WeakQuasiConvex::derivative(1.0), 0.5);
        assert_eq!(p.evaluate(&[0.0]), 0.0);
        assert_eq!(WeakQuasiConvex::derivative(0.0), 0.0);
    }

    #[test]
    fn not_midpoint_convex() {
        let p = WeakQuasiConvex;
        // F(0.9) + F(−0.9) < 2 F(0) is false; the witness is the segment [0.6, 1.0].
        assert!(p.evaluate(&[0.9]) + p.evaluate(&[-0.9]) >= 2.0 * p.evaluate(&[0.0]));
        assert!(p.evaluate(&[0.8]) > 0.5 * (p.evaluate(&[0.6]) + p.evaluate(&[1.0])));
    }

    #[test]
    fn tau_on_grid_and_slope_bound() {
        let p = WeakQuasiConvex;
        assert!(tau_holds_on_segment(&p, 1000));
        let l = WeakQuasiConvex::max_slope();
        assert!((l - 9.0 / (8.0 * 3.0_f64.sqrt())).abs() < 1e-15);
        for k in -2000..=2000 {
            let x = k as f64 / 100.0;
            assert!(WeakQuasiConvex::derivative(x).abs() <= l);
        }
        assert!(max_fd_error(&p, 20, 1e-6, |r| uniform_point(r, 1, -1.0, 1.0)) <= 1e-5);
    }
}
