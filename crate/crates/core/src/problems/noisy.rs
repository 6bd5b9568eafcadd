use rand::Rng;

use super::{query_rng, DomainBox, Optimum, Problem};
use crate::coin_betting::GradientSample;
use crate::{Error, Result};

/// Adds bounded, zero-mean noise to another problem's gradients.
///
/// Coordinate `i` receives noise uniform on `[−h, h]` with
/// `h = min(σ, L_i − |g_i|)`, so the wrapped gradients still satisfy the
/// base problem's Lipschitz bound.
pub struct Noisy {
    inner: Box<dyn Problem>,
    sigma: f64,
    seed: u64,
    bounds: Vec<f64>,
}

impl Noisy {
    pub fn new(inner: Box<dyn Problem>, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::config(format!("noise level must be nonnegative, got {sigma}")));
        }
        let bounds = inner.lipschitz().ok_or_else(|| {
            Error::config(format!("{} has no gradient bound; cannot add bounded noise", inner.name()))
        })?;
        Ok(Self {
            inner,
            sigma,
            seed,
            bounds,
        })
    }
}

impl Problem for Noisy {
    fn name(&self) -> String {
        format!("{}-noisy:{}", self.inner.name(), self.sigma)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.inner.initial_point()
    }

    fn evaluate(&self, w: &[f64]) -> f64 {
        self.inner.evaluate(w)
    }

    fn subgradient(&self, w: &[f64], query: u64) -> GradientSample {
        let mut g = self.inner.subgradient(w, query);
        if self.sigma == 0.0 {
            return g;
        }
        let mut rng = query_rng(self.seed ^ 0x006e_6f69_7379, query);
        for (v, l) in g.values.iter_mut().zip(&self.bounds) {
            let half_width = self.sigma.min(l - v.abs()).max(0.0);
            if half_width > 0.0 {
                *v = (*v + rng.random_range(-half_width..=half_width)).clamp(-l, *l);
            }
        }
        g
    }

    fn exact_gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        self.inner.exact_gradient(w)
    }

    fn optimum(&self) -> Option<Optimum> {
        self.inner.optimum()
    }

    fn lipschitz(&self) -> Option<Vec<f64>> {
        Some(self.bounds.clone())
    }

    fn tau(&self) -> Option<f64> {
        self.inner.tau()
    }

    fn domain(&self) -> Option<DomainBox> {
        self.inner.domain()
    }

    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }

    fn is_stochastic(&self) -> bool {
        self.sigma > 0.0 || self.inner.is_stochastic()
    }

    fn queries_per_epoch(&self) -> Option<u64> {
        self.inner.queries_per_epoch()
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({ "noise_sigma": self.sigma, "inner": self.inner.metadata() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{DomainBox, Quadratic};

    fn quad() -> Box<dyn Problem> {
        Box::new(
            Quadratic::new(vec![1.0, -1.0], vec![1.0, 2.0], DomainBox::uniform(2, -4.0, 4.0).unwrap())
                .unwrap(),
        )
    }

    #[test]
    fn zero_sigma_is_identity() {
        let base = quad();
        let expected = base.subgradient(&[0.5, 0.5], 3);
        let noisy = Noisy::new(base, 0.0, 1).unwrap();
        assert_eq!(noisy.subgradient(&[0.5, 0.5], 3), expected);
    }

    #[test]
    fn noise_is_unbiased_and_bounded() {
        let noisy = Noisy::new(quad(), 1.5, 9).unwrap();
        let w = [0.5, 0.5];
        let truth = noisy.exact_gradient(&w).unwrap();
        let l = noisy.lipschitz().unwrap();
        let draws = 100_000u64;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for q in 0..draws {
            let g = noisy.subgradient(&w, q);
            for i in 0..2 {
                assert!(g.values[i].abs() <= l[i]);
                sum[i] += g.values[i];
                sq[i] += g.values[i] * g.values[i];
            }
        }
        for i in 0..2 {
            let m = sum[i] / draws as f64;
            let se = ((sq[i] / draws as f64 - m * m) / draws as f64).sqrt();
            assert!((m - truth[i]).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn bounds_hold_near_the_box_edge() {
        let noisy = Noisy::new(quad(), 100.0, 2).unwrap();
        let l = noisy.lipschitz().unwrap();
        for q in 0..1000 {
            let g = noisy.subgradient(&[-4.0, 4.0], q);
            assert!(g.values.iter().zip(&l).all(|(v, b)| v.abs() <= *b));
        }
    }

    struct Unbounded;
    impl Problem for Unbounded {
        fn name(&self) -> String {
            "unbounded".into()
        }
        fn dim(&self) -> usize {
            1
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn evaluate(&self, w: &[f64]) -> f64 {
            w[0]
        }
        fn subgradient(&self, _w: &[f64], _q: u64) -> GradientSample {
            GradientSample::objective(vec![1.0])
        }
    }

    #[test]
    fn requires_bounds() {
        assert!(Noisy::new(Box::new(Unbounded), 0.1, 0).is_err());
    }
}
