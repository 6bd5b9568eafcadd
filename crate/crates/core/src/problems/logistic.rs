use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{query_rng, Optimum, Problem};
use crate::coin_betting::GradientSample;
use crate::{Error, Result};

const OPTIMUM_GRAD_TOL: f64 = 1e-10;
const MAX_NEWTON_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub samples: usize,
    pub dim: usize,
    pub seed: u64,
    /// Label-flip probability.
    pub noise: f64,
    /// Minibatch size, sampled with replacement; `0` means full batch.
    pub batch: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            dim: 10,
            seed: 0,
            noise: 0.1,
            batch: 0,
        }
    }
}

/// Mean logistic loss on a synthetic binary dataset with labels in `{−1, +1}`.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    config: LogisticConfig,
    /// Row-major `samples × dim`.
    features: Vec<f64>,
    labels: Vec<f64>,
    bounds: Vec<f64>,
    optimum: Optimum,
}

/// `ln(1 + e^{−m})` without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `σ(−m) = 1 / (1 + e^{m})`.
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

impl LogisticProblem {
    pub fn new(config: LogisticConfig) -> Result<Self> {
        if config.samples == 0 || config.dim == 0 {
            return Err(Error::config("logistic problem needs at least one sample and one feature"));
        }
        if !(0.0..=0.5).contains(&config.noise) {
            return Err(Error::config(format!(
                "label-flip probability must lie in [0, 0.5], got {}",
                config.noise
            )));
        }
        let (n, d) = (config.samples, config.dim);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let truth: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let margin: f64 = row.iter().zip(&truth).map(|(x, w)| x * w).sum();
            let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < config.noise {
                y = -y;
            }
            features.extend(row);
            labels.push(y);
        }
        let bounds = (0..d)
            .map(|i| (0..n).map(|j| features[j * d + i].abs()).fold(0.0, f64::max))
            .collect();
        let mut problem = Self {
            config,
            features,
            labels,
            bounds,
            optimum: Optimum {
                point: vec![0.0; d],
                value: std::f64::consts::LN_2,
            },
        };
        problem.optimum = problem.solve_optimum()?;
        Ok(problem)
    }

    pub fn config(&self) -> &LogisticConfig {
        &self.config
    }

    fn row(&self, j: usize) -> &[f64] {
        let d = self.config.dim;
        &self.features[j * d..(j + 1) * d]
    }

    fn margin(&self, j: usize, w: &[f64]) -> f64 {
        self.labels[j] * self.row(j).iter().zip(w).map(|(x, wi)| x * wi).sum::<f64>()
    }

    fn gradient_over(&self, w: &[f64], rows: impl Iterator<Item = usize>) -> Vec<f64> {
        let mut grad = vec![0.0; self.config.dim];
        let mut count = 0usize;
        for j in rows {
            let coef = -self.labels[j] * sigmoid_neg(self.margin(j, w));
            for (g, x) in grad.iter_mut().zip(self.row(j)) {
                *g += coef * x;
            }
            count += 1;
        }
        let scale = 1.0 / count as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        grad
    }

    pub fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        self.gradient_over(w, 0..self.config.samples)
    }

    /// Damped Newton iterations on the full-batch loss until the gradient norm
    /// reaches `1e-10`.
    fn solve_optimum(&self) -> Result<Optimum> {
        let (n, d) = (self.config.samples, self.config.dim);
        let mut w = vec![0.0; d];
        let mut value = self.evaluate(&w);
        for _ in 0..MAX_NEWTON_ITERS {
            let grad = self.full_gradient(&w);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm <= OPTIMUM_GRAD_TOL {
                return Ok(Optimum { point: w, value });
            }
            let mut hessian = DMatrix::<f64>::zeros(d, d);
            for j in 0..n {
                let p = sigmoid_neg(self.margin(j, &w));
                let weight = p * (1.0 - p) / n as f64;
                let x = DVector::from_column_slice(self.row(j));
                hessian.ger(weight, &x, &x, 1.0);
            }
            let rhs = DVector::from_vec(grad.clone());
            let direction = match hessian.clone().cholesky() {
                Some(chol) => chol.solve(&rhs),
                None => rhs,
            };
            let slope: f64 = direction.iter().zip(&grad).map(|(a, b)| a * b).sum();
            if norm < 1e-6 {
                // Loss differences are below rounding here; accept the full
                // Newton step if it shrinks the gradient.
                let trial: Vec<f64> = w.iter().zip(direction.iter()).map(|(wi, di)| wi - di).collect();
                let trial_norm = self.full_gradient(&trial).iter().map(|g| g * g).sum::<f64>().sqrt();
                if trial_norm < norm {
                    value = self.evaluate(&trial);
                    w = trial;
                    continue;
                }
                break;
            }
            let mut step = 1.0;
            loop {
                let trial: Vec<f64> = w.iter().zip(direction.iter()).map(|(wi, di)| wi - step * di).collect();
                let trial_value = self.evaluate(&trial);
                if trial_value <= value - 1e-4 * step * slope || step < 1e-12 {
                    if trial_value <= value {
                        w = trial;
                        value = trial_value;
                    }
                    break;
                }
                step *= 0.5;
            }
            if step < 1e-12 {
                break;
            }
        }
        let norm = self.full_gradient(&w).iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm <= OPTIMUM_GRAD_TOL {
            Ok(Optimum { point: w, value })
        } else {
            Err(Error::config(format!(
                "logistic optimum not found (gradient norm {norm:e}); the data may be separable"
            )))
        }
    }
}

impl Problem for LogisticProblem {
    fn name(&self) -> String {
        format!(
            "logreg(n={},d={},batch={})",
            self.config.samples, self.config.dim, self.config.batch
        )
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.config.dim]
    }

    fn evaluate(&self, w: &[f64]) -> f64 {
        let n = self.config.samples;
        (0..n).map(|j| softplus_neg(self.margin(j, w))).sum::<f64>() / n as f64
    }

    fn subgradient(&self, w: &[f64], query: u64) -> GradientSample {
        let grad = if self.config.batch == 0 {
            self.full_gradient(w)
        } else {
            let mut rng = query_rng(self.config.seed ^ 0x6c6f_6769_7374_6963, query);
            let n = self.config.samples;
            let rows: Vec<usize> = (0..self.config.batch).map(|_| rng.random_range(0..n)).collect();
            self.gradient_over(w, rows.into_iter())
        };
        GradientSample::objective(grad)
    }

    fn exact_gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(self.full_gradient(w))
    }

    fn optimum(&self) -> Option<Optimum> {
        Some(self.optimum.clone())
    }

    /// `max_j |x_{j,i}|`; the loss derivative is bounded by 1 in magnitude.
    fn lipschitz(&self) -> Option<Vec<f64>> {
        Some(self.bounds.clone())
    }

    fn tau(&self) -> Option<f64> {
        Some(1.0)
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn is_stochastic(&self) -> bool {
        self.config.batch != 0
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({ "logistic": self.config, "optimum_value": self.optimum.value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{max_fd_error, uniform_point};

    fn problem(batch: usize) -> LogisticProblem {
        LogisticProblem::new(LogisticConfig {
            samples: 200,
            dim: 10,
            seed: 4,
            noise: 0.1,
            batch,
        })
        .unwrap()
    }

    #[test]
    fn loss_at_origin_is_ln2() {
        let p = problem(0);
        assert!((p.evaluate(&[0.0; 10]) - std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = problem(0);
        let g0 = p.full_gradient(&[0.0; 10]);
        // At w = 0 every σ(−m) is ½: ∇F(0) = −½ mean(y_j x_j).
        for i in 0..10 {
            let expected = -0.5 * (0..200).map(|j| p.labels[j] * p.row(j)[i]).sum::<f64>() / 200.0;
            assert!((g0[i] - expected).abs() < 1e-15);
        }
        assert!(max_fd_error(&p, 20, 1e-6, |r| uniform_point(r, 10, -2.0, 2.0)) <= 1e-5);
    }

    #[test]
    fn optimum_is_stationary_and_minimal() {
        let p = problem(0);
        let opt = p.optimum().unwrap();
        let norm = p.full_gradient(&opt.point).iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm <= 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let w: Vec<f64> = opt.point.iter().map(|o| o + rng.random_range(-1.0..1.0)).collect();
            assert!(p.evaluate(&w) >= opt.value);
        }
    }

    #[test]
    fn gradients_respect_bounds() {
        let p = problem(8);
        let l = p.lipschitz().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for q in 0..500 {
            let w = uniform_point(&mut rng, 10, -5.0, 5.0);
            let g = p.subgradient(&w, q);
            assert!(g.values.iter().zip(&l).all(|(gi, li)| gi.abs() <= *li));
        }
    }

    #[test]
    fn minibatch_is_unbiased_and_seeded() {
        let p = problem(8);
        let w = vec![0.3; 10];
        let full = p.full_gradient(&w);
        let draws = 10_000u64;
        let mut mean = vec![0.0; 10];
        let mut sq = vec![0.0; 10];
        for q in 0..draws {
            let g = p.subgradient(&w, q);
            for i in 0..10 {
                mean[i] += g.values[i];
                sq[i] += g.values[i] * g.values[i];
            }
        }
        for i in 0..10 {
            let m = mean[i] / draws as f64;
            let var = sq[i] / draws as f64 - m * m;
            let se = (var / draws as f64).sqrt();
            assert!((m - full[i]).abs() <= 3.0 * se + 1e-12, "coord {i}: {m} vs {}", full[i]);
        }
        assert_eq!(p.subgradient(&w, 17), p.subgradient(&w, 17));
        assert_ne!(p.subgradient(&w, 17), p.subgradient(&w, 18));
    }

    #[test]
    fn invalid_sizes() {
        let bad = LogisticConfig {
            samples: 0,
            ..LogisticConfig::default()
        };
        assert!(LogisticProblem::new(bad).is_err());
    }
}
