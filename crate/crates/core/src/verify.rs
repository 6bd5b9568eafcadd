//! Self-checks run by `cocob-bench verify`.
//!
//! Every check draws its inputs from a seeded generator and reports one
//! [`CheckOutcome`]; none of them panic on failure.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cocob_backprop::BackpropBetState;
use crate::coin_betting::{conjugate_bound_check, wealth_recurrence_check, CoordinateBetState};
use crate::small_net::gradient_check;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Sizes of the randomized suites.
#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub seed: u64,
    pub recurrence_prefixes: usize,
    pub conjugate_triples: usize,
    pub wealth_streams: usize,
    pub scale_streams: usize,
    pub first_step_triples: usize,
    pub gradient_seeds: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            recurrence_prefixes: 10_000,
            conjugate_triples: 1_000,
            wealth_streams: 10_000,
            scale_streams: 100,
            first_step_triples: 100,
            gradient_seeds: 5,
        }
    }
}

/// A bound `L` log-uniform on `[0.01, 100]` and `len` outcomes in `[−L, L]`,
/// a quarter of them pinned to `±L` or `0`.
pub fn random_stream<R: Rng + ?Sized>(rng: &mut R, len: usize) -> (f64, Vec<f64>) {
    let bound = 10f64.powf(rng.random_range(-2.0..2.0));
    let outcomes = (0..len)
        .map(|_| match rng.random_range(0..8) {
            0 => bound,
            1 => -bound,
            2 => 0.0,
            _ => rng.random_range(-bound..=bound),
        })
        .collect();
    (bound, outcomes)
}

pub fn golden_trace() -> CheckOutcome {
    let mut state = CoordinateBetState::new(0.0, 1.0).expect("valid bound");
    let mut iterates = vec![state.w];
    for _ in 0..2 {
        // F(x) = |x − 10|, so the negative gradient is +1 left of the target.
        let g = if state.w < 10.0 { 1.0 } else { -1.0 };
        state.step(g).expect("|g| = L");
        iterates.push(state.w);
    }
    let expected = [0.0, (1.0_f64 / 3.0).tanh(), 0.5_f64.tanh() * (1.0 + (1.0_f64 / 3.0).tanh())];
    let err = iterates.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    CheckOutcome::new("golden trace", err <= 1e-12, format!("max abs error {err:e}"))
}

pub fn wealth_recurrence_fuzz(a: f64, prefixes: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..prefixes {
        let len = rng.random_range(1..=50);
        let (bound, prefix) = random_stream(&mut rng, len);
        if !wealth_recurrence_check(a, bound, &prefix).unwrap_or(false) {
            failures += 1;
        }
    }
    CheckOutcome::new(
        &format!("wealth recurrence (a = {a})"),
        failures == 0,
        format!("{failures} of {prefixes} prefixes failed"),
    )
}

pub fn conjugate_bound_fuzz(triples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..triples {
        let alpha = 10f64.powf(rng.random_range(-2.0..2.0));
        let beta = 10f64.powf(rng.random_range(-2.0..2.0));
        let y = rng.random_range(-100.0..100.0);
        match conjugate_bound_check(alpha, beta, y) {
            Ok((numeric, closed)) => worst = worst.max(numeric - closed),
            Err(_) => worst = f64::INFINITY,
        }
    }
    CheckOutcome::new(
        "conjugate bound",
        worst <= 1e-8,
        format!("largest excess of numeric over closed form {worst:e}"),
    )
}

pub fn wealth_properties(streams: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..streams {
        let len = rng.random_range(1..=100);
        let (bound, outcomes) = random_stream(&mut rng, len);
        let w1 = rng.random_range(-5.0..5.0);
        let mut state = CoordinateBetState::new(w1, bound).expect("valid bound");
        for g in outcomes {
            state.step(g).expect("admissible");
            if !(state.wealth() > 0.0 && state.wealth() >= state.wealth_lower_bound()) {
                failures += 1;
                break;
            }
        }
    }
    CheckOutcome::new(
        "wealth positivity and lower bound",
        failures == 0,
        format!("{failures} of {streams} streams failed"),
    )
}

/// Worst relative gap between iterates driven by `g` and by `c·g`.
pub fn scale_freeness(streams: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let rel = |a: f64, b: f64| {
        let scale = a.abs().max(b.abs());
        if scale == 0.0 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    };
    for _ in 0..streams {
        let len = rng.random_range(1..=100);
        let (bound, outcomes) = random_stream(&mut rng, len);
        let w1 = rng.random_range(-5.0..5.0);
        let alpha = rng.random_range(2.0..200.0);
        for c in [1e-3, 1.0, 1e3] {
            let mut plain = CoordinateBetState::new(w1, bound).expect("valid");
            let mut scaled = CoordinateBetState::new(w1, c * bound).expect("valid");
            let mut bp_plain = BackpropBetState::new(w1, alpha).expect("valid");
            let mut bp_scaled = BackpropBetState::new(w1, alpha).expect("valid");
            for &g in &outcomes {
                plain.step(g).expect("admissible");
                scaled.step(c * g).expect("admissible");
                bp_plain.step(g).expect("finite");
                bp_scaled.step(c * g).expect("finite");
                worst = worst.max(rel(plain.w, scaled.w)).max(rel(bp_plain.w, bp_scaled.w));
            }
        }
    }
    CheckOutcome::new(
        "scale-freeness",
        worst <= 1e-12,
        format!("worst relative iterate gap {worst:e}"),
    )
}

pub fn backprop_first_step(triples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..triples {
        let w1 = rng.random_range(-10.0..10.0);
        let g = {
            let m = 10f64.powf(rng.random_range(-6.0..6.0));
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        };
        let alpha = rng.random_range(2.0..1000.0);
        let mut state = BackpropBetState::new(w1, alpha).expect("valid");
        state.step(g).expect("finite");
        let expected = g.signum() / alpha;
        if state.offset() != expected || state.w != w1 + expected {
            failures += 1;
        }
    }
    CheckOutcome::new(
        "backprop first step",
        failures == 0,
        format!("{failures} of {triples} triples differ from sgn(g)/alpha"),
    )
}

pub fn network_gradients(seeds: u64) -> CheckOutcome {
    let mut worst = 0.0_f64;
    for seed in 0..seeds {
        worst = worst.max(gradient_check(&[10, 50, 50, 3], seed, 10, 1e-6).unwrap_or(f64::INFINITY));
    }
    CheckOutcome::new(
        "network gradient check",
        worst <= 1e-4,
        format!("worst relative error {worst:e} over {seeds} seeds"),
    )
}

pub fn run_all(config: &VerifyConfig) -> Vec<CheckOutcome> {
    let s = config.seed;
    vec![
        golden_trace(),
        wealth_recurrence_fuzz(2.0, config.recurrence_prefixes, s),
        wealth_recurrence_fuzz(3.0, config.recurrence_prefixes, s.wrapping_add(1)),
        conjugate_bound_fuzz(config.conjugate_triples, s.wrapping_add(2)),
        wealth_properties(config.wealth_streams, s.wrapping_add(3)),
        scale_freeness(config.scale_streams, s.wrapping_add(4)),
        backprop_first_step(config.first_step_triples, s.wrapping_add(5)),
        network_gradients(config.gradient_seeds),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let config = VerifyConfig {
            seed: 11,
            recurrence_prefixes: 300,
            conjugate_triples: 100,
            wealth_streams: 300,
            scale_streams: 10,
            first_step_triples: 50,
            gradient_seeds: 1,
        };
        for outcome in run_all(&config) {
            assert!(outcome.passed, "{outcome}");
        }
    }

    #[test]
    fn streams_are_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (bound, outcomes) = random_stream(&mut rng, 20);
            assert!(outcomes.iter().all(|g| g.abs() <= bound));
        }
    }
}
