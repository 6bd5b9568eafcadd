//! COCOB-Backprop: coin betting for gradients whose range is not known in advance.
//!
//! Per coordinate, with `g` the negative gradient:
//!
//! ```text
//! L      <- max(L, |g|)
//! G      <- G + |g|
//! reward <- max(reward + (w - w1) * g, 0)
//! theta  <- theta + g
//! w      <- w1 + theta / (L * max(G + L, alpha * L)) * (L + reward)
//! ```
//!
//! The value produced by the last line is the point queried next. A coordinate
//! that has only ever seen zero gradients keeps `w = w1`.

use serde::{Deserialize, Serialize};

use crate::coin_betting::GradientSample;
use crate::optimizer::Optimizer;
use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackpropBetState {
    /// Largest `|g|` seen so far.
    pub max_abs: f64,
    /// `Σ|g|`.
    pub abs_sum: f64,
    /// Clipped at zero after every round.
    pub reward: f64,
    pub theta: f64,
    pub w1: f64,
    pub w: f64,
    pub alpha: f64,
}

impl BackpropBetState {
    pub fn new(w1: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !w1.is_finite() {
            return Err(Error::config(format!("initial point must be finite, got {w1}")));
        }
        Ok(Self {
            max_abs: 0.0,
            abs_sum: 0.0,
            reward: 0.0,
            theta: 0.0,
            w1,
            w: w1,
            alpha,
        })
    }

    /// Displacement `w - w1` implied by the current aggregates.
    ///
    /// Written as `(θ/L) / max((G+L)/L, α) · (L+reward)/L`, which equals
    /// `θ/(L·max(G+L, αL))·(L+reward)` and evaluates the first step to exactly
    /// `±1/α`.
    pub fn offset(&self) -> f64 {
        let l = self.max_abs;
        if l == 0.0 {
            return 0.0;
        }
        let ratio = self.theta / l;
        let denom = ((self.abs_sum + l) / l).max(self.alpha);
        ratio / denom * ((l + self.reward) / l)
    }

    /// One round with outcome `g` (negative-gradient convention).
    pub fn step(&mut self, g: f64) -> Result<()> {
        if !g.is_finite() {
            return Err(Error::InvalidGradient {
                coordinate: 0,
                value: g,
            });
        }
        self.apply(g);
        Ok(())
    }

    fn apply(&mut self, g: f64) {
        self.max_abs = self.max_abs.max(g.abs());
        self.abs_sum += g.abs();
        self.reward = (self.reward + (self.w - self.w1) * g).max(0.0);
        self.theta += g;
        if self.max_abs > 0.0 {
            self.w = self.w1 + self.offset();
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 2.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("alpha must be at least 2, got {alpha}")))
    }
}

pub fn backprop_init(w1: &[f64], alpha: f64) -> Result<Vec<BackpropBetState>> {
    check_alpha(alpha)?;
    w1.iter().map(|&w| BackpropBetState::new(w, alpha)).collect()
}

/// Applies one round to every coordinate. On error no state is modified.
pub fn backprop_step(states: &mut [BackpropBetState], g: &GradientSample) -> Result<()> {
    g.validate(states.len())?;
    for (i, state) in states.iter_mut().enumerate() {
        state.apply(g.negative_at(i));
    }
    Ok(())
}

/// COCOB-Backprop as an [`Optimizer`]. Reports the last iterate.
#[derive(Debug, Clone)]
pub struct CocobBackprop {
    states: Vec<BackpropBetState>,
    params: Vec<f64>,
}

impl CocobBackprop {
    pub fn new(w1: &[f64], alpha: f64) -> Result<Self> {
        Ok(Self {
            states: backprop_init(w1, alpha)?,
            params: w1.to_vec(),
        })
    }

    pub fn with_default_alpha(w1: &[f64]) -> Result<Self> {
        Self::new(w1, DEFAULT_ALPHA)
    }

    pub fn states(&self) -> &[BackpropBetState] {
        &self.states
    }
}

impl Optimizer for CocobBackprop {
    fn name(&self) -> &'static str {
        "cocob-backprop"
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn step(&mut self, grad: &GradientSample) -> Result<()> {
        backprop_step(&mut self.states, grad)?;
        for (p, s) in self.params.iter_mut().zip(&self.states) {
            *p = s.w;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn init_zeroes_accumulators() {
        let s = backprop_init(&[0.5], 100.0).unwrap();
        assert_eq!(
            s[0],
            BackpropBetState {
                max_abs: 0.0,
                abs_sum: 0.0,
                reward: 0.0,
                theta: 0.0,
                w1: 0.5,
                w: 0.5,
                alpha: 100.0
            }
        );
        assert!(matches!(
            backprop_init(&[0.5], 1.5),
            Err(Error::InvalidConfiguration(_))
        ));
        let big = backprop_init(&vec![0.0; 1_000_000], 100.0).unwrap();
        assert_eq!(big.len(), 1_000_000);
    }

    #[test]
    fn first_two_steps_hand_evaluated() {
        let mut s = backprop_init(&[0.5], 100.0).unwrap();
        // ∇F = +2
        backprop_step(&mut s, &GradientSample::objective(vec![2.0])).unwrap();
        assert_abs_diff_eq!(s[0].w, 0.49, epsilon = 1e-15);
        assert_eq!(s[0].offset(), -0.01);

        backprop_step(&mut s, &GradientSample::objective(vec![2.0])).unwrap();
        assert_eq!((s[0].max_abs, s[0].abs_sum, s[0].theta), (2.0, 4.0, -4.0));
        assert_abs_diff_eq!(s[0].reward, 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(s[0].w, 0.4798, epsilon = 1e-15);
    }

    #[test]
    fn zero_gradients_never_move() {
        let mut s = backprop_init(&[0.25, -3.0], 100.0).unwrap();
        for _ in 0..100 {
            backprop_step(&mut s, &GradientSample::objective(vec![0.0, 0.0])).unwrap();
        }
        assert_eq!((s[0].w, s[1].w), (0.25, -3.0));
        assert_eq!(s[0].max_abs, 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = backprop_init(&[0.0, 0.0], 100.0).unwrap();
        let before = s.clone();
        let err = backprop_step(&mut s, &GradientSample::objective(vec![1.0, f64::NAN])).unwrap_err();
        assert!(matches!(err, Error::InvalidGradient { coordinate: 1, .. }));
        assert_eq!(s, before);
    }

    #[test]
    fn linearized_fraction_tracks_tanh_for_small_ratio() {
        // tanh(x)/x ≥ 1 − x²/3: relative gap ≤ 0.34% at |x| ≤ 0.1 and ≤ 0.1% at |x| ≤ 0.05.
        for k in 1..=1000 {
            let x = 0.1 * k as f64 / 1000.0;
            let rel = (x - x.tanh()).abs() / x.tanh();
            assert!(rel <= x * x / 3.0 * 1.01 + 1e-15);
            if x <= 0.05 {
                assert!(rel <= 1e-3);
            }
        }
    }

    proptest! {
        #[test]
        fn reward_nonnegative_and_finite(
            w1 in -10.0f64..10.0,
            alpha in 2.0f64..1000.0,
            stream in prop::collection::vec(-1e3f64..1e3, 1..200),
        ) {
            let mut s = BackpropBetState::new(w1, alpha).unwrap();
            let mut t = 0.0;
            for g in stream {
                s.step(g).unwrap();
                t += 1.0;
                prop_assert!(s.reward >= 0.0);
                prop_assert!(s.w.is_finite());
                prop_assert!(s.abs_sum <= t * s.max_abs * (1.0 + 1e-12));
                if s.max_abs > 0.0 {
                    prop_assert!(s.abs_sum >= s.max_abs);
                    let reach = s.theta.abs() / (s.max_abs * (s.abs_sum + s.max_abs))
                        * (s.max_abs + s.reward);
                    prop_assert!((s.w - s.w1).abs() <= reach * (1.0 + 1e-12) + 1e-12);
                }
            }
        }

        #[test]
        fn first_step_moves_one_over_alpha(
            w1 in -100.0f64..100.0,
            g in prop_oneof![-1e6f64..-1e-6, 1e-6f64..1e6],
            alpha in 2.0f64..1e4,
        ) {
            let mut s = BackpropBetState::new(w1, alpha).unwrap();
            s.step(g).unwrap();
            prop_assert_eq!(s.offset(), g.signum() / alpha);
        }
    }
}
