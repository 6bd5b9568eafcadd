//! Continuous coin betting (COCOB) with known per-coordinate gradient bounds.
//!
//! Each coordinate plays an independent betting game. The outcome of round `t`
//! is the coordinate of the negative (stochastic) subgradient observed at the
//! current iterate, and the iterate itself is the signed amount of money bet:
//!
//! ```text
//! G      <- G + |g|
//! reward <- reward + (w - w1) * g
//! theta  <- theta + g
//! w      <- w1 + tanh(theta / (G + L)) / L * (L + reward)
//! ```
//!
//! `tanh(x)` is used in place of the equivalent `2 * sigmoid(2x) - 1`.
//!
//! Besides the optimizer, this module carries executable forms of the
//! convergence guarantee: the wealth lower bound, the per-coordinate
//! suboptimality bound, and numeric checks of the two supporting inequalities
//! (the conjugate bound and the wealth recurrence).

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::optimizer::Optimizer;
use crate::{Error, Result};

/// Which gradient a [`GradientSample`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    /// Values are a (sub)gradient of the objective `F`.
    ObjectiveGradient,
    /// Values are a (sub)gradient of `-F`, i.e. the betting outcome.
    NegativeGradient,
}

/// A per-coordinate stochastic (sub)gradient with an explicit sign convention.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub values: Vec<f64>,
    pub convention: SignConvention,
}

impl GradientSample {
    pub fn objective(values: Vec<f64>) -> Self {
        Self {
            values,
            convention: SignConvention::ObjectiveGradient,
        }
    }

    pub fn negative(values: Vec<f64>) -> Self {
        Self {
            values,
            convention: SignConvention::NegativeGradient,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Coordinate `i` of `-∇F`.
    #[inline]
    pub fn negative_at(&self, i: usize) -> f64 {
        match self.convention {
            SignConvention::ObjectiveGradient => -self.values[i],
            SignConvention::NegativeGradient => self.values[i],
        }
    }

    /// Coordinate `i` of `∇F`.
    #[inline]
    pub fn objective_at(&self, i: usize) -> f64 {
        -self.negative_at(i)
    }

    pub fn to_negative(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.negative_at(i)).collect()
    }

    pub fn to_objective(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.objective_at(i)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Checks the dimension and that every entry is finite.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(coordinate) => Err(Error::InvalidGradient {
                coordinate,
                value: self.values[coordinate],
            }),
            None => Ok(()),
        }
    }
}

/// Betting ledger of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateBetState {
    /// Gradient magnitude bound `L`; also the initial endowment.
    pub bound: f64,
    /// `G = L + Σ|g|`.
    pub abs_sum: f64,
    /// `Σ (w_t - w1) g_t`.
    pub reward: f64,
    /// `Σ g`.
    pub theta: f64,
    pub w1: f64,
    pub w: f64,
}

impl CoordinateBetState {
    pub fn new(w1: f64, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::config(format!(
                "gradient bound must be positive and finite, got {bound}"
            )));
        }
        if !w1.is_finite() {
            return Err(Error::config(format!("initial point must be finite, got {w1}")));
        }
        Ok(Self {
            bound,
            abs_sum: bound,
            reward: 0.0,
            theta: 0.0,
            w1,
            w: w1,
        })
    }

    /// Rebuilds a state from its aggregates; the iterate is recomputed.
    pub fn from_aggregates(w1: f64, bound: f64, theta: f64, abs_sum: f64, reward: f64) -> Self {
        let mut state = Self {
            bound,
            abs_sum,
            reward,
            theta,
            w1,
            w: w1,
        };
        state.w = state.next_iterate();
        state
    }

    /// Fraction of wealth bet on the next round, `tanh(θ/(G+L)) / L`.
    pub fn betting_fraction(&self) -> f64 {
        (self.theta / (self.abs_sum + self.bound)).tanh() / self.bound
    }

    fn next_iterate(&self) -> f64 {
        // tanh(.) * (L + reward) / L keeps the first-round bet exact when reward = 0.
        let signed = (self.theta / (self.abs_sum + self.bound)).tanh();
        self.w1 + signed * ((self.bound + self.reward) / self.bound)
    }

    fn accumulate(&mut self, g: f64) {
        self.abs_sum += g.abs();
        self.reward += (self.w - self.w1) * g;
        self.theta += g;
    }

    /// One COCOB round with outcome `g` (negative-gradient convention).
    pub fn step(&mut self, g: f64) -> Result<()> {
        self.check_range(0, g)?;
        self.accumulate(g);
        self.w = self.next_iterate();
        Ok(())
    }

    /// One round of the time-normalized KT bettor; `t` is the round just played.
    pub fn kt_step(&mut self, g: f64, t: u64) -> Result<()> {
        self.check_range(0, g)?;
        self.accumulate(g);
        let fraction = self.theta / ((t + 1) as f64 * self.bound);
        self.w = self.w1 + fraction * (self.bound + self.reward);
        Ok(())
    }

    fn check_range(&self, coordinate: usize, g: f64) -> Result<()> {
        if !g.is_finite() {
            return Err(Error::InvalidGradient {
                coordinate,
                value: g,
            });
        }
        if g.abs() > self.bound {
            return Err(Error::GradientRange {
                coordinate,
                magnitude: g.abs(),
                bound: self.bound,
            });
        }
        Ok(())
    }

    /// Initial endowment plus accumulated reward.
    pub fn wealth(&self) -> f64 {
        self.bound + self.reward
    }

    /// `L · exp(θ²/(2L(G+L)) − ½ ln(G/L))`, a lower bound on the wealth of any
    /// admissible history ending in this state.
    pub fn wealth_lower_bound(&self) -> f64 {
        let l = self.bound;
        let exponent =
            self.theta * self.theta / (2.0 * l * (self.abs_sum + l)) - 0.5 * (self.abs_sum / l).ln();
        l * exponent.exp()
    }
}

/// Fresh per-coordinate states anchored at `w1` with bounds `bounds`.
pub fn cocob_init(w1: &[f64], bounds: &[f64]) -> Result<Vec<CoordinateBetState>> {
    if w1.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: w1.len(),
            found: bounds.len(),
        });
    }
    w1.iter()
        .zip(bounds)
        .map(|(&w, &l)| CoordinateBetState::new(w, l))
        .collect()
}

fn check_sample(states: &[CoordinateBetState], g: &GradientSample) -> Result<()> {
    g.validate(states.len())?;
    for (i, state) in states.iter().enumerate() {
        state.check_range(i, g.negative_at(i))?;
    }
    Ok(())
}

/// Applies one COCOB round to every coordinate. On error no state is modified.
pub fn cocob_step(states: &mut [CoordinateBetState], g: &GradientSample) -> Result<()> {
    check_sample(states, g)?;
    for (i, state) in states.iter_mut().enumerate() {
        state.accumulate(g.negative_at(i));
        state.w = state.next_iterate();
    }
    Ok(())
}

/// Applies one KT-bettor round (`t ≥ 1`) to every coordinate.
pub fn kt_step(states: &mut [CoordinateBetState], g: &GradientSample, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::config("round index starts at 1"));
    }
    check_sample(states, g)?;
    for (i, state) in states.iter_mut().enumerate() {
        state.kt_step(g.negative_at(i), t)?;
    }
    Ok(())
}

/// COCOB as an [`Optimizer`].
#[derive(Debug, Clone)]
pub struct Cocob {
    states: Vec<CoordinateBetState>,
    params: Vec<f64>,
}

impl Cocob {
    pub fn new(w1: &[f64], bounds: &[f64]) -> Result<Self> {
        let states = cocob_init(w1, bounds)?;
        Ok(Self {
            params: w1.to_vec(),
            states,
        })
    }

    pub fn with_uniform_bound(w1: &[f64], bound: f64) -> Result<Self> {
        Self::new(w1, &vec![bound; w1.len()])
    }

    pub fn states(&self) -> &[CoordinateBetState] {
        &self.states
    }

    pub fn initial_point(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.w1).collect()
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.bound).collect()
    }

    pub fn abs_sums(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.abs_sum).collect()
    }

    fn sync_params(&mut self) {
        for (p, s) in self.params.iter_mut().zip(&self.states) {
            *p = s.w;
        }
    }
}

impl Optimizer for Cocob {
    fn name(&self) -> &'static str {
        "cocob"
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn step(&mut self, grad: &GradientSample) -> Result<()> {
        cocob_step(&mut self.states, grad)?;
        self.sync_params();
        Ok(())
    }
}

/// COCOB that clamps out-of-range outcomes into `[-L, L]` instead of failing.
///
/// Clamping voids the convergence certificate; for exploratory use only.
#[derive(Debug, Clone)]
pub struct PermissiveCocob {
    inner: Cocob,
    clamped: u64,
}

impl PermissiveCocob {
    pub fn new(w1: &[f64], bounds: &[f64]) -> Result<Self> {
        Ok(Self {
            inner: Cocob::new(w1, bounds)?,
            clamped: 0,
        })
    }

    /// Number of coordinates clamped so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamped
    }

    pub fn states(&self) -> &[CoordinateBetState] {
        self.inner.states()
    }
}

impl Optimizer for PermissiveCocob {
    fn name(&self) -> &'static str {
        "cocob-permissive"
    }

    fn params(&self) -> &[f64] {
        self.inner.params()
    }

    fn step(&mut self, grad: &GradientSample) -> Result<()> {
        grad.validate(self.inner.states.len())?;
        let mut outcomes = grad.to_negative();
        for (i, (g, s)) in outcomes.iter_mut().zip(&self.inner.states).enumerate() {
            if g.abs() > s.bound {
                warn!("clamping coordinate {i}: |{g}| > {}", s.bound);
                *g = g.clamp(-s.bound, s.bound);
                self.clamped += 1;
            }
        }
        self.inner.step(&GradientSample::negative(outcomes))
    }
}

/// The KT bettor as an [`Optimizer`], tracking its own round counter.
#[derive(Debug, Clone)]
pub struct KtBettor {
    states: Vec<CoordinateBetState>,
    params: Vec<f64>,
    round: u64,
}

impl KtBettor {
    pub fn new(w1: &[f64], bounds: &[f64]) -> Result<Self> {
        Ok(Self {
            states: cocob_init(w1, bounds)?,
            params: w1.to_vec(),
            round: 0,
        })
    }

    pub fn states(&self) -> &[CoordinateBetState] {
        &self.states
    }
}

impl Optimizer for KtBettor {
    fn name(&self) -> &'static str {
        "kt"
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn step(&mut self, grad: &GradientSample) -> Result<()> {
        kt_step(&mut self.states, grad, self.round + 1)?;
        self.round += 1;
        for (p, s) in self.params.iter_mut().zip(&self.states) {
            *p = s.w;
        }
        Ok(())
    }
}

/// Evaluated suboptimality bound for a finished run next to the observed gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub rhs: f64,
    pub observed_gap: f64,
    pub tau: f64,
    pub iterations: u64,
}

impl BoundCertificate {
    pub fn holds(&self) -> bool {
        self.observed_gap <= self.rhs
    }
}

/// Right-hand side of the COCOB suboptimality guarantee after `iterations` rounds:
///
/// ```text
/// Σ_i [L_i + |w*_i − w1_i| √(L_i (G_i + L_i) ln(1 + (G_i + L_i)² (w*_i − w1_i)² / L_i²))] / (τ T)
/// ```
///
/// `abs_sums` are the final `G` values of the run.
pub fn suboptimality_bound(
    w_star: &[f64],
    w1: &[f64],
    bounds: &[f64],
    abs_sums: &[f64],
    tau: f64,
    iterations: u64,
) -> Result<f64> {
    let d = w_star.len();
    for len in [w1.len(), bounds.len(), abs_sums.len()] {
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: len,
            });
        }
    }
    if !(tau > 0.0) {
        return Err(Error::config(format!("tau must be positive, got {tau}")));
    }
    if iterations == 0 {
        return Err(Error::config("iteration count must be at least 1"));
    }
    let total: f64 = (0..d)
        .map(|i| {
            let l = bounds[i];
            let gl = abs_sums[i] + l;
            let dist = (w_star[i] - w1[i]).abs();
            let log_term = (gl * gl * dist * dist / (l * l)).ln_1p();
            l + dist * (l * gl * log_term).sqrt()
        })
        .sum();
    Ok(total / (tau * iterations as f64))
}

/// Numeric conjugate of `f(x) = β exp(x²/(2α))` at `y`, paired with the closed-form
/// upper bound `|y| √(α ln(α y²/β² + 1)) − β`.
///
/// The maximizer of `x y − f(x)` solves `(β/α) x exp(x²/(2α)) = |y|`, found by
/// bisection to `1e-10`.
pub fn conjugate_bound_check(alpha: f64, beta: f64, y: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::config(format!(
            "alpha and beta must be positive, got alpha={alpha}, beta={beta}"
        )));
    }
    let target = y.abs();
    let slope = |x: f64| beta / alpha * x * (x * x / (2.0 * alpha)).exp();

    let mut lo = 0.0_f64;
    let mut hi = alpha.sqrt().max(1.0);
    while slope(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = if target == 0.0 { 0.0 } else { 0.5 * (lo + hi) };
    let numeric = x * target - beta * (x * x / (2.0 * alpha)).exp();
    let closed = target * (alpha * (alpha * y * y / (beta * beta)).ln_1p()).sqrt() - beta;
    Ok((numeric, closed))
}

/// Checks the one-round wealth recurrence at the last round of `prefix`.
///
/// With `G_t = L + Σ_{j≤t} |g_j|`, `S_t = Σ_{j≤t} |g_j| / (a (G_{j−1} + L))` and the
/// round-`t` bet `β_t = tanh(2 θ_{t−1} / (a (G_{t−1} + L))) / L` (COCOB's bet when
/// `a = 2`), the checked inequality is
///
/// ```text
/// (1 + β_t g_t) exp(θ²_{t−1} / (a L G_{t−1}) − S_{t−1}) ≥ exp(θ²_t / (a L G_t) − S_t)
/// ```
///
/// compared in log space with additive slack `1e-12`.
pub fn wealth_recurrence_check(a: f64, bound: f64, prefix: &[f64]) -> Result<bool> {
    if !(a >= 2.0) {
        return Err(Error::config(format!("a must be at least 2, got {a}")));
    }
    if !(bound > 0.0) {
        return Err(Error::config(format!("bound must be positive, got {bound}")));
    }
    if prefix.is_empty() {
        return Err(Error::config("gradient prefix must be nonempty"));
    }
    if let Some((coordinate, &g)) = prefix
        .iter()
        .enumerate()
        .find(|(_, g)| !(g.abs() <= bound))
    {
        return Err(Error::GradientRange {
            coordinate,
            magnitude: g.abs(),
            bound,
        });
    }

    let l = bound;
    let mut abs_sum = l;
    let mut theta = 0.0;
    let mut penalty = 0.0;
    let (last, history) = prefix.split_last().expect("nonempty");
    for &g in history {
        penalty += g.abs() / (a * (abs_sum + l));
        abs_sum += g.abs();
        theta += g;
    }

    let g = *last;
    let fraction = (2.0 * theta / (a * (abs_sum + l))).tanh() / l;
    let lhs = (fraction * g).ln_1p() + theta * theta / (a * l * abs_sum) - penalty;
    let penalty_next = penalty + g.abs() / (a * (abs_sum + l));
    let abs_sum_next = abs_sum + g.abs();
    let theta_next = theta + g;
    let rhs = theta_next * theta_next / (a * l * abs_sum_next) - penalty_next;
    Ok(lhs >= rhs - 1e-12)
}

/// How the reported point of a run is chosen from its iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterateSelection {
    /// The iterate after the final update.
    Last,
    /// Mean of the query points `w_1 .. w_T`.
    Average,
    /// `w_I` with `I` uniform in `1..=T`.
    RandomIndex,
}

impl std::str::FromStr for IterateSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Self::Last),
            "avg" | "average" => Ok(Self::Average),
            "rand" | "random" | "random-index" => Ok(Self::RandomIndex),
            other => Err(Error::config(format!("unknown iterate selection `{other}`"))),
        }
    }
}

/// Full history of a run: query points, the gradients observed there, and the
/// final iterate.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    pub gradients: Vec<GradientSample>,
    pub last: Vec<f64>,
}

impl Trajectory {
    pub fn new(start: Vec<f64>) -> Self {
        Self {
            points: Vec::new(),
            gradients: Vec::new(),
            last: start,
        }
    }

    /// Records the gradient observed at the current point and the next point.
    pub fn push(&mut self, gradient: GradientSample, next: Vec<f64>) {
        let point = std::mem::replace(&mut self.last, next);
        self.points.push(point);
        self.gradients.push(gradient);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn select<R: Rng + ?Sized>(&self, mode: IterateSelection, rng: &mut R) -> Vec<f64> {
        if self.points.is_empty() {
            return self.last.clone();
        }
        match mode {
            IterateSelection::Last => self.last.clone(),
            IterateSelection::Average => {
                let mut mean = vec![0.0; self.last.len()];
                for p in &self.points {
                    for (m, v) in mean.iter_mut().zip(p) {
                        *m += v;
                    }
                }
                let n = self.points.len() as f64;
                mean.iter_mut().for_each(|m| *m /= n);
                mean
            }
            IterateSelection::RandomIndex => {
                self.points[rng.random_range(0..self.points.len())].clone()
            }
        }
    }

    /// `η̃_t = w_t √(Σ_{i≤t} g_i²)` for one coordinate.
    pub fn effective_learning_rate(&self, coordinate: usize) -> Result<Vec<f64>> {
        effective_learning_rate(self, coordinate)
    }
}

pub fn effective_learning_rate(trajectory: &Trajectory, coordinate: usize) -> Result<Vec<f64>> {
    if trajectory.is_empty() {
        return Err(Error::config("trajectory is empty"));
    }
    let dim = trajectory.last.len();
    if coordinate >= dim {
        return Err(Error::CoordinateOutOfRange {
            index: coordinate,
            dim,
        });
    }
    let mut sum_sq = 0.0;
    Ok(trajectory
        .points
        .iter()
        .zip(&trajectory.gradients)
        .map(|(w, g)| {
            let gi = g.values[coordinate];
            sum_sq += gi * gi;
            w[coordinate] * sum_sq.sqrt()
        })
        .collect())
}
