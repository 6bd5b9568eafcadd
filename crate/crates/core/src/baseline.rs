//! Constant-learning-rate baselines: SGD, AdaGrad, RMSProp, Adadelta and Adam.
//!
//! All five take a learning rate so they can be tuned on the same grid.
//! Non-rate hyperparameters are pinned to common framework defaults.

use serde::{Deserialize, Serialize};

use crate::coin_betting::GradientSample;
use crate::optimizer::Optimizer;
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const RMSPROP_DECAY: f64 = 0.9;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADADELTA_RHO: f64 = 0.95;

/// The learning-rate grid used to tune every baseline.
pub fn standard_lr_grid() -> Vec<f64> {
    vec![
        0.00001, 0.000025, 0.00005, 0.000075, 0.0001, 0.00025, 0.0005, 0.00075, 0.001, 0.0025,
        0.005, 0.0075, 0.01, 0.02, 0.05, 0.075, 0.1,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Sgd,
    Adagrad,
    Rmsprop,
    Adadelta,
    Adam,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Sgd,
        BaselineKind::Adagrad,
        BaselineKind::Rmsprop,
        BaselineKind::Adadelta,
        BaselineKind::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Sgd => "sgd",
            BaselineKind::Adagrad => "adagrad",
            BaselineKind::Rmsprop => "rmsprop",
            BaselineKind::Adadelta => "adadelta",
            BaselineKind::Adam => "adam",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub learning_rate: f64,
    pub epsilon: f64,
    /// RMSProp decay.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Adadelta decay.
    pub rho: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            epsilon: DEFAULT_EPSILON,
            decay: RMSPROP_DECAY,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            rho: ADADELTA_RHO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        for (name, v) in [
            ("decay", self.decay),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("rho", self.rho),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-coordinate accumulators. Unused slots stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineState {
    /// AdaGrad sum of squares; RMSProp/Adadelta EMA of g²; Adam second moment.
    pub sq: Vec<f64>,
    /// Adam first moment; Adadelta EMA of squared updates.
    pub aux: Vec<f64>,
    pub steps: u64,
}

impl BaselineState {
    pub fn new(dim: usize) -> Self {
        Self {
            sq: vec![0.0; dim],
            aux: vec![0.0; dim],
            steps: 0,
        }
    }
}

/// One update of `w` with the objective gradient `g`.
pub fn baseline_step(
    config: &BaselineConfig,
    state: &mut BaselineState,
    w: &mut [f64],
    g: &GradientSample,
) -> Result<()> {
    g.validate(w.len())?;
    if state.sq.len() != w.len() || state.aux.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: state.sq.len(),
        });
    }
    let lr = config.learning_rate;
    let eps = config.epsilon;
    state.steps += 1;
    match config.kind {
        BaselineKind::Sgd => {
            for (i, wi) in w.iter_mut().enumerate() {
                *wi -= lr * g.objective_at(i);
            }
        }
        BaselineKind::Adagrad => {
            for (i, wi) in w.iter_mut().enumerate() {
                let gi = g.objective_at(i);
                state.sq[i] += gi * gi;
                *wi -= lr * gi / (state.sq[i].sqrt() + eps);
            }
        }
        BaselineKind::Rmsprop => {
            let rho = config.decay;
            for (i, wi) in w.iter_mut().enumerate() {
                let gi = g.objective_at(i);
                state.sq[i] = rho * state.sq[i] + (1.0 - rho) * gi * gi;
                *wi -= lr * gi / (state.sq[i].sqrt() + eps);
            }
        }
        BaselineKind::Adadelta => {
            let rho = config.rho;
            for (i, wi) in w.iter_mut().enumerate() {
                let gi = g.objective_at(i);
                state.sq[i] = rho * state.sq[i] + (1.0 - rho) * gi * gi;
                let update = -((state.aux[i] + eps).sqrt() / (state.sq[i] + eps).sqrt()) * gi;
                state.aux[i] = rho * state.aux[i] + (1.0 - rho) * update * update;
                *wi += lr * update;
            }
        }
        BaselineKind::Adam => {
            let (b1, b2) = (config.beta1, config.beta2);
            let t = state.steps as i32;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for (i, wi) in w.iter_mut().enumerate() {
                let gi = g.objective_at(i);
                state.aux[i] = b1 * state.aux[i] + (1.0 - b1) * gi;
                state.sq[i] = b2 * state.sq[i] + (1.0 - b2) * gi * gi;
                let m_hat = state.aux[i] / c1;
                let v_hat = state.sq[i] / c2;
                *wi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// A baseline as an [`Optimizer`].
#[derive(Debug, Clone)]
pub struct Baseline {
    config: BaselineConfig,
    state: BaselineState,
    params: Vec<f64>,
}

impl Baseline {
    pub fn new(config: BaselineConfig, w1: &[f64]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: BaselineState::new(w1.len()),
            params: w1.to_vec(),
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }
}

impl Optimizer for Baseline {
    fn name(&self) -> &'static str {
        self.config.kind.name()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn step(&mut self, grad: &GradientSample) -> Result<()> {
        baseline_step(&self.config, &mut self.state, &mut self.params, grad)
    }

    fn learning_rate(&self) -> Option<f64> {
        Some(self.config.learning_rate)
    }
}
