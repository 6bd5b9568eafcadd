//! Learning-rate-free stochastic optimization by coin betting.
//!
//! The crate is organized around a small set of modules:
//!
//! - [`coin_betting`]: COCOB with known per-coordinate gradient bounds, the KT
//!   reference bettor, wealth accounting and numeric checks of the convergence
//!   guarantee and its supporting inequalities.
//! - [`cocob_backprop`]: the adaptive-scale variant for gradients of unknown range.
//! - [`baseline`]: SGD, AdaGrad, RMSProp, Adadelta and Adam behind the same step
//!   interface, plus the 17-point learning-rate grid used for tuning.
//! - [`problems`]: objectives with gradient oracles, optima and Lipschitz metadata.
//! - [`small_net`]: a dense ReLU network with manual backpropagation.
//! - [`harness`]: seeded runs, grid searches, comparisons and CSV/JSON output.
//! - [`verify`]: self-checks shared by the `verify` subcommand.

pub mod baseline;
pub mod cocob_backprop;
pub mod coin_betting;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod problems;
pub mod small_net;
pub mod verify;

pub use error::{Error, Result};
pub use optimizer::Optimizer;
