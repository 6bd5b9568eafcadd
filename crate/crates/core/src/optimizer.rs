//! Common step interface shared by the betting and baseline optimizers.

use crate::coin_betting::GradientSample;
use crate::Result;

/// A first-order optimizer that owns its parameter vector.
///
/// `params` is the point at which the next gradient is queried.
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    fn params(&self) -> &[f64];

    fn step(&mut self, grad: &GradientSample) -> Result<()>;

    /// `None` for the learning-rate-free optimizers.
    fn learning_rate(&self) -> Option<f64> {
        None
    }
}
