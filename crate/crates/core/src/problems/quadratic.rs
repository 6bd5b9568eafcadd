use serde::{Deserialize, Serialize};

use super::{Optimum, Problem};
use crate::coin_betting::GradientSample;
use crate::{Error, Result};

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::config(format!(
                "degenerate box on coordinate {i}: [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.iter()
            .enumerate()
            .all(|(i, &v)| self.lower[i] <= v && v <= self.upper[i])
    }
}

/// `F(w) = ½ Σ s_i (w_i − c_i)²`, with gradient bounds taken over a box.
#[derive(Debug, Clone)]
pub struct Quadratic {
    center: Vec<f64>,
    scales: Vec<f64>,
    domain: DomainBox,
    start: Vec<f64>,
}

impl Quadratic {
    /// Starts at the box point closest to the origin.
    pub fn new(center: Vec<f64>, scales: Vec<f64>, domain: DomainBox) -> Result<Self> {
        let d = center.len();
        if scales.len() != d || domain.lower.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: if scales.len() != d { scales.len() } else { domain.lower.len() },
            });
        }
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::config(format!("scales must be positive, got {s}")));
        }
        if !domain.contains(&center) {
            return Err(Error::config("box must contain the center"));
        }
        let start = (0..d)
            .map(|i| 0.0_f64.clamp(domain.lower[i], domain.upper[i]))
            .collect();
        Ok(Self {
            center,
            scales,
            domain,
            start,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(&self.center)
            .zip(&self.scales)
            .map(|((wi, ci), si)| si * (wi - ci))
            .collect()
    }
}

impl Problem for Quadratic {
    fn name(&self) -> String {
        format!("quad(d={})", self.center.len())
    }

    fn dim(&self) -> usize {
        self.center.len()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.start.clone()
    }

    fn evaluate(&self, w: &[f64]) -> f64 {
        0.5 * w
            .iter()
            .zip(&self.center)
            .zip(&self.scales)
            .map(|((wi, ci), si)| si * (wi - ci) * (wi - ci))
            .sum::<f64>()
    }

    fn subgradient(&self, w: &[f64], _query: u64) -> GradientSample {
        GradientSample::objective(self.gradient(w))
    }

    fn exact_gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(self.gradient(w))
    }

    fn optimum(&self) -> Option<Optimum> {
        Some(Optimum {
            point: self.center.clone(),
            value: 0.0,
        })
    }

    /// `s_i` times the farthest distance from the center to a box face.
    fn lipschitz(&self) -> Option<Vec<f64>> {
        Some(
            (0..self.center.len())
                .map(|i| {
                    let reach = (self.center[i] - self.domain.lower[i])
                        .max(self.domain.upper[i] - self.center[i]);
                    self.scales[i] * reach
                })
                .collect(),
        )
    }

    fn tau(&self) -> Option<f64> {
        Some(1.0)
    }

    fn domain(&self) -> Option<DomainBox> {
        Some(self.domain.clone())
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "center": self.center,
            "scales": self.scales,
            "domain": self.domain,
        })
    }
}
