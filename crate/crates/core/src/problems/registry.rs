//! Problem lookup by name.
//!
//! Grammar: `<base>[-noisy:<sigma>][@key=value,key=value...]`, for example
//! `abs10`, `quad@dim=3`, `logreg@n=200,dim=10,batch=16` or `abs10-noisy:0.5`.
//! Base names: `abs10`, `quad`, `logreg`, `wqc`, `mlp-blobs`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AbsShift, DomainBox, LogisticConfig, LogisticProblem, Noisy, Problem, Quadratic, WeakQuasiConvex};
use crate::small_net::{MlpBlobs, MlpBlobsConfig};
use crate::{Error, Result};

pub const BASE_NAMES: [&str; 5] = ["abs10", "quad", "logreg", "wqc", "mlp-blobs"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub base: String,
    pub noise: Option<f64>,
    pub params: BTreeMap<String, f64>,
}

impl ProblemSpec {
    pub fn new(base: &str) -> Self {
        Self {
            base: base.to_string(),
            noise: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (head, tail) = match text.split_once('@') {
            Some((h, t)) => (h, Some(t)),
            None => (text, None),
        };
        let (base, noise) = match head.split_once("-noisy:") {
            Some((b, sigma)) => {
                let sigma: f64 = sigma
                    .parse()
                    .map_err(|_| Error::UnknownProblem(text.to_string()))?;
                (b, Some(sigma))
            }
            None => (head, None),
        };
        if !BASE_NAMES.contains(&base) {
            return Err(Error::UnknownProblem(text.to_string()));
        }
        let mut params = BTreeMap::new();
        for pair in tail.into_iter().flat_map(|t| t.split(',')).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("malformed problem parameter `{pair}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::config(format!("problem parameter `{k}` is not a number")))?;
            params.insert(k.to_string(), v);
        }
        Ok(Self {
            base: base.to_string(),
            noise,
            params,
        })
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default as f64);
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::config(format!("`{key}` must be a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }

    /// Builds the problem; `seed` drives data generation and stochastic oracles.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Problem>> {
        let base: Box<dyn Problem> = match self.base.as_str() {
            "abs10" => Box::new(AbsShift::new(self.get("target", 10.0))),
            "quad" => {
                let dim = self.count("dim", 5)?.max(1);
                let half = self.get("box", 10.0);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let center = (0..dim).map(|_| rng.random_range(-0.5 * half..0.5 * half)).collect();
                let scales = (0..dim).map(|_| rng.random_range(0.5..2.0)).collect();
                Box::new(Quadratic::new(center, scales, DomainBox::uniform(dim, -half, half)?)?)
            }
            "logreg" => Box::new(LogisticProblem::new(LogisticConfig {
                samples: self.count("n", 200)?,
                dim: self.count("dim", 10)?,
                seed,
                noise: self.get("noise", 0.1),
                batch: self.count("batch", 0)?,
            })?),
            "wqc" => Box::new(WeakQuasiConvex),
            "mlp-blobs" => {
                let defaults = MlpBlobsConfig::default();
                let width = self.count("width", 50)?;
                let depth = self.count("depth", defaults.hidden.len())?;
                Box::new(MlpBlobs::new(MlpBlobsConfig {
                    classes: self.count("classes", defaults.classes)?,
                    per_class: self.count("per_class", defaults.per_class)?,
                    dim: self.count("dim", defaults.dim)?,
                    separation: self.get("separation", defaults.separation),
                    hidden: vec![width; depth],
                    batch: self.count("batch", defaults.batch)?,
                    seed,
                })?)
            }
            other => return Err(Error::UnknownProblem(other.to_string())),
        };
        match self.noise {
            Some(sigma) => Ok(Box::new(Noisy::new(base, sigma, seed)?)),
            None => Ok(base),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.base)?;
        if let Some(sigma) = self.noise {
            write!(f, "-noisy:{sigma}")?;
        }
        if !self.params.is_empty() {
            let parts: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "@{}", parts.join(","))?;
        }
        Ok(())
    }
}

pub fn build_problem(name: &str, seed: u64) -> Result<Box<dyn Problem>> {
    ProblemSpec::parse(name)?.build(seed)
}
