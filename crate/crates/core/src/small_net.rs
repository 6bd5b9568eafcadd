//! Dense ReLU network with softmax cross-entropy and hand-written backpropagation,
//! plus a Gaussian-blobs dataset and the `mlp-blobs` problem built from them.
//!
//! Parameters live in one flat vector. Layer `k` maps `n_in → n_out` and stores
//! its weights row-major (`n_out × n_in`) followed by its `n_out` biases.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coin_betting::GradientSample;
use crate::problems::{query_rng, Problem};
use crate::{Error, Result};

pub const INIT_STD: f64 = 0.1;
pub const INIT_BIAS: f64 = 0.1;
/// Weight draws beyond this many standard deviations are redrawn.
pub const TRUNCATION_STDS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub weight_std: f64,
    pub truncation_stds: f64,
    pub bias: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            weight_std: INIT_STD,
            truncation_stds: TRUNCATION_STDS,
            bias: INIT_BIAS,
        }
    }
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::config("a network needs at least an input and an output layer"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::config("layer sizes must be positive"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    /// Bumped on every parameter write; caches remember the value they saw.
    generation: u64,
}

/// Activations kept from a forward pass for use by [`DenseNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    batch: usize,
    /// `activations[0]` is the input; `activations[k]` the post-ReLU output of layer `k`.
    activations: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
    /// Softmax outputs, `batch × classes`.
    pub probs: Vec<f64>,
    labels: Vec<usize>,
}

/// Borrowed minibatch: `features` is row-major `labels.len() × input_dim`.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: &'a [f64],
    pub labels: &'a [usize],
}

impl DenseNet {
    /// Truncated-normal weights and constant biases, deterministic per seed.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        Self::with_init(layer_sizes, seed, InitSpec::default())
    }

    pub fn with_init(layer_sizes: &[usize], seed: u64, init: InitSpec) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let normal = Normal::new(0.0, init.weight_std)
            .map_err(|e| Error::config(format!("invalid init std: {e}")))?;
        let limit = init.truncation_stds * init.weight_std;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for pair in layer_sizes.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            for _ in 0..n_in * n_out {
                let w = loop {
                    let draw: f64 = normal.sample(&mut rng);
                    if draw.abs() <= limit {
                        break draw;
                    }
                };
                params.push(w);
            }
            params.extend(std::iter::repeat_n(init.bias, n_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
            generation: 0,
        })
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let expected = param_count(layer_sizes);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
            generation: 0,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().expect("checked")
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        self.generation += 1;
        Ok(())
    }

    /// `(weights, biases)` ranges of layer `k` within the flat vector.
    fn layer_ranges(&self, k: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let offset = param_count(&self.layer_sizes[..=k]);
        let (n_in, n_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
        let w = offset..offset + n_in * n_out;
        let b = w.end..w.end + n_out;
        (w, b)
    }

    pub fn weights(&self, k: usize) -> &[f64] {
        &self.params[self.layer_ranges(k).0]
    }

    pub fn biases(&self, k: usize) -> &[f64] {
        &self.params[self.layer_ranges(k).1]
    }

    /// Mean cross-entropy over the batch and the activations needed for backprop.
    pub fn forward_loss(&self, batch: Batch<'_>) -> Result<(f64, ForwardCache)> {
        let n = batch.labels.len();
        let d = self.input_dim();
        if batch.features.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                found: batch.features.len(),
            });
        }
        let classes = self.classes();
        if let Some(&label) = batch.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if n == 0 {
            return Err(Error::config("empty batch"));
        }

        let layers = self.layer_sizes.len() - 1;
        let mut activations = vec![batch.features.to_vec()];
        let mut pre = Vec::with_capacity(layers);
        for k in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let (w, b) = (self.weights(k), self.biases(k));
            let input = &activations[k];
            let mut z = vec![0.0; n * n_out];
            for s in 0..n {
                let x = &input[s * n_in..(s + 1) * n_in];
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    z[s * n_out + o] = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                }
            }
            if k + 1 < layers {
                activations.push(z.iter().map(|v| v.max(0.0)).collect());
            }
            pre.push(z);
        }

        let logits = pre.last().expect("at least one layer");
        let mut probs = vec![0.0; n * classes];
        let mut loss = 0.0;
        for s in 0..n {
            let row = &logits[s * classes..(s + 1) * classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_norm = max + sum.ln();
            for c in 0..classes {
                probs[s * classes + c] = (row[c] - log_norm).exp();
            }
            loss += log_norm - row[batch.labels[s]];
        }

        Ok((
            loss / n as f64,
            ForwardCache {
                generation: self.generation,
                batch: n,
                activations,
                pre,
                probs,
                labels: batch.labels.to_vec(),
            },
        ))
    }

    /// Gradient of the mean cross-entropy with respect to the flat parameters.
    /// The ReLU derivative at exactly zero is taken as zero.
    pub fn backward(&self, cache: &ForwardCache) -> Result<Vec<f64>> {
        if cache.generation != self.generation || cache.pre.len() + 1 != self.layer_sizes.len() {
            return Err(Error::StaleCache);
        }
        let n = cache.batch;
        let classes = self.classes();
        let inv_n = 1.0 / n as f64;
        let mut grad = vec![0.0; self.params.len()];

        // δ at the logits: (p − onehot(y)) / n
        let mut delta = cache.probs.clone();
        for s in 0..n {
            delta[s * classes + cache.labels[s]] -= 1.0;
        }
        delta.iter_mut().for_each(|v| *v *= inv_n);

        for k in (0..self.layer_sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let (w_range, b_range) = self.layer_ranges(k);
            let input = &cache.activations[k];
            {
                let gw = &mut grad[w_range.clone()];
                for s in 0..n {
                    let x = &input[s * n_in..(s + 1) * n_in];
                    for o in 0..n_out {
                        let dz = delta[s * n_out + o];
                        if dz != 0.0 {
                            for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                                *g += dz * xi;
                            }
                        }
                    }
                }
            }
            {
                let gb = &mut grad[b_range];
                for s in 0..n {
                    for o in 0..n_out {
                        gb[o] += delta[s * n_out + o];
                    }
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.params[w_range];
            let below = &cache.pre[k - 1];
            let mut next = vec![0.0; n * n_in];
            for s in 0..n {
                for o in 0..n_out {
                    let dz = delta[s * n_out + o];
                    if dz == 0.0 {
                        continue;
                    }
                    for (i, wi) in w[o * n_in..(o + 1) * n_in].iter().enumerate() {
                        next[s * n_in + i] += dz * wi;
                    }
                }
                for i in 0..n_in {
                    if below[s * n_in + i] <= 0.0 {
                        next[s * n_in + i] = 0.0;
                    }
                }
            }
            delta = next;
        }
        Ok(grad)
    }

    /// Predicted class per sample.
    pub fn predict(&self, features: &[f64]) -> Result<Vec<usize>> {
        let n = features.len() / self.input_dim();
        let labels = vec![0; n];
        let (_, cache) = self.forward_loss(Batch {
            features,
            labels: &labels,
        })?;
        let c = self.classes();
        Ok((0..n)
            .map(|s| {
                let row = &cache.probs[s * c..(s + 1) * c];
                (0..c)
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .expect("nonempty")
            })
            .collect())
    }
}

/// Labeled points drawn around per-class Gaussian centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    /// Row-major `len × dim`.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub dim: usize,
    pub seed: u64,
    pub centers: Vec<Vec<f64>>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    pub fn batch(&self) -> Batch<'_> {
        Batch {
            features: &self.features,
            labels: &self.labels,
        }
    }

    /// Copies the rows `indices` into an owned batch.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &j in indices {
            features.extend_from_slice(self.row(j));
            labels.push(self.labels[j]);
        }
        (features, labels)
    }
}

/// Gaussian blobs with unit per-coordinate noise. Centers are random and
/// rescaled so the closest pair sits exactly `separation` apart.
pub fn blobs_dataset(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::config("class count, per-class count and dimension must be positive"));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::config(format!("separation must be positive, got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut closest = f64::INFINITY;
    for a in 0..classes {
        for b in a + 1..classes {
            let dist = centers[a]
                .iter()
                .zip(&centers[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            closest = closest.min(dist);
        }
    }
    let scale = if closest.is_finite() && closest > 0.0 {
        separation / closest
    } else {
        separation
    };
    centers.iter_mut().flatten().for_each(|v| *v *= scale);

    let mut features = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            features.extend(center.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)));
            labels.push(c);
        }
    }
    Ok(SyntheticDataset {
        features,
        labels,
        classes,
        dim,
        seed,
        centers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpBlobsConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub hidden: Vec<usize>,
    pub batch: usize,
    pub seed: u64,
}

impl Default for MlpBlobsConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 100,
            dim: 10,
            separation: 3.0,
            hidden: vec![50, 50],
            batch: 32,
            seed: 0,
        }
    }
}

/// Training cross-entropy of a [`DenseNet`] on blobs, with shuffled-epoch minibatches.
pub struct MlpBlobs {
    config: MlpBlobsConfig,
    data: SyntheticDataset,
    layer_sizes: Vec<usize>,
    start: Vec<f64>,
}

impl MlpBlobs {
    pub fn new(config: MlpBlobsConfig) -> Result<Self> {
        if config.batch == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        let data = blobs_dataset(
            config.classes,
            config.per_class,
            config.dim,
            config.separation,
            config.seed,
        )?;
        let mut layer_sizes = vec![config.dim];
        layer_sizes.extend(&config.hidden);
        layer_sizes.push(config.classes);
        let start = DenseNet::new(&layer_sizes, config.seed.wrapping_add(1))?.flatten();
        Ok(Self {
            config,
            data,
            layer_sizes,
            start,
        })
    }

    pub fn dataset(&self) -> &SyntheticDataset {
        &self.data
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    fn net(&self, w: &[f64]) -> DenseNet {
        DenseNet::from_params(&self.layer_sizes, w.to_vec()).expect("dimension checked by caller")
    }

    /// Sample indices of oracle query `query`.
    pub fn batch_indices(&self, query: u64) -> Vec<usize> {
        let per_epoch = self.queries_per_epoch().expect("always set");
        let (epoch, slot) = (query / per_epoch, (query % per_epoch) as usize);
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut query_rng(self.config.seed ^ 0x0062_6c6f_6273, epoch));
        let start = slot * self.config.batch;
        let end = (start + self.config.batch).min(order.len());
        order[start..end].to_vec()
    }

    pub fn accuracy(&self, w: &[f64]) -> f64 {
        let predicted = self.net(w).predict(&self.data.features).expect("valid features");
        let hits = predicted
            .iter()
            .zip(&self.data.labels)
            .filter(|(p, y)| p == y)
            .count();
        hits as f64 / self.data.len() as f64
    }
}

impl Problem for MlpBlobs {
    fn name(&self) -> String {
        format!("mlp-blobs({:?})", self.layer_sizes)
    }

    fn dim(&self) -> usize {
        self.start.len()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.start.clone()
    }

    fn evaluate(&self, w: &[f64]) -> f64 {
        self.net(w)
            .forward_loss(self.data.batch())
            .map(|(loss, _)| loss)
            .unwrap_or(f64::NAN)
    }

    fn subgradient(&self, w: &[f64], query: u64) -> GradientSample {
        let net = self.net(w);
        let (features, labels) = self.data.gather(&self.batch_indices(query));
        let (_, cache) = net
            .forward_loss(Batch {
                features: &features,
                labels: &labels,
            })
            .expect("dataset labels are in range");
        GradientSample::objective(net.backward(&cache).expect("fresh cache"))
    }

    fn exact_gradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        let net = self.net(w);
        let (_, cache) = net.forward_loss(self.data.batch()).ok()?;
        net.backward(&cache).ok()
    }

    fn is_stochastic(&self) -> bool {
        self.config.batch < self.data.len()
    }

    fn queries_per_epoch(&self) -> Option<u64> {
        Some(self.data.len().div_ceil(self.config.batch) as u64)
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "mlp_blobs": self.config,
            "layer_sizes": self.layer_sizes,
            "init": InitSpec::default(),
            "relu_derivative_at_zero": 0.0,
        })
    }
}

/// Largest relative error between backprop and central differences over
/// `coords` random coordinates of a freshly initialized `layer_sizes` net.
pub fn gradient_check(layer_sizes: &[usize], seed: u64, coords: usize, h: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = DenseNet::new(layer_sizes, seed)?;
    // Jitter every parameter so no ReLU sits at its kink.
    let mut params = net.flatten();
    for p in params.iter_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    net.set_params(&params)?;
    let n = 5;
    let features: Vec<f64> = (0..n * layer_sizes[0])
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let classes = *layer_sizes.last().expect("checked");
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let batch = Batch {
        features: &features,
        labels: &labels,
    };
    let (_, cache) = net.forward_loss(batch)?;
    let grad = net.backward(&cache)?;

    let mut worst = 0.0_f64;
    for _ in 0..coords {
        let i = rng.random_range(0..params.len());
        let mut probe = DenseNet::from_params(layer_sizes, params.clone())?;
        let mut shifted = params.clone();
        shifted[i] += h;
        probe.set_params(&shifted)?;
        let plus = probe.forward_loss(batch)?.0;
        shifted[i] -= 2.0 * h;
        probe.set_params(&shifted)?;
        let minus = probe.forward_loss(batch)?.0;
        let fd = (plus - minus) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}
