//! Fully-connected evidence network with hand-written backpropagation and
//! an Adam optimizer with decoupled weight decay.
//!
//! Parameters live in one flat vector. Layer `l` stores its `out × in`
//! weight matrix row-major, followed by its `out` biases. Hidden layers use
//! a rectifier; the output layer maps logits to non-negative evidence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidential::EvidenceVector;
use crate::special::{sigmoid, softplus};

/// Logit bound for the clamped exponential activation.
const EXP_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceActivation {
    Softplus,
    ExpClamped,
}

impl EvidenceActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Softplus => softplus(z),
            Self::ExpClamped => z.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Softplus => sigmoid(z),
            Self::ExpClamped => {
                if z.abs() < EXP_CLAMP {
                    z.exp()
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// Zero means "take it from the dataset".
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Zero means "take it from the dataset".
    pub k: usize,
    pub evidence_activation: EvidenceActivation,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            input_dim: 0,
            hidden_dims: vec![64, 64],
            k: 0,
            evidence_activation: EvidenceActivation::Softplus,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("net.input_dim", "must be positive"));
        }
        if self.k < 2 {
            return Err(Error::config("net.k", "need at least 2 outputs"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("net.hidden_dims", "layer widths must be positive"));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.k));
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input followed by each hidden layer's rectified output.
    activations: Vec<Vec<f64>>,
    logits: Vec<f64>,
    evidence: Vec<f64>,
}

impl ForwardCache {
    pub fn evidence(&self) -> &[f64] {
        &self.evidence
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

impl Network {
    /// Uniform fan-in-scaled weights, zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in spec.layer_dims() {
            layers.push(LayerShape {
                fan_in,
                fan_out,
                offset,
            });
            offset += fan_in * fan_out + fan_out;
        }
        let mut params = vec![0.0; offset];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            let bound = if i == last {
                (1.0 / layer.fan_in as f64).sqrt()
            } else {
                (6.0 / layer.fan_in as f64).sqrt()
            };
            for w in &mut params[layer.weights()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            spec,
            layers,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Zeroes the output layer so every class gets identical evidence.
    pub fn zero_output_layer(&mut self) {
        let last = *self.layers.last().expect("network has an output layer");
        self.params[last.offset..last.biases().end].fill(0.0);
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        let mut logits = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = activations.last().expect("input pushed first");
            let w = &self.params[layer.weights()];
            let b = &self.params[layer.biases()];
            let out: Vec<f64> = (0..layer.fan_out)
                .map(|o| {
                    let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
                })
                .collect();
            if i == last {
                logits = out;
            } else {
                activations.push(out.into_iter().map(|v| v.max(0.0)).collect());
            }
        }
        let act = self.spec.evidence_activation;
        let evidence = logits.iter().map(|&z| act.apply(z)).collect();
        Ok(ForwardCache {
            activations,
            logits,
            evidence,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<EvidenceVector> {
        EvidenceVector::new(self.forward_cached(x)?.evidence)
    }

    /// Adds `scale · ∂L/∂θ` into `grads`, given `∂L/∂α` for the cached pass.
    pub fn accumulate_gradient(
        &self,
        cache: &ForwardCache,
        grad_alpha: &[f64],
        scale: f64,
        grads: &mut [f64],
    ) -> Result<()> {
        if grad_alpha.len() != self.spec.k {
            return Err(Error::DimensionMismatch {
                expected: self.spec.k,
                got: grad_alpha.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let act = self.spec.evidence_activation;
        // α = evidence + 1, so ∂α/∂z = act'(z).
        let mut delta: Vec<f64> = grad_alpha
            .iter()
            .zip(&cache.logits)
            .map(|(g, &z)| scale * g * act.derivative(z))
            .collect();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[i];
            let w_range = layer.weights();
            let b_range = layer.biases();
            {
                let gw = &mut grads[w_range.clone()];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            for (g, d) in grads[b_range].iter_mut().zip(&delta) {
                *g += d;
            }
            if i == 0 {
                break;
            }
            let w = &self.params[w_range];
            let mut prev = vec![0.0; layer.fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (p, a) in prev.iter_mut().zip(row) {
                    *p += d * a;
                }
            }
            // Rectifier derivative, read off the stored output.
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(())
    }

    /// Full parameter gradient for one sample.
    pub fn backward(&self, x: &[f64], grad_alpha: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward_cached(x)?;
        let mut grads = vec![0.0; self.params.len()];
        self.accumulate_gradient(&cache, grad_alpha, 1.0, &mut grads)?;
        Ok(grads)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update. Weight decay is applied to the parameters directly,
    /// outside the moment estimates.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &AdamConfig) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *p);
        }
    }
}
