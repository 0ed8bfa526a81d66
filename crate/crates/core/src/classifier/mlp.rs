//! A small fully connected network: ReLU hidden layers, softmax output.
//!
//! Inputs are mostly sparse hashed vectors, so every layer walks only the
//! non-zero entries of its input. Summation order is fixed, which keeps
//! training bit-reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::trajectory::Mode;

/// One affine layer; `weights` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], biases: vec![0.0; out_dim] }
    }

    /// `W x + b`, touching only the listed non-zero inputs.
    fn affine(&self, x: &[f64], nz: &[usize]) -> Vec<f64> {
        let mut z = self.biases.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *zo += nz.iter().map(|&j| row[j] * x[j]).sum::<f64>();
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Input, hidden..., output widths.
    pub layer_dims: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    pub rng_seed: u64,
}

fn nonzero(x: &[f64]) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// A labeled input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub x: Vec<f64>,
    pub label: Mode,
}

/// Per-layer gradient buffers shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl MlpModel {
    fn check_dims(layer_dims: &[usize]) -> Result<(), ClassifierError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(ClassifierError::Shape(format!("invalid layer dims {layer_dims:?}")));
        }
        if *layer_dims.last().unwrap() != Mode::COUNT {
            return Err(ClassifierError::Shape(format!("output width must be {}", Mode::COUNT)));
        }
        Ok(())
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self, ClassifierError> {
        Self::check_dims(layer_dims)?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers: layer_dims.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect(),
            rng_seed: 0,
        })
    }

    /// He-scaled normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn he_init(layer_dims: &[usize], seed: u64) -> Result<Self, ClassifierError> {
        let mut m = Self::zeros(layer_dims)?;
        m.rng_seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut m.layers {
            let normal = Normal::new(0.0, (2.0 / layer.in_dim as f64).sqrt()).expect("positive std");
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        }
        Ok(m)
    }

    /// Checks that the stored layers agree with `layer_dims`.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        Self::check_dims(&self.layer_dims)?;
        if self.layers.len() != self.layer_dims.len() - 1 {
            return Err(ClassifierError::Shape("layer count does not match layer_dims".into()));
        }
        for (k, (l, w)) in self.layers.iter().zip(self.layer_dims.windows(2)).enumerate() {
            if l.in_dim != w[0] || l.out_dim != w[1] || l.weights.len() != w[0] * w[1] || l.biases.len() != w[1] {
                return Err(ClassifierError::Shape(format!("layer {k} does not chain")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ClassifierError> {
        if x.len() != self.input_dim() {
            return Err(ClassifierError::InputDim { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Layer inputs (post-activation) for each layer plus the final logits.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut z = layer.affine(input, &nonzero(input));
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        self.check_input(x)?;
        Ok(self.activations(x).pop().unwrap())
    }

    /// Class probabilities in [`Mode::ALL`] order.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Mode, ClassifierError> {
        let p = self.forward(x)?;
        let best = (0..p.len()).fold(0, |b, k| if p[k] > p[b] { k } else { b });
        Ok(Mode::from_index(best).expect("output width is Mode::COUNT"))
    }

    fn weight_penalty(&self) -> f64 {
        self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum()
    }

    /// Mean cross-entropy plus `l2 * sum(w^2)` over weights (biases excluded).
    pub fn loss(&self, batch: &[Sample], l2: f64) -> Result<f64, ClassifierError> {
        if batch.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        let mut ce = 0.0;
        for s in batch {
            let logits = self.logits(&s.x)?;
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            ce += lse - logits[s.label.index()];
        }
        Ok(ce / batch.len() as f64 + l2 * self.weight_penalty())
    }

    /// Analytic gradient of [`MlpModel::loss`].
    pub fn gradients(&self, batch: &[Sample], l2: f64) -> Result<Gradients, ClassifierError> {
        if batch.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        let mut g = Gradients {
            layers: self.layers.iter().map(|l| DenseLayer::zeros(l.in_dim, l.out_dim)).collect(),
        };
        let scale = 1.0 / batch.len() as f64;
        for s in batch {
            self.check_input(&s.x)?;
            let acts = self.activations(&s.x);
            let mut delta = softmax(acts.last().unwrap());
            delta[s.label.index()] -= 1.0;
            delta.iter_mut().for_each(|d| *d *= scale);
            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let input = &acts[k];
                let nz = nonzero(input);
                let gl = &mut g.layers[k];
                for (o, &d) in delta.iter().enumerate() {
                    gl.biases[o] += d;
                    if d != 0.0 {
                        let row = &mut gl.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for &j in &nz {
                            row[j] += d * input[j];
                        }
                    }
                }
                if k > 0 {
                    // ReLU passes gradient only where its output was positive,
                    // which is exactly the non-zero set of `input`.
                    let mut prev = vec![0.0; layer.in_dim];
                    for &j in &nz {
                        prev[j] = (0..layer.out_dim).map(|o| layer.weights[o * layer.in_dim + j] * delta[o]).sum();
                    }
                    delta = prev;
                }
            }
        }
        if l2 != 0.0 {
            for (gl, l) in g.layers.iter_mut().zip(&self.layers) {
                for (gw, w) in gl.weights.iter_mut().zip(&l.weights) {
                    *gw += 2.0 * l2 * w;
                }
            }
        }
        Ok(g)
    }

    /// `params -= lr * grads`.
    pub fn apply(&mut self, g: &Gradients, lr: f64) {
        for (l, gl) in self.layers.iter_mut().zip(&g.layers) {
            l.weights.iter_mut().zip(&gl.weights).for_each(|(w, d)| *w -= lr * d);
            l.biases.iter_mut().zip(&gl.biases).for_each(|(b, d)| *b -= lr * d);
        }
    }

    /// Flat iterator over every parameter, weights before biases per layer.
    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn param_mut(&mut self, layer: usize, index: usize) -> &mut f64 {
        let l = &mut self.layers[layer];
        if index < l.weights.len() {
            &mut l.weights[index]
        } else {
            &mut l.biases[index - l.weights.len()]
        }
    }
}

/// Adam moment estimates (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(model: &MlpModel) -> Self {
        let n = model.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
        Self { step: 0, first: vec![0.0; n], second: vec![0.0; n] }
    }

    /// One bias-corrected Adam update.
    pub fn apply(&mut self, model: &mut MlpModel, g: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let grads = g.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases));
        for (((p, d), m), v) in model.params_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * d;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * d * d;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

impl Gradients {
    fn param(&self, layer: usize, index: usize) -> f64 {
        let l = &self.layers[layer];
        if index < l.weights.len() {
            l.weights[index]
        } else {
            l.biases[index - l.weights.len()]
        }
    }
}

pub const FD_STEP: f64 = 1e-5;

/// Largest relative gap between analytic and central-difference gradients
/// over every parameter: `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// ReLU has no derivative at 0; a pre-activation within `FD_STEP` of it
/// makes the central difference disagree with the analytic one-sided value.
pub fn gradient_check(model: &MlpModel, batch: &[Sample], l2: f64) -> Result<f64, ClassifierError> {
    let analytic = model.gradients(batch, l2)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for k in 0..model.layers.len() {
        let count = model.layers[k].weights.len() + model.layers[k].biases.len();
        for i in 0..count {
            let orig = *probe.param_mut(k, i);
            *probe.param_mut(k, i) = orig + FD_STEP;
            let up = probe.loss(batch, l2)?;
            *probe.param_mut(k, i) = orig - FD_STEP;
            let down = probe.loss(batch, l2)?;
            *probe.param_mut(k, i) = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.param(k, i);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
