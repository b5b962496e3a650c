//! Small fully connected networks with hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a` and input `z`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Output head applied to the final logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax1d,
    /// Softmax over a `width x height` cell map, row-major.
    Softmax2d { width: usize, height: usize },
    /// Softmax perturbed by Gumbel noise during training; plain softmax at
    /// evaluation.
    GumbelSoftmax,
    /// Independent sigmoid per output.
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layers: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(layers: Vec<usize>, head: Head, seed: u64) -> Self {
        Self { layers, activation: Activation::Tanh, head, seed }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0]
    }

    pub fn outputs(&self) -> usize {
        *self.layers.last().unwrap()
    }
}

/// Dense layer `z = W x + b` with `W` stored row-major, `rows` outputs by
/// `cols` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.weights[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).fold(self.bias[r], |acc, (w, xi)| acc + w * xi)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

/// Forward pass values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input of every layer; the last entry is the logits.
    pub activations: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Cache {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

/// Parameter gradients, same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }
}

impl Mlp {
    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(spec: MlpSpec) -> Result<Self, LearnError> {
        if spec.layers.len() < 2 || spec.layers.contains(&0) {
            return Err(LearnError::BadSpec(format!("layer sizes {:?}", spec.layers)));
        }
        if let Head::Softmax2d { width, height } = spec.head {
            if width * height != spec.outputs() {
                return Err(LearnError::BadSpec(format!("{width}x{height} map but {} outputs", spec.outputs())));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layers
            .windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let bound = 1.0 / (cols as f64).sqrt();
                Layer {
                    rows,
                    cols,
                    weights: (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect(),
                    bias: (0..rows).map(|_| rng.random_range(-bound..=bound)).collect(),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn inputs(&self) -> usize {
        self.spec.inputs()
    }

    pub fn outputs(&self) -> usize {
        self.spec.outputs()
    }

    pub fn forward_cache(&self, x: &[f64]) -> Cache {
        assert_eq!(x.len(), self.inputs(), "input width");
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(activations.last().unwrap());
            let last = i + 1 == self.layers.len();
            let a = if last { z.clone() } else { z.iter().map(|&v| self.spec.activation.apply(v)).collect() };
            pre.push(z);
            activations.push(a);
        }
        Cache { activations, pre }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cache(x).activations.pop().unwrap()
    }

    /// Head output at evaluation time.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let z = self.logits(x);
        match self.spec.head {
            Head::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            _ => softmax(&z, 1.0),
        }
    }

    /// Accumulate parameter gradients for one sample given `dL/dlogits`.
    pub fn backward(&self, cache: &Cache, dlogits: &[f64], grads: &mut Gradients) {
        let mut delta = dlogits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.activations[l];
            for r in 0..layer.rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                grads.bias[l][r] += d;
                let gw = &mut grads.weights[l][r * layer.cols..(r + 1) * layer.cols];
                for (g, &xi) in gw.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.cols];
            for r in 0..layer.rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            let z = &cache.pre[l - 1];
            let a = &cache.activations[l];
            delta = prev.iter().zip(z.iter().zip(a)).map(|(&p, (&zi, &ai))| p * self.spec.activation.derivative(zi, ai)).collect();
        }
    }

    /// `θ -= lr * scale * g`.
    pub fn apply(&mut self, grads: &Gradients, lr: f64, scale: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grads.weights[l]) {
                *w -= lr * scale * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&grads.bias[l]) {
                *b -= lr * scale * g;
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat view over all parameters, layer by layer, weights then bias.
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `softmax(z / temperature)`, shifted for stability.
pub fn softmax(z: &[f64], temperature: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
