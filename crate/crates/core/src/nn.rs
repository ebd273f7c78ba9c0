//! Small dense networks with manual backpropagation, plus Adam.
//!
//! Parameters live in one flat vector so optimizers and finite-difference
//! checks can treat a network as a point in R^n.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected network. Hidden layers use `hidden`, the last layer `output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
    hidden: Activation,
    output: Activation,
}

/// Layer outputs recorded during a forward pass, input first.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds at least the input")
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Mlp { sizes: sizes.to_vec(), params: vec![0.0; n], hidden, output }
    }

    /// Weights ~ N(0, sigma²), biases zero.
    pub fn normal<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        sigma: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(sizes, hidden, output);
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma is positive");
            let mut offset = 0;
            for w in sizes.windows(2) {
                let (n_in, n_out) = (w[0], w[1]);
                for p in &mut net.params[offset..offset + n_in * n_out] {
                    *p = normal.sample(rng);
                }
                offset += n_in * n_out + n_out;
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize, Activation)> + '_ {
        let last = self.sizes.len() - 2;
        let mut offset = 0;
        self.sizes.windows(2).enumerate().map(move |(l, w)| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            let act = if l == last { self.output } else { self.hidden };
            (start, w[0], w[1], act)
        })
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut activations = vec![x.to_vec()];
        for (offset, n_in, n_out, act) in self.layers() {
            let input = activations.last().expect("non-empty");
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let out: Vec<f64> = (0..n_out)
                .map(|j| {
                    let z: f64 = w[j * n_in..(j + 1) * n_in].iter().zip(input).map(|(a, b)| a * b).sum();
                    act.apply(z + b[j])
                })
                .collect();
            activations.push(out);
        }
        Trace { activations }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).activations.pop().expect("non-empty")
    }

    /// Accumulates dL/dθ into `grad` given dL/d(output); returns dL/d(input).
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers: Vec<_> = self.layers().collect();
        let mut delta = grad_out.to_vec();
        for (l, &(offset, n_in, n_out, act)) in layers.iter().enumerate().rev() {
            let input = &trace.activations[l];
            let output = &trace.activations[l + 1];
            for j in 0..n_out {
                delta[j] *= act.derivative(output[j]);
            }
            let mut next = vec![0.0; n_in];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                let row = offset + j * n_in;
                for i in 0..n_in {
                    grad[row + i] += d * input[i];
                    next[i] += d * self.params[row + i];
                }
                grad[offset + n_in * n_out + j] += d;
            }
            delta = next;
        }
        delta
    }
}

/// Adam with bias correction. `step` performs descent on the supplied gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

pub fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
