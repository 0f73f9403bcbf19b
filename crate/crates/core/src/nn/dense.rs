use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Negative-side slope of the hidden activations.
pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer { weights: Array2::zeros((outputs, inputs)), biases: Array1::zeros(outputs) }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-bound..bound));
        let biases = Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..bound));
        DenseLayer { weights, biases }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Batched affine map: rows of `x` are samples.
    pub fn affine(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.biases;
        z
    }
}

/// Gradient of one dense layer.
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Per-layer inputs and pre-activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Vec<Array2<f64>>,
    pub preacts: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Feed-forward network: leaky-ReLU hidden layers, linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub slope: f64,
}

impl Mlp {
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        let layers = sizes.windows(2).map(|w| DenseLayer::init(w[0], w[1], rng)).collect();
        Mlp { layers, slope: LEAKY_SLOPE }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Mlp { layers, slope: LEAKY_SLOPE }
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs()];
        s.extend(self.layers.iter().map(DenseLayer::outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(DenseLayer::outputs).unwrap_or(0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.affine(h.view());
            if i < last {
                let s = self.slope;
                h.mapv_inplace(|v| leaky_relu(v, s));
            }
        }
        h
    }

    /// Single-sample forward pass with a shape check.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), got: x.len() });
        }
        let input = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        Ok(self.forward_batch(input).into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> ForwardCache {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(h.view());
            inputs.push(h);
            h = if i < last {
                let s = self.slope;
                z.mapv(|v| leaky_relu(v, s))
            } else {
                z.clone()
            };
            preacts.push(z);
        }
        ForwardCache { inputs, preacts, output: h }
    }

    /// Backpropagates `d loss / d output` through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, grad_out: Array2<f64>) -> Vec<DenseGrad> {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        for i in (0..self.layers.len()).rev() {
            if i < last {
                let s = self.slope;
                ndarray::Zip::from(&mut delta).and(&cache.preacts[i]).for_each(|d, &z| *d *= leaky_relu_grad(z, s));
            }
            let dw = delta.t().dot(&cache.inputs[i]);
            let db = delta.sum_axis(Axis(0));
            let next = if i > 0 { Some(delta.dot(&self.layers[i].weights)) } else { None };
            grads.push(DenseGrad { weights: dw, biases: db });
            if let Some(n) = next {
                delta = n;
            }
        }
        grads.reverse();
        grads
    }
}

/// Mean absolute error over all elements and its gradient w.r.t. `pred`.
pub fn mae_loss(pred: &Array2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let n = pred.len() as f64;
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut loss = 0.0;
    ndarray::Zip::from(&mut grad).and(pred).and(&target).for_each(|g, &p, &t| {
        let d = p - t;
        loss += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    });
    (loss / n, grad)
}

/// Architecture descriptor stored alongside parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub sizes: Vec<usize>,
    pub leaky_slope: f64,
    pub bayesian: bool,
}
