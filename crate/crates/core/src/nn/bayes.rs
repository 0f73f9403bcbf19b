//! Dense layers with factorized Gaussian weight posteriors.
//!
//! Each weight is `w = mu + softplus(rho) * eta` with `eta ~ N(0, 1)`, so
//! gradients reach `(mu, rho)` through the sampled noise.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::dense::{DenseGrad, DenseLayer, Mlp, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};

/// Initial `rho`; `softplus(-5) ≈ 6.7e-3`.
pub const INIT_RHO: f64 = -5.0;
/// Standard deviation of the zero-mean Gaussian prior.
pub const PRIOR_STD: f64 = 1.0;

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesDenseLayer {
    pub weight_mu: Array2<f64>,
    pub weight_rho: Array2<f64>,
    pub bias_mu: Array1<f64>,
    pub bias_rho: Array1<f64>,
}

/// Standard-normal draws used for one sampled layer.
#[derive(Debug, Clone)]
pub struct LayerNoise {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Gradient w.r.t. the variational parameters of one layer.
#[derive(Debug, Clone)]
pub struct BayesGrad {
    pub weight_mu: Array2<f64>,
    pub weight_rho: Array2<f64>,
    pub bias_mu: Array1<f64>,
    pub bias_rho: Array1<f64>,
}

impl BayesGrad {
    pub fn zeros_like(layer: &BayesDenseLayer) -> Self {
        BayesGrad {
            weight_mu: Array2::zeros(layer.weight_mu.raw_dim()),
            weight_rho: Array2::zeros(layer.weight_rho.raw_dim()),
            bias_mu: Array1::zeros(layer.bias_mu.raw_dim()),
            bias_rho: Array1::zeros(layer.bias_rho.raw_dim()),
        }
    }
}

impl BayesDenseLayer {
    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let mean = DenseLayer::init(inputs, outputs, rng);
        BayesDenseLayer {
            weight_rho: Array2::from_elem(mean.weights.raw_dim(), INIT_RHO),
            bias_rho: Array1::from_elem(outputs, INIT_RHO),
            weight_mu: mean.weights,
            bias_mu: mean.biases,
        }
    }

    /// Posterior with the given means and all standard deviations equal to zero.
    pub fn point_mass(mean: &DenseLayer) -> Self {
        BayesDenseLayer {
            weight_mu: mean.weights.clone(),
            weight_rho: Array2::from_elem(mean.weights.raw_dim(), f64::NEG_INFINITY),
            bias_mu: mean.biases.clone(),
            bias_rho: Array1::from_elem(mean.biases.len(), f64::NEG_INFINITY),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight_mu.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight_mu.nrows()
    }

    pub fn mean(&self) -> DenseLayer {
        DenseLayer { weights: self.weight_mu.clone(), biases: self.bias_mu.clone() }
    }

    /// Draws noise row-major over the weights, then the biases.
    pub fn draw_noise(&self, rng: &mut Rng) -> LayerNoise {
        let weights = Array2::from_shape_simple_fn(self.weight_mu.raw_dim(), || rng.sample(StandardNormal));
        let biases = Array1::from_shape_simple_fn(self.bias_mu.len(), || rng.sample(StandardNormal));
        LayerNoise { weights, biases }
    }

    pub fn realize(&self, noise: &LayerNoise) -> DenseLayer {
        let mut weights = self.weight_rho.mapv(softplus);
        weights *= &noise.weights;
        weights += &self.weight_mu;
        let mut biases = self.bias_rho.mapv(softplus);
        biases *= &noise.biases;
        biases += &self.bias_mu;
        DenseLayer { weights, biases }
    }

    /// Chain rule from a sampled layer's gradient to `(mu, rho)`, accumulated into `acc`.
    pub fn accumulate_grad(&self, dense: &DenseGrad, noise: &LayerNoise, scale: f64, acc: &mut BayesGrad) {
        acc.weight_mu.scaled_add(scale, &dense.weights);
        ndarray::Zip::from(&mut acc.weight_rho).and(&dense.weights).and(&noise.weights).and(&self.weight_rho).for_each(
            |a, &g, &e, &r| *a += scale * g * e * sigmoid(r),
        );
        acc.bias_mu.scaled_add(scale, &dense.biases);
        ndarray::Zip::from(&mut acc.bias_rho).and(&dense.biases).and(&noise.biases).and(&self.bias_rho).for_each(
            |a, &g, &e, &r| *a += scale * g * e * sigmoid(r),
        );
    }

    /// KL(q || N(0, prior_std^2)) summed over the layer's parameters.
    pub fn kl(&self, prior_std: f64) -> f64 {
        let term = |mu: f64, rho: f64| {
            let s = softplus(rho);
            (prior_std / s).ln() + (s * s + mu * mu) / (2.0 * prior_std * prior_std) - 0.5
        };
        let w: f64 = self.weight_mu.iter().zip(&self.weight_rho).map(|(&m, &r)| term(m, r)).sum();
        let b: f64 = self.bias_mu.iter().zip(&self.bias_rho).map(|(&m, &r)| term(m, r)).sum();
        w + b
    }

    /// Adds `scale * d KL / d (mu, rho)` into `acc`.
    pub fn accumulate_kl_grad(&self, prior_std: f64, scale: f64, acc: &mut BayesGrad) {
        let p2 = prior_std * prior_std;
        let d_rho = |rho: f64| {
            let s = softplus(rho);
            (s / p2 - 1.0 / s) * sigmoid(rho)
        };
        acc.weight_mu.scaled_add(scale / p2, &self.weight_mu);
        acc.bias_mu.scaled_add(scale / p2, &self.bias_mu);
        ndarray::Zip::from(&mut acc.weight_rho).and(&self.weight_rho).for_each(|a, &r| *a += scale * d_rho(r));
        ndarray::Zip::from(&mut acc.bias_rho).and(&self.bias_rho).for_each(|a, &r| *a += scale * d_rho(r));
    }
}

/// Bayesian feed-forward network: leaky-ReLU hidden layers, Bayesian linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesMlp {
    pub layers: Vec<BayesDenseLayer>,
    pub slope: f64,
    pub prior_std: f64,
}

impl BayesMlp {
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        let layers = sizes.windows(2).map(|w| BayesDenseLayer::init(w[0], w[1], rng)).collect();
        BayesMlp { layers, slope: LEAKY_SLOPE, prior_std: PRIOR_STD }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs()];
        s.extend(self.layers.iter().map(BayesDenseLayer::outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn draw_noise(&self, rng: &mut Rng) -> Vec<LayerNoise> {
        self.layers.iter().map(|l| l.draw_noise(rng)).collect()
    }

    pub fn realize(&self, noise: &[LayerNoise]) -> Mlp {
        Mlp { layers: self.layers.iter().zip(noise).map(|(l, n)| l.realize(n)).collect(), slope: self.slope }
    }

    /// One weight draw from the posterior.
    pub fn sample(&self, rng: &mut Rng) -> Mlp {
        let noise = self.draw_noise(rng);
        self.realize(&noise)
    }

    /// Network at the posterior means.
    pub fn mean_network(&self) -> Mlp {
        Mlp { layers: self.layers.iter().map(BayesDenseLayer::mean).collect(), slope: self.slope }
    }

    /// Forward pass through one posterior draw; deterministic in `noise_seed`.
    pub fn forward(&self, x: &[f64], noise_seed: u64) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), got: x.len() });
        }
        self.sample(&mut rng_from(noise_seed)).forward(x)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>, rng: &mut Rng) -> Array2<f64> {
        self.sample(rng).forward_batch(x)
    }

    pub fn kl(&self) -> f64 {
        self.layers.iter().map(|l| l.kl(self.prior_std)).sum()
    }

    pub fn zero_grads(&self) -> Vec<BayesGrad> {
        self.layers.iter().map(BayesGrad::zeros_like).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_positive_and_stable() {
        assert_eq!(softplus(f64::NEG_INFINITY), 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-30.0) > 0.0);
        assert!((softplus(-5.0) - 6.715_348_489_117_967e-3).abs() < 1e-15);
    }

    #[test]
    fn point_mass_posterior_matches_mean_network() {
        let mut rng = rng_from(4);
        let mean = Mlp::new(&[8, 6, 2], &mut rng);
        let bnn = BayesMlp {
            layers: mean.layers.iter().map(BayesDenseLayer::point_mass).collect(),
            slope: mean.slope,
            prior_std: PRIOR_STD,
        };
        let x = [0.3, -1.0, 0.2, 0.0, 1.5, -0.7, 0.9, 0.1];
        assert_eq!(bnn.forward(&x, 1).unwrap(), mean.forward(&x).unwrap());
        assert_eq!(bnn.forward(&x, 99).unwrap(), mean.forward(&x).unwrap());
    }

    #[test]
    fn same_noise_seed_same_output() {
        let bnn = BayesMlp::new(&[8, 16, 2], &mut rng_from(5));
        let x = [0.1; 8];
        assert_eq!(bnn.forward(&x, 7).unwrap(), bnn.forward(&x, 7).unwrap());
        assert_ne!(bnn.forward(&x, 7).unwrap(), bnn.forward(&x, 8).unwrap());
        assert!(bnn.forward(&x[..7], 7).is_err());
    }

    #[test]
    fn kl_is_zero_at_prior_and_positive_elsewhere() {
        let rho_prior = (1f64.exp() - 1.0).ln(); // softplus^-1(1)
        let mut l = BayesDenseLayer {
            weight_mu: Array2::zeros((3, 2)),
            weight_rho: Array2::from_elem((3, 2), rho_prior),
            bias_mu: Array1::zeros(3),
            bias_rho: Array1::from_elem(3, rho_prior),
        };
        assert!(l.kl(1.0).abs() < 1e-14);
        l.weight_mu[[1, 0]] = 0.3;
        assert!(l.kl(1.0) > 0.0);
        l.weight_mu[[1, 0]] = 0.0;
        l.bias_rho[2] = -2.0;
        assert!(l.kl(1.0) > 0.0);
    }
}
