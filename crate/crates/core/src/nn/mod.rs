//! Minimal dense and Bayesian network engine.

pub mod adam;
pub mod bayes;
pub mod checkpoint;
pub mod dense;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use bayes::{BayesDenseLayer, BayesMlp};
pub use dense::{mae_loss, Architecture, DenseLayer, Mlp, LEAKY_SLOPE};
pub use train::{train_bnn, train_mlp, Dataset, LossTrace, TrainConfig};

/// Access to trainable tensors in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored in standard layout")
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [slice(&l.weights), slice(&l.biases)]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| [slice_mut(&mut l.weights), slice_mut(&mut l.biases)]).collect()
    }
}

impl Parameters for BayesMlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [slice(&l.weight_mu), slice(&l.weight_rho), slice(&l.bias_mu), slice(&l.bias_rho)])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    slice_mut(&mut l.weight_mu),
                    slice_mut(&mut l.weight_rho),
                    slice_mut(&mut l.bias_mu),
                    slice_mut(&mut l.bias_rho),
                ]
            })
            .collect()
    }
}

/// Flattens dense gradients in [`Parameters`] order.
pub fn dense_grad_tensors(grads: &[dense::DenseGrad]) -> Vec<&[f64]> {
    grads.iter().flat_map(|g| [slice(&g.weights), slice(&g.biases)]).collect()
}

/// Flattens Bayesian gradients in [`Parameters`] order.
pub fn bayes_grad_tensors(grads: &[bayes::BayesGrad]) -> Vec<&[f64]> {
    grads
        .iter()
        .flat_map(|g| [slice(&g.weight_mu), slice(&g.weight_rho), slice(&g.bias_mu), slice(&g.bias_rho)])
        .collect()
}
