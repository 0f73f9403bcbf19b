use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::bayes::BayesMlp;
use super::dense::{mae_loss, Mlp};
use super::{bayes_grad_tensors, dense_grad_tensors, Parameters};
use crate::error::{Error, Result};
use crate::rng::{derived_rng, stream};

/// Default KL weight per training record is `KL_SCALE / |dataset|`: the MAE
/// term is a Laplace log-likelihood multiplied by its scale, and targets are
/// standardized so that scale is about 0.1.
pub const KL_SCALE: f64 = 0.1;

/// Optimization settings shared by the deterministic and Bayesian trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Posterior draws averaged per minibatch loss (Bayesian net only).
    pub mc_loss_samples: usize,
    /// Weight of the KL term; `None` means `KL_SCALE / |dataset|`.
    pub kl_weight: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            mc_loss_samples: 6,
            kl_weight: None,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.mc_loss_samples == 0 {
            return Err(Error::InvalidParameter("epochs, batch_size and mc_loss_samples must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if let Some(w) = self.kl_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("kl_weight {w} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    pub fn resolved_kl_weight(&self, records: usize) -> f64 {
        self.kl_weight.unwrap_or(KL_SCALE / records as f64)
    }
}

/// Rows of `inputs` paired with rows of `targets`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::InvalidParameter("dataset is empty".into()));
        }
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Shape { expected: inputs.nrows(), got: targets.nrows() });
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("dataset contains non-finite values".into()));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

/// Loss before training and mean training loss of every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub initial: f64,
    pub epochs: Vec<f64>,
}

impl LossTrace {
    pub fn final_loss(&self) -> f64 {
        *self.epochs.last().unwrap_or(&self.initial)
    }

    /// `epoch,loss` rows; epoch 0 is the untrained loss.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        s.push_str(&format!("0,{}\n", self.initial));
        for (i, l) in self.epochs.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

fn check_shapes(input_dim: usize, output_dim: usize, data: &Dataset) -> Result<()> {
    if data.inputs.ncols() != input_dim {
        return Err(Error::Shape { expected: input_dim, got: data.inputs.ncols() });
    }
    if data.targets.ncols() != output_dim {
        return Err(Error::Shape { expected: output_dim, got: data.targets.ncols() });
    }
    Ok(())
}

fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { epoch, reason: format!("loss became {loss}") })
    }
}

/// Minibatch Adam on plain MAE.
pub fn train_mlp(net: &mut Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<LossTrace> {
    cfg.validate()?;
    check_shapes(net.input_dim(), net.output_dim(), data)?;
    let mut shuffle_rng = derived_rng(cfg.seed, stream::TRAIN_SHUFFLE, &[]);
    let mut adam = Adam::new(cfg.learning_rate, cfg.adam);
    let initial = mae_loss(&net.forward_batch(data.inputs.view()), data.targets.view()).0;
    check_finite(initial, 0)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.inputs.select(Axis(0), batch);
            let t = data.targets.select(Axis(0), batch);
            let cache = net.forward_cached(x.view());
            let (loss, grad) = mae_loss(&cache.output, t.view());
            let grads = net.backward(&cache, grad);
            adam.step(net.tensors_mut(), dense_grad_tensors(&grads));
            total += loss * batch.len() as f64;
        }
        let mean = total / data.len() as f64;
        check_finite(mean, epoch)?;
        epochs.push(mean);
    }
    Ok(LossTrace { initial, epochs })
}

/// Monte-Carlo MAE over `mc_loss_samples` posterior draws plus the weighted KL.
fn bnn_objective(net: &BayesMlp, data: &Dataset, cfg: &TrainConfig, kl_weight: f64) -> f64 {
    let mut rng = derived_rng(cfg.seed, stream::TRAIN_NOISE, &[u64::MAX]);
    let mut mae = 0.0;
    for _ in 0..cfg.mc_loss_samples {
        mae += mae_loss(&net.forward_batch(data.inputs.view(), &mut rng), data.targets.view()).0;
    }
    mae / cfg.mc_loss_samples as f64 + kl_weight * net.kl()
}

/// Stochastic variational training: per minibatch, averages the MAE gradient
/// over `mc_loss_samples` reparameterized weight draws and adds the weighted
/// KL gradient.
pub fn train_bnn(net: &mut BayesMlp, data: &Dataset, cfg: &TrainConfig) -> Result<LossTrace> {
    cfg.validate()?;
    let output_dim = net.layers.last().map(|l| l.outputs()).unwrap_or(0);
    check_shapes(net.input_dim(), output_dim, data)?;
    let kl_weight = cfg.resolved_kl_weight(data.len());
    let mut shuffle_rng = derived_rng(cfg.seed, stream::TRAIN_SHUFFLE, &[]);
    let mut noise_rng = derived_rng(cfg.seed, stream::TRAIN_NOISE, &[]);
    let mut adam = Adam::new(cfg.learning_rate, cfg.adam);
    let initial = bnn_objective(net, data, cfg, kl_weight);
    check_finite(initial, 0)?;
    let mc = cfg.mc_loss_samples;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.inputs.select(Axis(0), batch);
            let t = data.targets.select(Axis(0), batch);
            let mut grads = net.zero_grads();
            let mut batch_loss = 0.0;
            for _ in 0..mc {
                let noise = net.draw_noise(&mut noise_rng);
                let sampled = net.realize(&noise);
                let cache = sampled.forward_cached(x.view());
                let (loss, grad) = mae_loss(&cache.output, t.view());
                let dense = sampled.backward(&cache, grad);
                for (((layer, g), n), acc) in net.layers.iter().zip(&dense).zip(&noise).zip(&mut grads) {
                    layer.accumulate_grad(g, n, 1.0 / mc as f64, acc);
                }
                batch_loss += loss / mc as f64;
            }
            if kl_weight > 0.0 {
                for (layer, acc) in net.layers.iter().zip(&mut grads) {
                    layer.accumulate_kl_grad(net.prior_std, kl_weight, acc);
                }
            }
            adam.step(net.tensors_mut(), bayes_grad_tensors(&grads));
            total += batch_loss * batch.len() as f64;
        }
        let mean = total / data.len() as f64 + kl_weight * net.kl();
        check_finite(mean, epoch)?;
        epochs.push(mean);
    }
    Ok(LossTrace { initial, epochs })
}
