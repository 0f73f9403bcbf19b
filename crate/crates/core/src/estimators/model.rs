use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{clamp_to_box, feature_matrix, Prediction, Standardizer, TrainingSet};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, N_FEATURES};
use crate::nn::bayes::{BayesDenseLayer, BayesMlp};
use crate::nn::checkpoint;
use crate::nn::dense::{DenseLayer, Mlp};
use crate::nn::{train_bnn, train_mlp, Architecture, Dataset, LossTrace, Parameters, TrainConfig};
use crate::rng::{derived_rng, stream};

/// Deterministic baseline: two hidden layers of 10 and 4 units.
pub const ANN_SIZES: [usize; 4] = [N_FEATURES, 10, 4, 2];
/// Bayesian network: hidden layers of 64 and 200 units, Bayesian head.
pub const BNN_SIZES: [usize; 4] = [N_FEATURES, 64, 200, 2];
/// Posterior draws per prediction.
pub const DEFAULT_DRAWS: usize = 50;

const MODEL_FORMAT: &str = "hkq-model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ann,
    Bnn,
}

impl EstimatorKind {
    pub fn default_sizes(self) -> &'static [usize] {
        match self {
            EstimatorKind::Ann => &ANN_SIZES,
            EstimatorKind::Bnn => &BNN_SIZES,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Ann => "ann",
            EstimatorKind::Bnn => "bnn",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ann" => Ok(EstimatorKind::Ann),
            "bnn" => Ok(EstimatorKind::Bnn),
            other => Err(Error::InvalidParameter(format!("unknown estimator '{other}' (expected ann or bnn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Ann(Mlp),
    Bnn(BayesMlp),
}

impl Network {
    fn architecture(&self) -> Architecture {
        match self {
            Network::Ann(n) => Architecture { sizes: n.sizes(), leaky_slope: n.slope, bayesian: false },
            Network::Bnn(n) => Architecture { sizes: n.sizes(), leaky_slope: n.slope, bayesian: true },
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Network::Ann(n) => n.tensors(),
            Network::Bnn(n) => n.tensors(),
        }
    }
}

/// Settings for [`Model::predict`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    /// Posterior draws for the Bayesian network; ignored by the ANN.
    pub n_draws: usize,
    pub seed: u64,
    /// Clamp every draw into the training box before summarizing.
    pub clamp: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions { n_draws: DEFAULT_DRAWS, seed: 0, clamp: false }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    format: String,
    kind: EstimatorKind,
    n_s: usize,
    architecture: Architecture,
    prior_std: Option<f64>,
    feature_scaler: Standardizer,
    target_scaler: Standardizer,
    train_config: TrainConfig,
    training_records: usize,
    training_seed: u64,
}

/// A trained estimator for one sample size, with its standardization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: EstimatorKind,
    pub n_s: usize,
    pub feature_scaler: Standardizer,
    pub target_scaler: Standardizer,
    pub train_config: TrainConfig,
    pub training_records: usize,
    pub training_seed: u64,
    pub network: Network,
}

impl Model {
    /// Trains the default architecture for `kind`.
    pub fn fit(kind: EstimatorKind, set: &TrainingSet, cfg: &TrainConfig) -> Result<(Model, LossTrace)> {
        Self::fit_with_sizes(kind, kind.default_sizes(), set, cfg)
    }

    /// Trains in standardized feature and target space.
    pub fn fit_with_sizes(
        kind: EstimatorKind,
        sizes: &[usize],
        set: &TrainingSet,
        cfg: &TrainConfig,
    ) -> Result<(Model, LossTrace)> {
        if sizes.len() < 2 || sizes[0] != N_FEATURES || sizes[sizes.len() - 1] != 2 {
            return Err(Error::InvalidParameter(format!("architecture {sizes:?} must map {N_FEATURES} inputs to 2 outputs")));
        }
        let feature_scaler = Standardizer::fit(set.features.view())?;
        let target_scaler = Standardizer::fit(set.targets.view())?;
        let data =
            Dataset::new(feature_scaler.apply(set.features.view()), target_scaler.apply(set.targets.view()))?;
        let mut init = derived_rng(cfg.seed, stream::TRAIN_INIT, &[]);
        let (network, trace) = match kind {
            EstimatorKind::Ann => {
                let mut net = Mlp::new(sizes, &mut init);
                let trace = train_mlp(&mut net, &data, cfg)?;
                (Network::Ann(net), trace)
            }
            EstimatorKind::Bnn => {
                let mut net = BayesMlp::new(sizes, &mut init);
                let trace = train_bnn(&mut net, &data, cfg)?;
                (Network::Bnn(net), trace)
            }
        };
        let model = Model {
            kind,
            n_s: set.n_s,
            feature_scaler,
            target_scaler,
            train_config: cfg.clone(),
            training_records: set.len(),
            training_seed: set.seed,
            network,
        };
        Ok((model, trace))
    }

    /// Errors unless the model was trained for `n_s`, or `force` is set.
    pub fn check_sample_size(&self, n_s: usize, force: bool) -> Result<()> {
        if n_s != self.n_s && !force {
            return Err(Error::ModelMismatch(format!(
                "model was trained for n_s = {}, input has n_s = {n_s} (use force to override)",
                self.n_s
            )));
        }
        Ok(())
    }

    pub fn is_bayesian(&self) -> bool {
        matches!(self.network, Network::Bnn(_))
    }

    pub fn predict(&self, features: &FeatureVector, opts: &PredictOptions) -> Result<Prediction> {
        Ok(self.predict_batch(std::slice::from_ref(features), opts)?.remove(0))
    }

    /// Predictions for many feature vectors. For the Bayesian network, draw
    /// `d` uses the same weights for every row, so batched and one-by-one
    /// predictions agree.
    pub fn predict_batch(&self, features: &[FeatureVector], opts: &PredictOptions) -> Result<Vec<Prediction>> {
        if let Some(i) = features.iter().position(|f| !f.is_finite()) {
            return Err(Error::InvalidParameter(format!("feature vector {i} is not finite")));
        }
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.feature_scaler.apply(feature_matrix(features).view());
        let outputs: Vec<Array2<f64>> = match &self.network {
            Network::Ann(net) => vec![net.forward_batch(x.view())],
            Network::Bnn(net) => {
                if opts.n_draws < 2 {
                    return Err(Error::InvalidParameter(format!(
                        "uncertainty needs at least 2 draws, got {}",
                        opts.n_draws
                    )));
                }
                (0..opts.n_draws as u64)
                    .into_par_iter()
                    .map(|d| net.sample(&mut derived_rng(opts.seed, stream::PREDICT, &[d])).forward_batch(x.view()))
                    .collect()
            }
        };
        let outputs: Vec<Array2<f64>> = outputs.iter().map(|o| self.target_scaler.invert(o.view())).collect();
        (0..features.len())
            .map(|i| {
                let draws = outputs
                    .iter()
                    .map(|o| {
                        let row = o.index_axis(Axis(0), i);
                        let t = [row[0], row[1]];
                        if opts.clamp {
                            clamp_to_box(t)
                        } else {
                            t
                        }
                    })
                    .collect();
                Prediction::from_draws(draws)
            })
            .collect()
    }

    fn header(&self) -> ModelHeader {
        ModelHeader {
            format: MODEL_FORMAT.into(),
            kind: self.kind,
            n_s: self.n_s,
            architecture: self.network.architecture(),
            prior_std: match &self.network {
                Network::Bnn(n) => Some(n.prior_std),
                Network::Ann(_) => None,
            },
            feature_scaler: self.feature_scaler.clone(),
            target_scaler: self.target_scaler.clone(),
            train_config: self.train_config.clone(),
            training_records: self.training_records,
            training_seed: self.training_seed,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::encode(&self.header(), &self.network.tensors())
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Model> {
        let (header, arrays): (ModelHeader, _) = checkpoint::decode(bytes, origin)?;
        Self::from_parts(header, arrays).map_err(|e| match e {
            Error::ModelMismatch(reason) | Error::InvalidParameter(reason) => Error::format(origin, reason),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn from_parts(h: ModelHeader, arrays: Vec<Vec<f64>>) -> Result<Model> {
        if h.format != MODEL_FORMAT {
            return Err(Error::ModelMismatch(format!("unexpected format tag '{}'", h.format)));
        }
        let sizes = &h.architecture.sizes;
        if sizes.len() < 2 || sizes[0] != N_FEATURES || sizes[sizes.len() - 1] != 2 {
            return Err(Error::ModelMismatch(format!("unsupported architecture {sizes:?}")));
        }
        if h.architecture.bayesian != (h.kind == EstimatorKind::Bnn) {
            return Err(Error::ModelMismatch("architecture and estimator kind disagree".into()));
        }
        h.feature_scaler.validate()?;
        h.target_scaler.validate()?;
        if h.feature_scaler.dim() != N_FEATURES || h.target_scaler.dim() != 2 {
            return Err(Error::ModelMismatch("standardizer dimensions do not match the architecture".into()));
        }
        let network = match h.kind {
            EstimatorKind::Ann => {
                let mut net = Mlp {
                    layers: sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect(),
                    slope: h.architecture.leaky_slope,
                };
                checkpoint::fill_tensors(net.tensors_mut(), &arrays)?;
                Network::Ann(net)
            }
            EstimatorKind::Bnn => {
                let mut net = BayesMlp {
                    layers: sizes
                        .windows(2)
                        .map(|w| BayesDenseLayer::point_mass(&DenseLayer::zeros(w[0], w[1])))
                        .collect(),
                    slope: h.architecture.leaky_slope,
                    prior_std: h.prior_std.unwrap_or(crate::nn::bayes::PRIOR_STD),
                };
                checkpoint::fill_tensors(net.tensors_mut(), &arrays)?;
                Network::Bnn(net)
            }
        };
        Ok(Model {
            kind: h.kind,
            n_s: h.n_s,
            feature_scaler: h.feature_scaler,
            target_scaler: h.target_scaler,
            train_config: h.train_config,
            training_records: h.training_records,
            training_seed: h.training_seed,
            network,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::make_training_set;

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig { epochs: 3, batch_size: 32, seed, ..Default::default() }
    }

    fn small_model(kind: EstimatorKind) -> Model {
        let set = make_training_set(512, 64, 1).unwrap();
        Model::fit_with_sizes(kind, &[8, 6, 2], &set, &quick_config(2)).unwrap().0
    }

    #[test]
    fn kind_parses_and_rejects_unknown() {
        assert_eq!("BNN".parse::<EstimatorKind>().unwrap(), EstimatorKind::Bnn);
        assert_eq!(EstimatorKind::Ann.to_string(), "ann");
        assert!("xu".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_byte_exact() {
        for kind in [EstimatorKind::Ann, EstimatorKind::Bnn] {
            let m = small_model(kind);
            let bytes = m.to_bytes().unwrap();
            let back = Model::from_bytes(&bytes, Path::new("mem")).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn bayesian_predictions_are_seeded_and_batch_consistent() {
        let m = small_model(EstimatorKind::Bnn);
        let set = make_training_set(512, 3, 9).unwrap();
        let feats: Vec<FeatureVector> =
            set.features.rows().into_iter().map(|r| FeatureVector::from_slice(r.as_slice().unwrap()).unwrap()).collect();
        let opts = PredictOptions { n_draws: 10, seed: 4, clamp: false };
        let batch = m.predict_batch(&feats, &opts).unwrap();
        for (f, p) in feats.iter().zip(&batch) {
            assert_eq!(&m.predict(f, &opts).unwrap(), p);
            assert_eq!(p.n_draws, 10);
            assert!(p.std_log10_alpha > 0.0);
        }
        assert!(m.predict(&feats[0], &PredictOptions { n_draws: 1, ..opts }).is_err());
    }

    #[test]
    fn zero_variance_posterior_gives_zero_std() {
        let mut m = small_model(EstimatorKind::Bnn);
        if let Network::Bnn(net) = &mut m.network {
            for l in &mut net.layers {
                l.weight_rho.fill(f64::NEG_INFINITY);
                l.bias_rho.fill(f64::NEG_INFINITY);
            }
        }
        let f = FeatureVector::from_array([2.0, 1.8, 0.5, 0.6, 3.0, 3.2, 1.1, -0.6]);
        let p = m.predict(&f, &PredictOptions { n_draws: 5, seed: 1, clamp: false }).unwrap();
        assert_eq!((p.std_log10_alpha, p.std_k), (0.0, 0.0));
    }

    #[test]
    fn ann_prediction_is_a_single_draw() {
        let m = small_model(EstimatorKind::Ann);
        let f = FeatureVector::from_array([2.0, 1.8, 0.5, 0.6, 3.0, 3.2, 1.1, -0.6]);
        let p = m.predict(&f, &PredictOptions::default()).unwrap();
        assert_eq!(p.n_draws, 1);
        assert_eq!(p.std(), [0.0, 0.0]);
        let clamped = m.predict(&f, &PredictOptions { clamp: true, ..Default::default() }).unwrap();
        assert_eq!(clamped.mean(), clamp_to_box(p.mean()));
    }

    #[test]
    fn sample_size_mismatch_requires_force() {
        let m = small_model(EstimatorKind::Ann);
        assert!(m.check_sample_size(512, false).is_ok());
        assert!(matches!(m.check_sample_size(1024, false), Err(Error::ModelMismatch(_))));
        assert!(m.check_sample_size(1024, true).is_ok());
    }

    #[test]
    fn corrupted_header_is_a_format_error() {
        let m = small_model(EstimatorKind::Ann);
        let mut bytes = m.to_bytes().unwrap();
        let pos = bytes.windows(9).position(|w| w == b"hkq-model").unwrap();
        bytes[pos] = b'x';
        assert!(Model::from_bytes(&bytes, Path::new("mem")).unwrap_err().is_io());
    }
}
