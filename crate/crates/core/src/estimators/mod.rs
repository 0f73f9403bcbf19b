//! Estimators mapping envelope features to `(log10 alpha, k)`.

mod lookup;
mod model;

pub use lookup::{MomentGrid, MomentMatch, LOOKUP_SHAPE};
pub use model::{EstimatorKind, Model, Network, PredictOptions, ANN_SIZES, BNN_SIZES, DEFAULT_DRAWS};

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_features, FeatureVector, N_FEATURES};
use crate::hk::{params_from_targets, sample_hk_with, LOG10_ALPHA_RANGE, K_RANGE};
use crate::rng::{derived_rng, stream};

/// Training records per sample size.
pub const DEFAULT_TRAINING_RECORDS: usize = 10_000;
/// Sample sizes the paper protocol trains separate models for.
pub const SUPPORTED_SAMPLE_SIZES: [usize; 4] = [1024, 4096, 16384, 65536];
/// Redraws allowed per record before giving up on degenerate blocks.
const MAX_REDRAWS: u64 = 16;

/// Monte-Carlo summary over `(log10 alpha, k)` draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean_log10_alpha: f64,
    pub mean_k: f64,
    pub std_log10_alpha: f64,
    pub std_k: f64,
    pub draws: Vec<[f64; 2]>,
    pub n_draws: usize,
}

impl Prediction {
    /// Mean and population standard deviation of the draws.
    pub fn from_draws(draws: Vec<[f64; 2]>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidParameter("prediction needs at least one draw".into()));
        }
        let n = draws.len() as f64;
        let mean = |j: usize| draws.iter().map(|d| d[j]).sum::<f64>() / n;
        let (ma, mk) = (mean(0), mean(1));
        let std = |j: usize, m: f64| (draws.iter().map(|d| (d[j] - m).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Prediction {
            mean_log10_alpha: ma,
            mean_k: mk,
            std_log10_alpha: std(0, ma),
            std_k: std(1, mk),
            n_draws: draws.len(),
            draws,
        })
    }

    /// Single deterministic estimate.
    pub fn point(log10_alpha: f64, k: f64) -> Self {
        Prediction {
            mean_log10_alpha: log10_alpha,
            mean_k: k,
            std_log10_alpha: 0.0,
            std_k: 0.0,
            draws: vec![[log10_alpha, k]],
            n_draws: 1,
        }
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.mean_log10_alpha, self.mean_k]
    }

    pub fn std(&self) -> [f64; 2] {
        [self.std_log10_alpha, self.std_k]
    }
}

/// Clamps a `(log10 alpha, k)` pair into the training box.
pub fn clamp_to_box(t: [f64; 2]) -> [f64; 2] {
    [t[0].clamp(LOG10_ALPHA_RANGE.0, LOG10_ALPHA_RANGE.1), t[1].clamp(K_RANGE.0, K_RANGE.1)]
}

/// Per-column affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column means and population standard deviations of `rows`.
    pub fn fit(rows: ArrayView2<f64>) -> Result<Self> {
        let n = rows.nrows();
        if n < 2 {
            return Err(Error::Degenerate(format!("need at least 2 rows to standardize, got {n}")));
        }
        let mut mean = Vec::with_capacity(rows.ncols());
        let mut std = Vec::with_capacity(rows.ncols());
        for (j, col) in rows.columns().into_iter().enumerate() {
            let m = col.sum() / n as f64;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Degenerate(format!("column {j} has zero or non-finite spread")));
            }
            mean.push(m);
            std.push(s);
        }
        Ok(Standardizer { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Shape { expected: self.mean.len(), got: self.std.len() });
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("standardizer constants must be finite with positive spread".into()));
        }
        Ok(())
    }

    pub fn apply(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn invert(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out
    }
}

/// Simulated `(features, targets)` pairs for one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub n_s: usize,
    pub seed: u64,
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    /// Blocks regenerated because their features were degenerate.
    pub redraws: usize,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }
}

fn training_record(n_s: usize, seed: u64, index: u64) -> Result<([f64; N_FEATURES], [f64; 2], usize)> {
    let mut last_err = None;
    for attempt in 0..MAX_REDRAWS {
        let mut rng = derived_rng(seed, stream::TRAIN_SET, &[index, attempt]);
        let la = rng.random_range(LOG10_ALPHA_RANGE.0..=LOG10_ALPHA_RANGE.1);
        let k = rng.random_range(K_RANGE.0..=K_RANGE.1);
        let block = sample_hk_with(&params_from_targets(la, k)?, n_s, &mut rng)?;
        match compute_features(&block) {
            Ok(f) if f.is_finite() => return Ok((f.to_array(), [la, k], attempt as usize)),
            Ok(_) => last_err = Some(Error::Degenerate("non-finite features".into())),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Draws `count` records with `log10 alpha ~ U[-0.3, 1.4]`, `k ~ U[0, 1]`,
/// `n_s` envelope samples each. Records are generated in parallel from
/// per-record seeds, so the result does not depend on the thread count.
pub fn make_training_set(n_s: usize, count: usize, seed: u64) -> Result<TrainingSet> {
    if n_s < 2 {
        return Err(Error::InvalidParameter(format!("n_s = {n_s} must be at least 2")));
    }
    if count == 0 {
        return Err(Error::InvalidParameter("count must be positive".into()));
    }
    let records = (0..count as u64)
        .into_par_iter()
        .map(|i| training_record(n_s, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let mut features = Array2::zeros((count, N_FEATURES));
    let mut targets = Array2::zeros((count, 2));
    let mut redraws = 0;
    for (i, (f, t, r)) in records.into_iter().enumerate() {
        features.row_mut(i).assign(&ndarray::ArrayView1::from(&f));
        targets.row_mut(i).assign(&ndarray::ArrayView1::from(&t));
        redraws += r;
    }
    Ok(TrainingSet { n_s, seed, features, targets, redraws })
}

/// Stacks feature vectors into an `n x 8` matrix.
pub fn feature_matrix(features: &[FeatureVector]) -> Array2<f64> {
    let mut m = Array2::zeros((features.len(), N_FEATURES));
    for (mut row, f) in m.rows_mut().into_iter().zip(features) {
        row.assign(&ndarray::ArrayView1::from(&f.to_array()));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn prediction_summaries_follow_draws() {
        let p = Prediction::from_draws(vec![[0.1, 0.5], [0.3, 0.7], [0.2, 0.6]]).unwrap();
        assert!((p.mean_log10_alpha - 0.2).abs() < 1e-15);
        assert!((p.mean_k - 0.6).abs() < 1e-15);
        let pop = (0.02f64 / 3.0).sqrt();
        assert!((p.std_log10_alpha - pop).abs() < 1e-15);
        assert_eq!(p.n_draws, 3);
        assert!(Prediction::from_draws(vec![]).is_err());
        let q = Prediction::point(0.4, 0.2);
        assert_eq!((q.n_draws, q.std_k, q.std_log10_alpha), (1, 0.0, 0.0));
    }

    #[test]
    fn standardizer_round_trip() {
        let x = array![[1.0, 10.0], [2.0, 30.0], [4.0, 20.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        let z = s.apply(x.view());
        for col in z.columns() {
            assert!(col.sum().abs() < 1e-12);
            assert!((col.mapv(|v| v * v).sum() / 3.0 - 1.0).abs() < 1e-12);
        }
        let back = s.invert(z.view());
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(Standardizer::fit(array![[1.0, 2.0], [1.0, 3.0]].view()).is_err());
    }

    #[test]
    fn training_set_is_deterministic_and_in_box() {
        let a = make_training_set(256, 40, 3).unwrap();
        let b = make_training_set(256, 40, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        for t in a.targets.rows() {
            assert!((LOG10_ALPHA_RANGE.0..=LOG10_ALPHA_RANGE.1).contains(&t[0]));
            assert!((0.0..=1.0).contains(&t[1]));
        }
        assert_ne!(a, make_training_set(256, 40, 4).unwrap());
        assert!(make_training_set(256, 0, 3).is_err());
        assert!(make_training_set(1, 5, 3).is_err());
    }

    #[test]
    fn clamp_limits_both_targets() {
        assert_eq!(clamp_to_box([2.0, -0.1]), [1.4, 0.0]);
        assert_eq!(clamp_to_box([0.2, 0.3]), [0.2, 0.3]);
    }
}
