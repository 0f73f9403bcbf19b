//! Test-grid protocol, error metrics, map emission and the two-layer phantom.

mod maps;
mod raster;

pub use maps::{map_to_csv, map_to_pgm, write_grid_outputs, MapFormat};
pub use raster::{
    alpha_ratio, analyse_phantom, parametric_map, simulate_homogeneous_raster, simulate_two_layer_phantom, ParametricMap, PatchGeometry, Phantom,
    PhantomReport, WindowSpec, MIN_WINDOW_SAMPLES, PHANTOM_FRAMES,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Model, MomentGrid, PredictOptions, Prediction};
use crate::features::{compute_features, FeatureVector};
use crate::hk::{params_from_targets, sample_hk_with, K_RANGE, LOG10_ALPHA_RANGE};
use crate::rng::{derived_rng, stream};

/// Small constant in the RRMSE denominator.
pub const RRMSE_EPS: f64 = 0.001;

/// `sqrt(mean((y - p)^2) / (|y| + eps))`.
pub fn rrmse(y: f64, preds: &[f64], eps: f64) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidParameter("rrmse of an empty prediction set".into()));
    }
    let mse = preds.iter().map(|p| (y - p).powi(2)).sum::<f64>() / preds.len() as f64;
    Ok((mse / (y.abs() + eps)).sqrt())
}

/// Mean absolute deviation of `preds` from `y`.
pub fn mae(y: f64, preds: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidParameter("mae of an empty prediction set".into()));
    }
    Ok(preds.iter().map(|p| (y - p).abs()).sum::<f64>() / preds.len() as f64)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("spearman needs at least 2 points".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m).powi(2);
        syy += (b - m).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("spearman of a constant sequence".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Ground-truth grid with `reps` independent blocks per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub log10_alpha_values: Vec<f64>,
    pub k_values: Vec<f64>,
    pub reps: usize,
    pub n_s: usize,
}

impl EvalGrid {
    /// 31 x 11 cells, 100 repetitions each, endpoints inclusive.
    pub fn paper(n_s: usize) -> Self {
        Self::uniform(31, 11, 100, n_s)
    }

    pub fn uniform(n_alpha: usize, n_k: usize, reps: usize, n_s: usize) -> Self {
        EvalGrid {
            log10_alpha_values: linspace(LOG10_ALPHA_RANGE.0, LOG10_ALPHA_RANGE.1, n_alpha),
            k_values: linspace(K_RANGE.0, K_RANGE.1, n_k),
            reps,
            n_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.log10_alpha_values.is_empty() || self.k_values.is_empty() || self.reps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one cell and one repetition".into()));
        }
        if self.n_s < 2 {
            return Err(Error::InvalidParameter(format!("n_s = {} must be at least 2", self.n_s)));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.log10_alpha_values.len() * self.k_values.len()
    }

    /// Ground truth of cell `c` (log10 alpha major).
    pub fn truth(&self, c: usize) -> [f64; 2] {
        let nk = self.k_values.len();
        [self.log10_alpha_values[c / nk], self.k_values[c % nk]]
    }
}

/// Simulated features for every block of a grid, cell-major then repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples {
    pub grid: EvalGrid,
    pub seed: u64,
    pub features: Vec<FeatureVector>,
}

impl GridSamples {
    pub fn truths(&self) -> Vec<[f64; 2]> {
        (0..self.features.len()).map(|i| self.grid.truth(i / self.grid.reps)).collect()
    }
}

/// Generates every block of the grid from per-block derived seeds and keeps
/// only its features, so all estimators see identical inputs.
pub fn simulate_grid(grid: &EvalGrid, seed: u64) -> Result<GridSamples> {
    grid.validate()?;
    let nk = grid.k_values.len() as u64;
    let features = (0..grid.cells() * grid.reps)
        .into_par_iter()
        .map(|b| {
            let (c, r) = ((b / grid.reps) as u64, (b % grid.reps) as u64);
            let t = grid.truth(c as usize);
            let mut rng = derived_rng(seed, stream::GRID, &[c / nk, c % nk, r]);
            let block = sample_hk_with(&params_from_targets(t[0], t[1])?, grid.n_s, &mut rng)?;
            compute_features(&block)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridSamples { grid: grid.clone(), seed, features })
}

/// Per-cell metrics over the repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub log10_alpha: f64,
    pub k: f64,
    pub rrmse_alpha: f64,
    pub mae_alpha: f64,
    pub rrmse_k: f64,
    pub mae_k: f64,
    /// Mean predicted standard deviation over repetitions (zero for point estimators).
    pub mean_std_alpha: f64,
    pub mean_std_k: f64,
}

/// Unweighted means of the cell metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rrmse_alpha: f64,
    pub mae_alpha: f64,
    pub rrmse_k: f64,
    pub mae_k: f64,
    pub mean_std_alpha: f64,
    pub mean_std_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub estimator: String,
    pub grid: EvalGrid,
    pub seed: u64,
    /// `log10 alpha` major, `k` minor.
    pub cells: Vec<MetricCell>,
    pub aggregate: Aggregate,
}

impl GridResult {
    /// One value per cell as a `log10 alpha` x `k` matrix.
    pub fn map(&self, f: impl Fn(&MetricCell) -> f64) -> Vec<Vec<f64>> {
        self.cells.chunks(self.grid.k_values.len()).map(|row| row.iter().map(&f).collect()).collect()
    }
}

/// Scores predictions against the grid truth: repetitions give one metric
/// per cell, cells are then averaged without weights.
pub fn score_predictions(name: &str, samples: &GridSamples, preds: &[Prediction]) -> Result<GridResult> {
    let grid = &samples.grid;
    if preds.len() != grid.cells() * grid.reps {
        return Err(Error::Shape { expected: grid.cells() * grid.reps, got: preds.len() });
    }
    let cells = preds
        .chunks(grid.reps)
        .enumerate()
        .map(|(c, ps)| {
            let t = grid.truth(c);
            let a: Vec<f64> = ps.iter().map(|p| p.mean_log10_alpha).collect();
            let k: Vec<f64> = ps.iter().map(|p| p.mean_k).collect();
            let n = ps.len() as f64;
            let cell = MetricCell {
                log10_alpha: t[0],
                k: t[1],
                rrmse_alpha: rrmse(t[0], &a, RRMSE_EPS)?,
                mae_alpha: mae(t[0], &a)?,
                rrmse_k: rrmse(t[1], &k, RRMSE_EPS)?,
                mae_k: mae(t[1], &k)?,
                mean_std_alpha: ps.iter().map(|p| p.std_log10_alpha).sum::<f64>() / n,
                mean_std_k: ps.iter().map(|p| p.std_k).sum::<f64>() / n,
            };
            if [cell.rrmse_alpha, cell.mae_alpha, cell.rrmse_k, cell.mae_k, cell.mean_std_alpha, cell.mean_std_k]
                .iter()
                .any(|v| !v.is_finite())
            {
                return Err(Error::Degenerate(format!("non-finite metrics in cell {c}")));
            }
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = cells.len() as f64;
    let mean = |f: fn(&MetricCell) -> f64| cells.iter().map(f).sum::<f64>() / n;
    let aggregate = Aggregate {
        rrmse_alpha: mean(|c| c.rrmse_alpha),
        mae_alpha: mean(|c| c.mae_alpha),
        rrmse_k: mean(|c| c.rrmse_k),
        mae_k: mean(|c| c.mae_k),
        mean_std_alpha: mean(|c| c.mean_std_alpha),
        mean_std_k: mean(|c| c.mean_std_k),
    };
    Ok(GridResult { estimator: name.to_string(), grid: grid.clone(), seed: samples.seed, cells, aggregate })
}

/// Anything that maps a batch of feature vectors to predictions.
pub trait Estimator: Sync {
    fn name(&self) -> String;

    /// Sample size the estimator was built for, if it is tied to one.
    fn sample_size(&self) -> Option<usize>;

    fn predict_features(&self, features: &[FeatureVector]) -> Result<Vec<Prediction>>;
}

/// A trained network together with its prediction settings.
pub struct ModelEstimator<'a> {
    pub model: &'a Model,
    pub options: PredictOptions,
}

impl Estimator for ModelEstimator<'_> {
    fn name(&self) -> String {
        self.model.kind.to_string()
    }

    fn sample_size(&self) -> Option<usize> {
        Some(self.model.n_s)
    }

    fn predict_features(&self, features: &[FeatureVector]) -> Result<Vec<Prediction>> {
        self.model.predict_batch(features, &self.options)
    }
}

impl Estimator for MomentGrid {
    fn name(&self) -> String {
        "moment-grid".into()
    }

    fn sample_size(&self) -> Option<usize> {
        None
    }

    fn predict_features(&self, features: &[FeatureVector]) -> Result<Vec<Prediction>> {
        features.par_iter().map(|f| self.lookup(f).map(|m| m.prediction)).collect()
    }
}

/// Returns the same estimate for every input.
pub struct ConstantEstimator(pub [f64; 2]);

impl Estimator for ConstantEstimator {
    fn name(&self) -> String {
        "constant".into()
    }

    fn sample_size(&self) -> Option<usize> {
        None
    }

    fn predict_features(&self, features: &[FeatureVector]) -> Result<Vec<Prediction>> {
        Ok(features.iter().map(|_| Prediction::point(self.0[0], self.0[1])).collect())
    }
}

/// Errors when `estimator` is tied to a different sample size than the grid, unless `force`.
pub fn check_grid_sample_size(estimator: &dyn Estimator, grid: &EvalGrid, force: bool) -> Result<()> {
    match estimator.sample_size() {
        Some(n) if n != grid.n_s && !force => Err(Error::ModelMismatch(format!(
            "estimator was built for n_s = {n}, grid uses n_s = {} (use force to override)",
            grid.n_s
        ))),
        _ => Ok(()),
    }
}

/// Runs one estimator on pre-simulated grid features.
pub fn evaluate_on(estimator: &dyn Estimator, samples: &GridSamples, force: bool) -> Result<GridResult> {
    check_grid_sample_size(estimator, &samples.grid, force)?;
    let preds = estimator.predict_features(&samples.features)?;
    score_predictions(&estimator.name(), samples, &preds)
}

/// Simulates the grid and evaluates one estimator on it.
pub fn run_grid(estimator: &dyn Estimator, grid: &EvalGrid, seed: u64, force: bool) -> Result<GridResult> {
    check_grid_sample_size(estimator, grid, force)?;
    evaluate_on(estimator, &simulate_grid(grid, seed)?, force)
}
