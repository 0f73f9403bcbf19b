//! Raster workflows: the simulated two-layer phantom and sliding-window maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Estimator;
use crate::error::{Error, Result};
use crate::estimators::Prediction;
use crate::features::{average_features_over_frames, EnvelopeRaster, Skips};
use crate::hk::{HkParams, HkSampler, UNIT_DIFFUSE_SIGMA};
use crate::rng::{derived_rng, stream};

pub const PHANTOM_FRAMES: usize = 12;
/// Smallest number of decorrelated samples per frame a map window may hold.
pub const MIN_WINDOW_SAMPLES: usize = 1000;

/// Size of one phantom layer in raster samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub rows: usize,
    pub cols: usize,
}

impl Default for PatchGeometry {
    /// 128 x 128 = 16384 retained samples per frame with the default strides.
    fn default() -> Self {
        PatchGeometry { rows: 1920, cols: 512 }
    }
}

/// Two stacked homogeneous layers sharing `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub raster: EnvelopeRaster,
    /// 0 for the top layer, 1 for the bottom layer, row-major `rows x cols`.
    pub mask: Vec<u8>,
    pub top: HkParams,
    pub bottom: HkParams,
    pub geometry: PatchGeometry,
}

/// Builds a `frames x (2 * rows) x cols` raster: HK(`alpha_top`) above,
/// HK(`alpha_bottom`) below, diffuse power 1 and coherent amplitude `k` in both.
pub fn simulate_two_layer_phantom(
    alpha_top: f64,
    alpha_bottom: f64,
    k: f64,
    geometry: PatchGeometry,
    frames: usize,
    skips: Skips,
    seed: u64,
) -> Result<Phantom> {
    let top = HkParams::new(k, UNIT_DIFFUSE_SIGMA, alpha_top)?;
    let bottom = HkParams::new(k, UNIT_DIFFUSE_SIGMA, alpha_bottom)?;
    if frames == 0 {
        return Err(Error::InvalidParameter("phantom needs at least one frame".into()));
    }
    let retained = skips.retained(geometry.rows, geometry.cols);
    if retained < 2 {
        return Err(Error::InvalidParameter(format!(
            "patch {}x{} keeps {retained} samples after strides",
            geometry.rows, geometry.cols
        )));
    }
    let patch = geometry.rows * geometry.cols;
    let samplers = [HkSampler::new(top)?, HkSampler::new(bottom)?];
    let mut data = vec![0.0; frames * 2 * patch];
    data.par_chunks_mut(patch).enumerate().for_each(|(i, chunk)| {
        let (frame, layer) = (i / 2, i % 2);
        let mut rng = derived_rng(seed, stream::PHANTOM, &[frame as u64, layer as u64]);
        samplers[layer].fill(&mut rng, chunk);
    });
    let raster = EnvelopeRaster::new(frames, 2 * geometry.rows, geometry.cols, data)?;
    let mut mask = vec![0u8; 2 * patch];
    mask[patch..].fill(1);
    Ok(Phantom { raster, mask, top, bottom, geometry })
}

/// `frames x rows x cols` raster of i.i.d. HK samples; frame `f` uses its own derived generator.
pub fn simulate_homogeneous_raster(params: &HkParams, frames: usize, rows: usize, cols: usize, seed: u64) -> Result<EnvelopeRaster> {
    if frames == 0 || rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!("raster dims {frames}x{rows}x{cols} must be positive")));
    }
    let sampler = HkSampler::new(*params)?;
    let mut data = vec![0.0; frames * rows * cols];
    data.par_chunks_mut(rows * cols).enumerate().for_each(|(f, chunk)| {
        let mut rng = derived_rng(seed, stream::SIMULATE, &[f as u64]);
        sampler.fill(&mut rng, chunk);
    });
    EnvelopeRaster::new(frames, rows, cols, data)
}

/// Patch estimates and the derived alpha ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomReport {
    pub top: Prediction,
    pub bottom: Prediction,
    pub true_ratio: f64,
    /// `alpha_bottom / alpha_top` from the mean log10 estimates.
    pub ratio: f64,
    /// First-order propagation of the two patch standard deviations.
    pub ratio_std: f64,
}

/// Frame-averaged features of each layer, then one prediction per layer.
pub fn analyse_phantom(phantom: &Phantom, estimator: &dyn Estimator, skips: Skips) -> Result<PhantomReport> {
    let g = phantom.geometry;
    let top = average_features_over_frames(&phantom.raster.window(0, 0, g.rows, g.cols)?, skips)?;
    let bottom = average_features_over_frames(&phantom.raster.window(g.rows, 0, g.rows, g.cols)?, skips)?;
    let mut preds = estimator.predict_features(&[top, bottom])?;
    let bottom = preds.pop().expect("two predictions");
    let top = preds.pop().expect("two predictions");
    let (ratio, ratio_std) = alpha_ratio(&top, &bottom);
    Ok(PhantomReport { true_ratio: phantom.bottom.alpha / phantom.top.alpha, ratio, ratio_std, top, bottom })
}

/// `r = 10^(b - t)`; `sd(r) ≈ r ln 10 sqrt(sd_t^2 + sd_b^2)`.
pub fn alpha_ratio(top: &Prediction, bottom: &Prediction) -> (f64, f64) {
    let r = 10f64.powf(bottom.mean_log10_alpha - top.mean_log10_alpha);
    let sd = r * std::f64::consts::LN_10 * top.std_log10_alpha.hypot(bottom.std_log10_alpha);
    (r, sd)
}

/// Sliding-window geometry in raster samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub rows: usize,
    pub cols: usize,
    pub step_rows: usize,
    pub step_cols: usize,
}

/// Per-window estimates; matrices are indexed `[window row][window col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricMap {
    pub window: WindowSpec,
    /// Raster row and column of each window's top-left corner.
    pub row_origins: Vec<usize>,
    pub col_origins: Vec<usize>,
    pub mean_log10_alpha: Vec<Vec<f64>>,
    pub std_log10_alpha: Vec<Vec<f64>>,
    pub mean_k: Vec<Vec<f64>>,
    pub std_k: Vec<Vec<f64>>,
}

/// Slides `window` over the raster; each window's decorrelated samples are
/// reduced to frame-averaged features and passed to the estimator.
pub fn parametric_map(
    raster: &EnvelopeRaster,
    estimator: &dyn Estimator,
    window: WindowSpec,
    skips: Skips,
) -> Result<ParametricMap> {
    if window.step_rows == 0 || window.step_cols == 0 {
        return Err(Error::InvalidParameter("window steps must be positive".into()));
    }
    if window.rows > raster.rows() || window.cols > raster.cols() {
        return Err(Error::InvalidParameter(format!(
            "window {}x{} exceeds raster {}x{}",
            window.rows,
            window.cols,
            raster.rows(),
            raster.cols()
        )));
    }
    let retained = skips.retained(window.rows, window.cols);
    if retained < MIN_WINDOW_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "window keeps {retained} samples per frame after strides; at least {MIN_WINDOW_SAMPLES} are required"
        )));
    }
    let row_origins: Vec<usize> = (0..=raster.rows() - window.rows).step_by(window.step_rows).collect();
    let col_origins: Vec<usize> = (0..=raster.cols() - window.cols).step_by(window.step_cols).collect();
    let origins: Vec<(usize, usize)> =
        row_origins.iter().flat_map(|&r| col_origins.iter().map(move |&c| (r, c))).collect();
    let features = origins
        .par_iter()
        .map(|&(r, c)| average_features_over_frames(&raster.window(r, c, window.rows, window.cols)?, skips))
        .collect::<Result<Vec<_>>>()?;
    let preds = estimator.predict_features(&features)?;
    let nc = col_origins.len();
    let grid = |f: fn(&Prediction) -> f64| preds.chunks(nc).map(|row| row.iter().map(f).collect()).collect();
    Ok(ParametricMap {
        window,
        mean_log10_alpha: grid(|p| p.mean_log10_alpha),
        std_log10_alpha: grid(|p| p.std_log10_alpha),
        mean_k: grid(|p| p.mean_k),
        std_k: grid(|p| p.std_k),
        row_origins,
        col_origins,
    })
}
