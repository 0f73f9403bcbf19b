//! Envelope statistics used as network inputs, and the raster
//! decorrelation / frame-averaging pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hk::EnvelopeBlock;

/// Fractional moment orders.
pub const MOMENT_ORDERS: [f64; 2] = [0.72, 0.88];

/// Number of features.
pub const N_FEATURES: usize = 8;

/// Canonical feature names, in network-input order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["R_0.72", "R_0.88", "S_0.72", "S_0.88", "K_0.72", "K_0.88", "X", "U"];

/// Factor applied to the smallest positive amplitude to stand in for zeros.
pub const ZERO_REPLACEMENT_FACTOR: f64 = 1e-6;

/// Default strides: keep one sample, skip 14 axially and 3 laterally.
pub const DEFAULT_AXIAL_SKIP: usize = 14;
pub const DEFAULT_LATERAL_SKIP: usize = 3;

/// The eight envelope statistics, in canonical order
/// `[R_0.72, R_0.88, S_0.72, S_0.88, K_0.72, K_0.88, X, U]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub r_072: f64,
    pub r_088: f64,
    pub s_072: f64,
    pub s_088: f64,
    pub k_072: f64,
    pub k_088: f64,
    pub x_stat: f64,
    pub u_stat: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [self.r_072, self.r_088, self.s_072, self.s_088, self.k_072, self.k_088, self.x_stat, self.u_stat]
    }

    pub fn from_array(v: [f64; N_FEATURES]) -> Self {
        FeatureVector {
            r_072: v[0],
            r_088: v[1],
            s_072: v[2],
            s_088: v[3],
            k_072: v[4],
            k_088: v[5],
            x_stat: v[6],
            u_stat: v[7],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; N_FEATURES] = v.try_into().map_err(|_| Error::Shape { expected: N_FEATURES, got: v.len() })?;
        Ok(Self::from_array(arr))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Element-wise arithmetic mean.
    pub fn mean_of(items: &[FeatureVector]) -> Option<FeatureVector> {
        if items.is_empty() {
            return None;
        }
        let mut acc = [0.0; N_FEATURES];
        for f in items {
            for (a, v) in acc.iter_mut().zip(f.to_array()) {
                *a += v;
            }
        }
        let n = items.len() as f64;
        Some(FeatureVector::from_array(acc.map(|a| a / n)))
    }
}

/// Features together with bookkeeping about zero replacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureReport {
    pub features: FeatureVector,
    pub zeros_replaced: usize,
}

/// Evaluates the eight statistics on an envelope block.
pub fn compute_features(block: &EnvelopeBlock) -> Result<FeatureVector> {
    compute_features_report(block.samples()).map(|r| r.features)
}

/// Like [`compute_features`] on a raw slice, also reporting how many zero
/// amplitudes were replaced before taking logarithms.
pub fn compute_features_report(samples: &[f64]) -> Result<FeatureReport> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("need at least 2 samples, got {n}")));
    }
    let mut min_pos = f64::INFINITY;
    let mut zeros = 0usize;
    for &a in samples {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidParameter(format!("envelope sample {a} is not a finite nonnegative value")));
        }
        if a == 0.0 {
            zeros += 1;
        } else if a < min_pos {
            min_pos = a;
        }
    }
    if !min_pos.is_finite() {
        return Err(Error::Degenerate("all amplitudes are zero".into()));
    }
    let zero_sub = min_pos * ZERO_REPLACEMENT_FACTOR;
    let nf = n as f64;

    // Pass 1: A^v and log A, with their raw means.
    let mut pow_a = vec![[0.0f64; 2]; n];
    let mut log_a = Vec::with_capacity(n);
    let mut sum_p = [0.0f64; 2];
    let mut sum_log = 0.0;
    for (&a, p) in samples.iter().zip(pow_a.iter_mut()) {
        let a = if a == 0.0 { zero_sub } else { a };
        let l = a.ln();
        log_a.push(l);
        sum_log += l;
        p[0] = (MOMENT_ORDERS[0] * l).exp();
        p[1] = (MOMENT_ORDERS[1] * l).exp();
        sum_p[0] += p[0];
        sum_p[1] += p[1];
    }
    let mean_p = [sum_p[0] / nf, sum_p[1] / nf];
    // Log-intensity statistics are computed on I / exp(shift); X and U are
    // invariant to the shift, which keeps them exact under amplitude scaling.
    let log_shift = 2.0 * sum_log / nf;
    let i_scale = (-log_shift).exp();

    // Pass 2: central moments of A^v and shifted intensity sums.
    let mut c = [[0.0f64; 3]; 2];
    let mut sum_i = 0.0;
    let mut sum_i_log = 0.0;
    let mut sum_log_c = 0.0;
    for ((&a, &l), p) in samples.iter().zip(&log_a).zip(&pow_a) {
        let a = if a == 0.0 { zero_sub } else { a };
        for j in 0..2 {
            let d = p[j] - mean_p[j];
            let d2 = d * d;
            c[j][0] += d2;
            c[j][1] += d2 * d;
            c[j][2] += d2 * d2;
        }
        let li = 2.0 * l - log_shift;
        let i = a * a * i_scale;
        sum_i += i;
        sum_i_log += i * li;
        sum_log_c += li;
    }

    let mut r = [0.0; 2];
    let mut s = [0.0; 2];
    let mut k = [0.0; 2];
    for j in 0..2 {
        let var = c[j][0] / nf;
        if !(var > 0.0) || var <= f64::EPSILON * f64::EPSILON * mean_p[j] * mean_p[j] {
            return Err(Error::Degenerate(format!("zero variance of A^{}", MOMENT_ORDERS[j])));
        }
        r[j] = mean_p[j] / var.sqrt();
        s[j] = (c[j][1] / nf) / var.powf(1.5);
        k[j] = (c[j][2] / nf) / (var * var);
    }
    let mean_i = sum_i / nf;
    let mean_log = sum_log_c / nf;
    let x_stat = (sum_i_log / nf) / mean_i - mean_log;
    let u_stat = mean_log - mean_i.ln();

    let features = FeatureVector {
        r_072: r[0],
        r_088: r[1],
        s_072: s[0],
        s_088: s[1],
        k_072: k[0],
        k_088: k[1],
        x_stat,
        u_stat,
    };
    if !features.is_finite() {
        return Err(Error::Degenerate("non-finite feature value".into()));
    }
    Ok(FeatureReport { features, zeros_replaced: zeros })
}

/// Envelope data laid out as `frames x rows x cols`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRaster {
    rows: usize,
    cols: usize,
    frames: usize,
    data: Vec<f64>,
    /// Physical spacing (axial, lateral) in millimetres, if known.
    pub spacing_mm: Option<(f64, f64)>,
}

impl EnvelopeRaster {
    pub fn new(frames: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!("raster dims must be positive, got {frames}x{rows}x{cols}")));
        }
        let expected = frames * rows * cols;
        if data.len() != expected {
            return Err(Error::Shape { expected, got: data.len() });
        }
        Ok(EnvelopeRaster { rows, cols, frames, data, spacing_mm: None })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let len = self.rows * self.cols;
        &self.data[f * len..(f + 1) * len]
    }

    #[inline]
    pub fn at(&self, frame: usize, row: usize, col: usize) -> f64 {
        self.data[(frame * self.rows + row) * self.cols + col]
    }

    /// Copies the rectangle `rows x cols` starting at `(row0, col0)` of every frame.
    pub fn window(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<EnvelopeRaster> {
        if row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(Error::InvalidParameter(format!(
                "window {rows}x{cols} at ({row0}, {col0}) exceeds raster {}x{}",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.frames * rows * cols);
        for f in 0..self.frames {
            for r in row0..row0 + rows {
                let start = (f * self.rows + r) * self.cols + col0;
                data.extend_from_slice(&self.data[start..start + cols]);
            }
        }
        let mut w = EnvelopeRaster::new(self.frames, rows, cols, data)?;
        w.spacing_mm = self.spacing_mm;
        Ok(w)
    }
}

/// Sample strides for decorrelation: keep one, discard `skip`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skips {
    pub axial: usize,
    pub lateral: usize,
}

impl Default for Skips {
    fn default() -> Self {
        Skips { axial: DEFAULT_AXIAL_SKIP, lateral: DEFAULT_LATERAL_SKIP }
    }
}

impl Skips {
    pub fn none() -> Self {
        Skips { axial: 0, lateral: 0 }
    }

    /// Number of samples kept from a `rows x cols` frame.
    pub fn retained(&self, rows: usize, cols: usize) -> usize {
        rows.div_ceil(self.axial + 1) * cols.div_ceil(self.lateral + 1)
    }
}

/// Keeps every `(skip + 1)`-th row and column of one frame, row-major.
pub fn decorrelate_frame(raster: &EnvelopeRaster, frame: usize, skips: Skips) -> Result<EnvelopeBlock> {
    let kept = skips.retained(raster.rows, raster.cols);
    if kept < 2 {
        return Err(Error::Degenerate(format!(
            "{}x{} frame with skips ({}, {}) keeps {kept} sample(s); need at least 2",
            raster.rows, raster.cols, skips.axial, skips.lateral
        )));
    }
    let mut out = Vec::with_capacity(kept);
    for r in (0..raster.rows).step_by(skips.axial + 1) {
        for c in (0..raster.cols).step_by(skips.lateral + 1) {
            out.push(raster.at(frame, r, c));
        }
    }
    EnvelopeBlock::new(out)
}

/// Decorrelated block for every frame.
pub fn decorrelate(raster: &EnvelopeRaster, skips: Skips) -> Result<Vec<EnvelopeBlock>> {
    (0..raster.frames).map(|f| decorrelate_frame(raster, f, skips)).collect()
}

/// Per-frame features of the decorrelated samples, averaged across frames.
pub fn average_features_over_frames(raster: &EnvelopeRaster, skips: Skips) -> Result<FeatureVector> {
    let per_frame = (0..raster.frames)
        .map(|f| {
            decorrelate_frame(raster, f, skips)
                .and_then(|b| compute_features(&b))
                .map_err(|e| Error::Frame { frame: f, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureVector::mean_of(&per_frame).expect("raster has at least one frame"))
}
