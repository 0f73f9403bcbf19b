//! Moment-matching baseline: nearest neighbour in `(X, U, R_0.72)` against
//! simulated expected features on a regular `(log10 alpha, k)` grid.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::error::{Error, Result};
use crate::features::{compute_features, FeatureVector};
use crate::hk::{params_from_targets, sample_hk_with, LOG10_ALPHA_RANGE, K_RANGE};
use crate::nn::checkpoint;
use crate::rng::{derived_rng, stream};

/// Grid resolution `(log10 alpha values, k values)`.
pub const LOOKUP_SHAPE: (usize, usize) = (171, 101);

const GRID_FORMAT: &str = "hkq-moment-grid";

/// Result of a table lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatch {
    /// Cell centre; the standard deviations are the grid quantization `spacing / sqrt(12)`.
    pub prediction: Prediction,
    /// `(log10 alpha index, k index)` of the matched cell.
    pub cell: (usize, usize),
    /// The query lies outside the per-coordinate range spanned by the table.
    pub extrapolated: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridHeader {
    format: String,
    seed: u64,
    samples_per_cell: usize,
    log10_alpha: Vec<f64>,
    k: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentGrid {
    pub log10_alpha: Vec<f64>,
    pub k: Vec<f64>,
    pub samples_per_cell: usize,
    pub seed: u64,
    /// `(X, U, R_0.72)` per cell, `log10 alpha` major.
    pub entries: Vec<[f64; 3]>,
    scale: [f64; 3],
    lo: [f64; 3],
    hi: [f64; 3],
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn key(f: &FeatureVector) -> [f64; 3] {
    [f.x_stat, f.u_stat, f.r_072]
}

impl MomentGrid {
    /// Full-resolution table over the training box.
    pub fn build(samples_per_cell: usize, seed: u64) -> Result<Self> {
        Self::build_sized(LOOKUP_SHAPE.0, LOOKUP_SHAPE.1, samples_per_cell, seed)
    }

    pub fn build_sized(n_alpha: usize, n_k: usize, samples_per_cell: usize, seed: u64) -> Result<Self> {
        if n_alpha < 2 || n_k < 2 {
            return Err(Error::InvalidParameter("lookup grid needs at least 2 values per axis".into()));
        }
        let log10_alpha = linspace(LOG10_ALPHA_RANGE.0, LOG10_ALPHA_RANGE.1, n_alpha);
        let k = linspace(K_RANGE.0, K_RANGE.1, n_k);
        let entries = (0..n_alpha * n_k)
            .into_par_iter()
            .map(|c| {
                let (i, j) = (c / n_k, c % n_k);
                let params = params_from_targets(log10_alpha[i], k[j])?;
                let mut rng = derived_rng(seed, stream::LOOKUP, &[i as u64, j as u64]);
                let block = sample_hk_with(&params, samples_per_cell, &mut rng)?;
                Ok(key(&compute_features(&block)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(log10_alpha, k, samples_per_cell, seed, entries)
    }

    fn from_entries(
        log10_alpha: Vec<f64>,
        k: Vec<f64>,
        samples_per_cell: usize,
        seed: u64,
        entries: Vec<[f64; 3]>,
    ) -> Result<Self> {
        if entries.len() != log10_alpha.len() * k.len() || entries.is_empty() {
            return Err(Error::Shape { expected: log10_alpha.len() * k.len(), got: entries.len() });
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut mean = [0.0; 3];
        for e in &entries {
            for d in 0..3 {
                lo[d] = lo[d].min(e[d]);
                hi[d] = hi[d].max(e[d]);
                mean[d] += e[d] / entries.len() as f64;
            }
        }
        let mut scale = [0.0; 3];
        for d in 0..3 {
            let var = entries.iter().map(|e| (e[d] - mean[d]).powi(2)).sum::<f64>() / entries.len() as f64;
            scale[d] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(MomentGrid { log10_alpha, k, samples_per_cell, seed, entries, scale, lo, hi })
    }

    pub fn spacing(&self) -> [f64; 2] {
        [self.log10_alpha[1] - self.log10_alpha[0], self.k[1] - self.k[0]]
    }

    pub fn entry(&self, i: usize, j: usize) -> [f64; 3] {
        self.entries[i * self.k.len() + j]
    }

    /// Nearest cell in `(X, U, R_0.72)`, each coordinate scaled by its spread over the table.
    pub fn lookup(&self, features: &FeatureVector) -> Result<MomentMatch> {
        let q = key(features);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("features must be finite".into()));
        }
        let dist = |e: &[f64; 3]| (0..3).map(|d| ((e[d] - q[d]) / self.scale[d]).powi(2)).sum::<f64>();
        let (best, _) = self
            .entries
            .iter()
            .enumerate()
            .map(|(c, e)| (c, dist(e)))
            .fold((0, f64::INFINITY), |acc, (c, d)| if d < acc.1 { (c, d) } else { acc });
        let (i, j) = (best / self.k.len(), best % self.k.len());
        let extrapolated = (0..3).any(|d| q[d] < self.lo[d] || q[d] > self.hi[d]);
        let sp = self.spacing();
        let prediction = Prediction {
            mean_log10_alpha: self.log10_alpha[i],
            mean_k: self.k[j],
            std_log10_alpha: sp[0] / 12f64.sqrt(),
            std_k: sp[1] / 12f64.sqrt(),
            draws: vec![[self.log10_alpha[i], self.k[j]]],
            n_draws: 1,
        };
        Ok(MomentMatch { prediction, cell: (i, j), extrapolated })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = GridHeader {
            format: GRID_FORMAT.into(),
            seed: self.seed,
            samples_per_cell: self.samples_per_cell,
            log10_alpha: self.log10_alpha.clone(),
            k: self.k.clone(),
        };
        let flat: Vec<f64> = self.entries.iter().flatten().copied().collect();
        checkpoint::encode(&header, &[&flat])
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let (h, arrays): (GridHeader, Vec<Vec<f64>>) = checkpoint::decode(bytes, origin)?;
        if h.format != GRID_FORMAT || arrays.len() != 1 || arrays[0].len() % 3 != 0 {
            return Err(Error::format(origin, "not a moment-grid table"));
        }
        let entries = arrays[0].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::from_entries(h.log10_alpha, h.k, h.samples_per_cell, h.seed, entries)
            .map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
