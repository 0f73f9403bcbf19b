//! Homodyned-K parameterization and the compound-Gaussian envelope sampler.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derived_rng, rng_from, stream, Rng};

/// Training box for log10(alpha).
pub const LOG10_ALPHA_RANGE: (f64, f64) = (-0.3, 1.4);
/// Training box for k.
pub const K_RANGE: (f64, f64) = (0.0, 1.0);

/// Diffuse scale that normalizes the diffuse power `2 sigma^2` to one.
pub const UNIT_DIFFUSE_SIGMA: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Ground-truth HK parameters.
///
/// `sigma` is the per-quadrature scale of the diffuse component *after* the
/// `sqrt(Z / alpha)` normalization of the sampler, so the diffuse power is
/// `2 sigma^2` for every alpha and `k = epsilon / sqrt(2 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HkParams {
    pub epsilon: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl HkParams {
    pub fn new(epsilon: f64, sigma: f64, alpha: f64) -> Result<Self> {
        let p = HkParams { epsilon, sigma, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.sigma.is_finite() && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite HK parameters {self:?}")));
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon = {} < 0", self.epsilon)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("sigma = {} <= 0", self.sigma)));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!("alpha = {} <= 0", self.alpha)));
        }
        Ok(())
    }

    pub fn log10_alpha(&self) -> f64 {
        self.alpha.log10()
    }

    /// Coherent-to-diffuse amplitude ratio.
    pub fn k(&self) -> f64 {
        self.epsilon / (2.0 * self.sigma * self.sigma).sqrt()
    }

    /// `E[A^2] = epsilon^2 + 2 sigma^2`.
    pub fn mean_intensity(&self) -> f64 {
        self.epsilon * self.epsilon + 2.0 * self.sigma * self.sigma
    }

    /// Whether `(log10 alpha, k)` lies inside the training box.
    pub fn in_training_box(&self) -> bool {
        in_training_box(self.log10_alpha(), self.k())
    }
}

pub fn in_training_box(log10_alpha: f64, k: f64) -> bool {
    (LOG10_ALPHA_RANGE.0..=LOG10_ALPHA_RANGE.1).contains(&log10_alpha)
        && (K_RANGE.0..=K_RANGE.1).contains(&k)
}

/// Maps regression targets to sampler parameters with unit diffuse power.
///
/// Values outside the training box are accepted; check
/// [`HkParams::in_training_box`] to flag them.
pub fn params_from_targets(log10_alpha: f64, k: f64) -> Result<HkParams> {
    if !log10_alpha.is_finite() || !k.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "non-finite targets (log10_alpha = {log10_alpha}, k = {k})"
        )));
    }
    if k < 0.0 {
        return Err(Error::InvalidParameter(format!("k = {k} < 0")));
    }
    HkParams::new(k, UNIT_DIFFUSE_SIGMA, 10f64.powf(log10_alpha))
}

/// A block of i.i.d. envelope amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeBlock {
    samples: Vec<f64>,
}

impl EnvelopeBlock {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Degenerate(format!(
                "envelope block needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidParameter(format!("envelope sample {bad} is not a finite nonnegative value")));
        }
        Ok(EnvelopeBlock { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n_s(&self) -> usize {
        self.samples.len()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Reusable envelope sampler for one parameter set.
#[derive(Debug, Clone)]
pub struct HkSampler {
    params: HkParams,
    gamma: Gamma<f64>,
}

impl HkSampler {
    pub fn new(params: HkParams) -> Result<Self> {
        params.validate()?;
        let gamma = Gamma::new(params.alpha, 1.0)
            .map_err(|e| Error::InvalidParameter(format!("gamma shape {}: {e}", params.alpha)))?;
        Ok(HkSampler { params, gamma })
    }

    pub fn params(&self) -> &HkParams {
        &self.params
    }

    /// One draw of `sqrt((eps + X s)^2 + (Y s)^2)` with `s = sigma sqrt(Z / alpha)`.
    #[inline]
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = self.gamma.sample(rng);
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let s = self.params.sigma * (z / self.params.alpha).sqrt();
        let re = self.params.epsilon + x * s;
        let im = y * s;
        (re * re + im * im).sqrt()
    }

    pub fn fill<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for a in out.iter_mut() {
            *a = self.draw(rng);
        }
    }
}

/// Draws `n` i.i.d. HK envelope samples; deterministic in `seed`.
pub fn sample_hk(params: &HkParams, n: usize, seed: u64) -> Result<EnvelopeBlock> {
    let mut rng = rng_from(seed);
    sample_hk_with(params, n, &mut rng)
}

pub fn sample_hk_with(params: &HkParams, n: usize, rng: &mut Rng) -> Result<EnvelopeBlock> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let sampler = HkSampler::new(*params)?;
    let mut samples = vec![0.0; n];
    sampler.fill(rng, &mut samples);
    // n = 1 is a valid draw request; feature extraction still needs n >= 2.
    Ok(EnvelopeBlock { samples })
}

/// `count` blocks of `n` samples whose targets are drawn uniformly from the
/// training box; block `i` uses its own derived generator.
pub fn sample_box_blocks(count: usize, n: usize, seed: u64) -> Result<Vec<(HkParams, EnvelopeBlock)>> {
    (0..count)
        .map(|i| {
            let mut rng = derived_rng(seed, stream::SIMULATE, &[i as u64]);
            let la = rng.random_range(LOG10_ALPHA_RANGE.0..=LOG10_ALPHA_RANGE.1);
            let k = rng.random_range(K_RANGE.0..=K_RANGE.1);
            let p = params_from_targets(la, k)?;
            Ok((p, sample_hk_with(&p, n, &mut rng)?))
        })
        .collect()
}
