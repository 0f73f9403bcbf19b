//! HK density and distribution function by oscillatory quadrature of the
//! Bessel-product integral
//!
//! ```text
//! p(a) = a ∫₀^∞ u J0(u ε) J0(u a) φ(u) du,      F(a) = a ∫₀^∞ J0(u ε) J1(u a) φ(u) du,
//! φ(u) = (1 + u² σ² / (2 α))^(-α)
//! ```
//!
//! where `φ` is the characteristic function of the diffuse component produced
//! by the sampler (`σ` already carries the `sqrt(Z / α)` normalization).
//!
//! The integral is split in two. On `[0, U0]` the integrand is summed over
//! panels no wider than half a period of the fastest oscillation. Beyond `U0`
//! (where both Bessel arguments are in their asymptotic regime) the product is
//! rewritten through Hankel functions `H = J + iY`:
//!
//! ```text
//! Jm(x) Jn(y) = ½ Re[Hm(x) Hn(y)] + ½ Re[Hm(x) conj(Hn(y))]
//! ```
//!
//! Each piece oscillates at a single frequency (`a + ε` and `|a - ε|`), so its
//! partial sums over half periods form an alternating-like sequence that the
//! Wynn epsilon algorithm extrapolates.

use std::f64::consts::PI;
use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::hk::HkParams;

/// Absolute tolerance on the u-integral.
pub const QUAD_TOL: f64 = 1e-10;
/// Bessel argument beyond which the Hankel split is used.
const ASYMPTOTIC_ARG: f64 = 12.0;
/// Maximum number of tail panels per piece before giving up.
const MAX_TAIL_PANELS: usize = 400;
/// Maximum number of front panels.
const MAX_FRONT_PANELS: usize = 2_000_000;
const GL_ORDER: usize = 20;

static GAUSS_LEGENDRE: LazyLock<(Vec<f64>, Vec<f64>)> = LazyLock::new(|| gauss_legendre(GL_ORDER));

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (z * p - p0) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[inline]
fn gl_panel<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    let (x, w) = &*GAUSS_LEGENDRE;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * f(mid + half * xi);
    }
    s * half
}

/// Wynn epsilon extrapolation of a sequence of partial sums.
///
/// Returns the estimate from the deepest even column together with the
/// difference to the previous even-column estimate as an error proxy.
pub fn wynn_epsilon(sums: &[f64]) -> (f64, f64) {
    let n = sums.len();
    if n < 3 {
        let last = *sums.last().unwrap_or(&0.0);
        let prev = if n == 2 { sums[0] } else { last };
        return (last, (last - prev).abs());
    }
    let mut prev_col = vec![0.0; n + 1];
    let mut col: Vec<f64> = sums.to_vec();
    let mut best = sums[n - 1];
    let mut best_err = (sums[n - 1] - sums[n - 2]).abs();
    let mut k = 0;
    while col.len() > 1 {
        let mut next = Vec::with_capacity(col.len() - 1);
        for i in 0..col.len() - 1 {
            let d = col[i + 1] - col[i];
            if d == 0.0 || !d.is_finite() {
                // Converged (or broken) column: keep the best estimate so far.
                return (best, best_err);
            }
            next.push(prev_col[i + 1] + 1.0 / d);
        }
        k += 1;
        if k % 2 == 0 && !next.is_empty() {
            let est = next[next.len() - 1];
            if !est.is_finite() {
                break;
            }
            let err = if next.len() >= 2 { (est - next[next.len() - 2]).abs() } else { (est - best).abs() };
            if err < best_err {
                best = est;
                best_err = err;
            }
        }
        prev_col = col;
        col = next;
    }
    (best, best_err)
}

/// Bessel order of the `a`-dependent factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    /// `u J0(u ε) J0(u a)`: density.
    Density,
    /// `J0(u ε) J1(u a)`: distribution function.
    Distribution,
}

struct Integrand {
    kernel: Kernel,
    a: f64,
    eps: f64,
    alpha: f64,
    c: f64,
}

impl Integrand {
    #[inline]
    fn weight(&self, u: f64) -> f64 {
        let w = (-self.alpha * (self.c * u * u).ln_1p()).exp();
        match self.kernel {
            Kernel::Density => u * w,
            Kernel::Distribution => w,
        }
    }

    #[inline]
    fn bessel_a(&self, x: f64) -> (f64, f64) {
        match self.kernel {
            Kernel::Density => (libm::j0(x), libm::y0(x)),
            Kernel::Distribution => (libm::j1(x), libm::y1(x)),
        }
    }

    #[inline]
    fn full(&self, u: f64) -> f64 {
        let ja = match self.kernel {
            Kernel::Density => libm::j0(u * self.a),
            Kernel::Distribution => libm::j1(u * self.a),
        };
        self.weight(u) * libm::j0(u * self.eps) * ja
    }

    /// `½ w(u) Re[H(uε) H(ua)]` (`sign = -1`) or `½ w(u) Re[H(uε) conj H(ua)]` (`sign = +1`).
    #[inline]
    fn hankel_piece(&self, u: f64, sign: f64) -> f64 {
        let (ja, ya) = self.bessel_a(u * self.a);
        let je = libm::j0(u * self.eps);
        let ye = libm::y0(u * self.eps);
        0.5 * self.weight(u) * (je * ja + sign * ye * ya)
    }

    /// Length scale on which the weight varies around `u`.
    fn weight_scale(&self, u: f64) -> f64 {
        (0.5 / self.c.sqrt()).max(0.25 * u)
    }

    /// Upper bound on `|integrand|` beyond `u`, ignoring oscillation.
    fn envelope(&self, u: f64) -> f64 {
        let bessel = match self.kernel {
            Kernel::Density => 1.0,
            Kernel::Distribution => 0.6,
        };
        bessel * self.weight(u)
    }
}

/// Integrates `f` over `[lo, hi]` with sub-panels no wider than `max_width(x)`.
fn composite<F: Fn(f64) -> f64, W: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, max_width: W) -> f64 {
    let mut s = 0.0;
    let mut x = lo;
    let mut guard = 0usize;
    while x < hi && guard < MAX_FRONT_PANELS {
        let next = (x + max_width(x)).min(hi);
        s += gl_panel(f, x, next);
        x = next;
        guard += 1;
    }
    s
}

/// Sums half-period panels of a single-frequency tail piece starting at `u0`
/// and extrapolates the partial sums.
fn tail_piece<F: Fn(f64) -> f64>(f: &F, u0: f64, freq: f64, integrand: &Integrand) -> Result<f64> {
    let period = PI / freq;
    let mut sums: Vec<f64> = Vec::new();
    let mut total = 0.0;
    let mut x = u0;
    let mut last_est = f64::NAN;
    let mut stable = 0;
    for _ in 0..MAX_TAIL_PANELS {
        let next = x + period;
        total += composite(f, x, next, |t| integrand.weight_scale(t));
        x = next;
        sums.push(total);
        // Weight small enough that the remainder is negligible outright.
        if integrand.envelope(x) * period < QUAD_TOL * 1e-2 {
            return Ok(total);
        }
        if sums.len() >= 6 {
            let window = &sums[sums.len().saturating_sub(25)..];
            let (est, err) = wynn_epsilon(window);
            if err < QUAD_TOL && (est - last_est).abs() < QUAD_TOL {
                stable += 1;
                if stable >= 2 {
                    return Ok(est);
                }
            } else {
                stable = 0;
            }
            last_est = est;
        }
    }
    Err(Error::Quadrature(format!(
        "tail did not converge after {MAX_TAIL_PANELS} panels (frequency {freq:.3e}, start {u0:.3e}, last estimate {last_est:.6e})"
    )))
}

fn bessel_integral(kernel: Kernel, a: f64, params: &HkParams) -> Result<f64> {
    params.validate()?;
    let integrand = Integrand {
        kernel,
        a,
        eps: params.epsilon,
        alpha: params.alpha,
        c: params.sigma * params.sigma / (2.0 * params.alpha),
    };
    let fast = a + params.epsilon;
    let half_period = PI / fast;

    // Beyond this the weight alone makes the remainder negligible.
    let mut u_cut = {
        let mut u = 1.0 / integrand.c.sqrt();
        let mut n = 0;
        while integrand.envelope(u) * u > QUAD_TOL * 1e-2 && n < 200 {
            u *= 1.5;
            n += 1;
        }
        if n >= 200 {
            f64::INFINITY
        } else {
            u
        }
    };
    let slow_arg = if params.epsilon > 0.0 { a.min(params.epsilon) } else { a };
    let u_split = ASYMPTOTIC_ARG / slow_arg;
    if u_cut.is_finite() && u_cut <= u_split {
        u_cut = u_cut.max(half_period);
        let f = |u: f64| integrand.full(u);
        return Ok(composite(&f, 0.0, u_cut, |x| half_period.min(integrand.weight_scale(x))));
    }

    let full = |u: f64| integrand.full(u);
    let front = composite(&full, 0.0, u_split, |x| half_period.min(integrand.weight_scale(x)));

    let tail = if params.epsilon == 0.0 {
        tail_piece(&full, u_split, a, &integrand)?
    } else {
        let fast_piece = |u: f64| integrand.hankel_piece(u, -1.0);
        let slow_piece = |u: f64| integrand.hankel_piece(u, 1.0);
        let mut slow = (a - params.epsilon).abs();
        if slow == 0.0 {
            slow = 1e-9 * fast;
        }
        tail_piece(&fast_piece, u_split, fast, &integrand)? + tail_piece(&slow_piece, u_split, slow, &integrand)?
    };
    Ok(front + tail)
}

/// HK probability density at amplitude `a`.
///
/// For `alpha <= 1/2` and `epsilon > 0` the density diverges at `a = epsilon`;
/// values there are large but finite.
pub fn hk_pdf(a: f64, params: &HkParams) -> Result<f64> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::InvalidParameter(format!("amplitude {a} must be finite and nonnegative")));
    }
    if a == 0.0 {
        params.validate()?;
        return Ok(0.0);
    }
    Ok((a * bessel_integral(Kernel::Density, a, params)?).max(0.0))
}

/// HK cumulative distribution function `P(A <= a)`.
pub fn hk_cdf(a: f64, params: &HkParams) -> Result<f64> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::InvalidParameter(format!("amplitude {a} must be finite and nonnegative")));
    }
    if a == 0.0 {
        params.validate()?;
        return Ok(0.0);
    }
    Ok((a * bessel_integral(Kernel::Distribution, a, params)?).clamp(0.0, 1.0))
}

/// Integral of `pdf` over `[lo, hi]` by Gauss–Legendre panels graded towards
/// `epsilon`, where the density can be sharply peaked.
pub fn integrate_pdf(lo: f64, hi: f64, params: &HkParams, panels: usize) -> Result<f64> {
    const GRADING_LEVELS: i32 = 24;
    let e = params.epsilon;
    let mut cuts = Vec::new();
    if e > lo && e < hi {
        for i in 0..GRADING_LEVELS {
            cuts.push(e - (e - lo) * 0.5f64.powi(i));
        }
        cuts.push(e);
        for i in (0..GRADING_LEVELS).rev() {
            cuts.push(e + (hi - e) * 0.5f64.powi(i));
        }
    } else {
        cuts.extend([lo, hi]);
    }
    let max_width = (hi - lo) / panels.max(1) as f64;
    let (x, w) = gauss_legendre(8);
    let mut total = 0.0;
    for seg in cuts.windows(2) {
        let (s0, s1) = (seg[0], seg[1]);
        let sub = ((s1 - s0) / max_width).ceil().max(1.0) as usize;
        let h = (s1 - s0) / sub as f64;
        for j in 0..sub {
            let l = s0 + j as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                total += wi * 0.5 * h * hk_pdf(l + 0.5 * h * (xi + 1.0), params)?;
            }
        }
    }
    Ok(total)
}
