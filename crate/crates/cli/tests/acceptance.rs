//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per check; exits non-zero if any check fails.
//!
//! Full run: trains eight networks (10000 records each) and scores them on
//! the 31 x 11 x 100 grid, so expect roughly 15-25 minutes on one core.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hkq_core::estimators::{make_training_set, EstimatorKind, Model, PredictOptions};
use hkq_core::eval::{
    analyse_phantom, evaluate_on, simulate_grid, simulate_two_layer_phantom, spearman, EvalGrid, GridResult,
    ModelEstimator, PatchGeometry, PHANTOM_FRAMES,
};
use hkq_core::features::{compute_features, Skips};
use hkq_core::hk::{params_from_targets, sample_hk, EnvelopeBlock, HkParams};
use hkq_core::nn::bayes::{softplus, BayesDenseLayer, BayesMlp};
use hkq_core::nn::{bayes_grad_tensors, dense_grad_tensors, mae_loss, Mlp, Parameters, TrainConfig};
use hkq_core::pdf::{hk_cdf, hk_pdf, integrate_pdf};
use hkq_core::rng::rng_from;
use ndarray::Array2;
use rand::Rng as _;

const SIZES: [usize; 4] = [1024, 4096, 16384, 65536];
const RECORDS: usize = 10_000;
const DATA_SEED: u64 = 11;
const TRAIN_SEED: u64 = 12;
const GRID_SEED: u64 = 13;
const PREDICT_SEED: u64 = 14;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Default)]
struct Report {
    results: Vec<(String, bool)>,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        println!("{} [{id}] {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
        self.results.push((id.to_string(), pass));
    }

    fn finish(self) -> ! {
        let failed: Vec<&str> = self.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
        println!(
            "acceptance: {} checks, {} passed, {} failed{}",
            self.results.len(),
            self.results.len() - failed.len(),
            failed.len(),
            if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
        );
        std::process::exit(if failed.is_empty() { 0 } else { 1 })
    }
}

fn box_params() -> Vec<HkParams> {
    let mut v = Vec::new();
    for &la in &[-0.3, 0.55, 1.4] {
        for &k in &[0.0, 0.5, 1.0] {
            v.push(params_from_targets(la, k).unwrap());
        }
    }
    v
}

fn sampler_and_density(r: &mut Report) {
    let mut worst_z: f64 = 0.0;
    for (i, p) in box_params().iter().enumerate() {
        let n = 1_000_000;
        let b = sample_hk(p, n, 300 + i as u64).unwrap();
        let ints: Vec<f64> = b.samples().iter().map(|a| a * a).collect();
        let mean = ints.iter().sum::<f64>() / n as f64;
        let var = ints.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        worst_z = worst_z.max((mean - p.mean_intensity()).abs() / (var / n as f64).sqrt());
    }
    r.check("3a", worst_z < 5.0, format!("E[A^2] = eps^2 + 2 sigma^2 over 9 settings, 1e6 draws: worst |z| = {worst_z:.2} (< 5)"));

    let mut worst: f64 = 0.0;
    for p in box_params() {
        let hi = 14.0 * p.mean_intensity().sqrt() + 6.0;
        worst = worst.max((integrate_pdf(0.0, hi, &p, 60).unwrap() - 1.0).abs());
    }
    r.check("3b", worst <= 1e-3, format!("pdf integrates to 1 over 9 settings: worst |int - 1| = {worst:.2e} (<= 1e-3)"));

    let p = HkParams::new(0.0, std::f64::consts::FRAC_1_SQRT_2, 500.0).unwrap();
    let s2 = p.sigma * p.sigma;
    let sup = (0..=80)
        .map(|i| {
            let a = i as f64 * 0.05;
            (hk_pdf(a, &p).unwrap() - a / s2 * (-a * a / (2.0 * s2)).exp()).abs()
        })
        .fold(0.0, f64::max);
    r.check("3c", sup <= 1e-3, format!("alpha = 500 pdf vs Rayleigh: sup-norm {sup:.2e} (<= 1e-3)"));

    let n = 100_000;
    let bound = 1.63 / (n as f64).sqrt() * 1.5;
    let mut worst: f64 = 0.0;
    for (seed, &(la, k)) in [(0.3, 0.5), (-0.2, 0.0), (1.2, 0.8)].iter().enumerate() {
        let p = params_from_targets(la, k).unwrap();
        let hi = 14.0 * p.mean_intensity().sqrt() + 6.0;
        let nodes = 3000;
        let step = hi / nodes as f64;
        let cdf: Vec<f64> = (0..=nodes).map(|i| hk_cdf(i as f64 * step, &p).unwrap()).collect();
        let eval = |a: f64| {
            let x = a / step;
            let i = x.floor() as usize;
            if i + 1 >= cdf.len() {
                1.0
            } else {
                cdf[i] + (x - i as f64) * (cdf[i + 1] - cdf[i])
            }
        };
        let mut s = sample_hk(&p, n, 500 + seed as u64).unwrap().into_samples();
        s.sort_by(f64::total_cmp);
        for (i, &a) in s.iter().enumerate() {
            let f = eval(a);
            worst = worst.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
        }
    }
    r.check("3d", worst < bound, format!("KS statistic, 1e5 samples x 3 settings: worst {worst:.5} (< {bound:.5})"));
}

fn rayleigh_block(n: usize, seed: u64) -> EnvelopeBlock {
    let mut rng = rng_from(seed);
    let s = (0..n).map(|_| (-(1.0 - rng.random::<f64>()).ln() * 2.5).sqrt()).collect();
    EnvelopeBlock::new(s).unwrap()
}

fn feature_analytics(r: &mut Report) {
    let f = compute_features(&rayleigh_block(1_000_000, 7)).unwrap();
    r.check(
        "4a",
        (f.x_stat - 1.0).abs() <= 0.01 && (f.u_stat + EULER_GAMMA).abs() <= 0.01,
        format!("Rayleigh limit, 1e6 samples: X = {:.4} (1 +- 0.01), U = {:.4} (-0.5772 +- 0.01)", f.x_stat, f.u_stat),
    );

    let mut worst: f64 = 0.0;
    let mut rng = rng_from(8);
    for case in 0..50u64 {
        let p = params_from_targets(rng.random_range(-0.3..1.4), rng.random_range(0.0..1.0)).unwrap();
        let c = 10f64.powf(rng.random_range(-2.0..2.0));
        let b = sample_hk(&p, 4096, case).unwrap();
        let scaled = EnvelopeBlock::new(b.samples().iter().map(|a| a * c).collect()).unwrap();
        let f0 = compute_features(&b).unwrap().to_array();
        let f1 = compute_features(&scaled).unwrap().to_array();
        for (x, y) in f0.iter().zip(f1) {
            worst = worst.max((x - y).abs() / x.abs().max(y.abs()));
        }
    }
    r.check("4b", worst <= 1e-10, format!("all 8 features scale-invariant over 50 cases: worst relative change {worst:.1e} (<= 1e-10)"));

    let closed = |v: f64| {
        let m = |p: f64| libm::tgamma(1.0 + p * v / 2.0);
        m(1.0) / (m(2.0) - m(1.0).powi(2)).sqrt()
    };
    let (r72, r88) = (closed(0.72), closed(0.88));
    let ok = (f.r_072 - r72).abs() <= 0.01 && (f.r_088 - r88).abs() <= 0.01;
    r.check(
        "4c",
        ok,
        format!("Rayleigh R_v vs gamma-function closed form: R_0.72 {:.4} vs {r72:.4}, R_0.88 {:.4} vs {r88:.4} (+- 0.01)", f.r_072, f.r_088),
    );
}

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn uniform(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.5..1.5))
}

fn bump(tensors: Vec<&mut [f64]>, mut idx: usize, delta: f64) {
    for t in tensors {
        if idx < t.len() {
            t[idx] += delta;
            return;
        }
        idx -= t.len();
    }
    panic!("parameter index out of range");
}

/// Inputs within 1e-6 of a leaky-ReLU kink are masked.
fn near_kink(net: &Mlp, x: &Array2<f64>) -> bool {
    net.forward_cached(x.view()).preacts.iter().take(net.layers.len() - 1).any(|z| z.iter().any(|v| v.abs() < 1e-6))
}

fn pattern(net: &Mlp, x: &Array2<f64>) -> Vec<bool> {
    net.forward_cached(x.view()).preacts.iter().flat_map(|z| z.iter().map(|v| *v > 0.0).collect::<Vec<_>>()).collect()
}

/// Largest relative error of `loss(params)` gradients against central differences,
/// skipping perturbations that change the activation pattern.
fn fd_worst<N: Parameters>(
    net: &mut N,
    analytic: &[f64],
    mut eval: impl FnMut(&N) -> (f64, Vec<bool>),
) -> (f64, usize, usize) {
    let base = eval(net).1;
    let total = net.parameter_count();
    let (mut worst, mut checked) = (0.0f64, 0);
    for idx in 0..total {
        bump(net.tensors_mut(), idx, H);
        let (up, p1) = eval(net);
        bump(net.tensors_mut(), idx, -2.0 * H);
        let (down, p2) = eval(net);
        bump(net.tensors_mut(), idx, H);
        if p1 != base || p2 != base {
            continue;
        }
        worst = worst.max(rel_err((up - down) / (2.0 * H), analytic[idx]));
        checked += 1;
    }
    (worst, checked, total)
}

fn gradient_suite(r: &mut Report) {
    // Deterministic dense stack through the MAE loss.
    let mut net = Mlp::new(&[8, 10, 4, 2], &mut rng_from(21));
    let x = uniform(16, 8, 22);
    let t = uniform(16, 2, 23);
    assert!(!near_kink(&net, &x));
    let cache = net.forward_cached(x.view());
    let (_, g_out) = mae_loss(&cache.output, t.view());
    let analytic = dense_grad_tensors(&net.backward(&cache, g_out)).concat();
    let (worst, checked, total) = fd_worst(&mut net, &analytic, |n| {
        let y = n.forward_batch(x.view());
        let residual_signs: Vec<bool> = (&y - &t).iter().map(|d| *d > 0.0).collect();
        let mut pat = pattern(n, &x);
        pat.extend(residual_signs);
        (mae_loss(&y, t.view()).0, pat)
    });
    r.check(
        "5a",
        worst < 1e-4 && checked * 10 > total * 9,
        format!("dense layers + MAE loss vs central differences: worst rel err {worst:.1e} over {checked}/{total} params (< 1e-4)"),
    );

    // Bayesian layers: gradients w.r.t. (mu, rho) through the reparameterization.
    let mut bnet = BayesMlp::new(&[5, 7, 3], &mut rng_from(31));
    for l in &mut bnet.layers {
        l.weight_rho.fill(-1.0);
        l.bias_rho.fill(-0.5);
    }
    let x = uniform(6, 5, 32);
    let c = uniform(6, 3, 33);
    let noise = bnet.draw_noise(&mut rng_from(34));
    let sampled = bnet.realize(&noise);
    let cache = sampled.forward_cached(x.view());
    let dense = sampled.backward(&cache, c.clone());
    let mut acc = bnet.zero_grads();
    for ((l, g), (n, a)) in bnet.layers.iter().zip(&dense).zip(noise.iter().zip(&mut acc)) {
        l.accumulate_grad(g, n, 1.0, a);
    }
    let analytic = bayes_grad_tensors(&acc).concat();
    let (worst, checked, total) = fd_worst(&mut bnet, &analytic, |n| {
        let m = n.realize(&noise);
        ((&m.forward_batch(x.view()) * &c).sum(), pattern(&m, &x))
    });
    r.check(
        "5b",
        worst < 1e-4 && checked * 10 > total * 9,
        format!("Bayesian layers (mu, rho) vs central differences: worst rel err {worst:.1e} over {checked}/{total} params (< 1e-4)"),
    );

    // KL term: gradient, non-negativity, zero exactly at the prior.
    let mut rng = rng_from(41);
    let prior = 0.7;
    let mut layer = BayesDenseLayer::init(4, 3, &mut rng);
    layer.weight_rho.mapv_inplace(|_| rng.random_range(-4.0..1.0));
    layer.bias_rho.mapv_inplace(|_| rng.random_range(-4.0..1.0));
    let mut knet = BayesMlp { layers: vec![layer], slope: 0.01, prior_std: prior };
    let mut acc = knet.zero_grads();
    knet.layers[0].accumulate_kl_grad(prior, 1.0, &mut acc[0]);
    let analytic = bayes_grad_tensors(&acc).concat();
    let (worst, _, _) = fd_worst(&mut knet, &analytic, |n| (n.kl(), Vec::new()));
    r.check("5c", worst < 1e-4, format!("KL gradient vs central differences: worst rel err {worst:.1e} (< 1e-4)"));

    let mut min_kl = f64::INFINITY;
    for _ in 0..200 {
        let mut l = BayesDenseLayer::init(3, 2, &mut rng);
        l.weight_mu.mapv_inplace(|_| rng.random_range(-2.0..2.0));
        l.weight_rho.mapv_inplace(|_| rng.random_range(-6.0..3.0));
        min_kl = min_kl.min(l.kl(prior));
    }
    let rho_prior = prior.exp_m1().ln();
    let mut at_prior = BayesDenseLayer::init(3, 2, &mut rng);
    at_prior.weight_mu.fill(0.0);
    at_prior.bias_mu.fill(0.0);
    at_prior.weight_rho.fill(rho_prior);
    at_prior.bias_rho.fill(rho_prior);
    let kl0 = at_prior.kl(prior);
    let mut moved = at_prior.clone();
    moved.bias_mu[0] = 1e-3;
    let mut widened = at_prior.clone();
    widened.weight_rho[[0, 0]] += 1e-3;
    let pass = min_kl > 0.0 && kl0.abs() < 1e-12 && moved.kl(prior) > 0.0 && widened.kl(prior) > 0.0;
    r.check(
        "5d",
        pass,
        format!(
            "KL >= 0: min over 200 random posteriors {min_kl:.3e}; KL at prior {kl0:.1e}; perturbed {:.2e}, {:.2e} (> 0); softplus(rho) = {:.6}",
            moved.kl(prior),
            widened.kl(prior),
            softplus(rho_prior)
        ),
    );
}

struct Trained {
    n_s: usize,
    bnn: Model,
    ann: Model,
}

fn train_all(r: &mut Report) -> Vec<Trained> {
    let cfg = TrainConfig { seed: TRAIN_SEED, ..TrainConfig::default() };
    SIZES
        .iter()
        .map(|&n_s| {
            let t = Instant::now();
            let set = make_training_set(n_s, RECORDS, DATA_SEED).unwrap();
            let (bnn, bnn_trace) = Model::fit(EstimatorKind::Bnn, &set, &cfg).unwrap();
            let (ann, ann_trace) = Model::fit(EstimatorKind::Ann, &set, &cfg).unwrap();
            r.check(
                &format!("train-{n_s}"),
                bnn_trace.final_loss() < bnn_trace.initial && ann_trace.final_loss() < ann_trace.initial,
                format!(
                    "n_s = {n_s}, {RECORDS} records, default config: BNN loss {:.4} -> {:.4}, ANN loss {:.4} -> {:.4} ({:.0} s)",
                    bnn_trace.initial,
                    bnn_trace.final_loss(),
                    ann_trace.initial,
                    ann_trace.final_loss(),
                    t.elapsed().as_secs_f64()
                ),
            );
            Trained { n_s, bnn, ann }
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn grid_results(trained: &[Trained]) -> Vec<(GridResult, GridResult)> {
    trained
        .iter()
        .map(|m| {
            let t = Instant::now();
            let samples = simulate_grid(&EvalGrid::paper(m.n_s), GRID_SEED).unwrap();
            let bopts = PredictOptions { seed: PREDICT_SEED, ..PredictOptions::default() };
            let b = evaluate_on(&ModelEstimator { model: &m.bnn, options: bopts }, &samples, false).unwrap();
            let a = evaluate_on(&ModelEstimator { model: &m.ann, options: PredictOptions::default() }, &samples, false).unwrap();
            println!(
                "grid n_s = {:>5}: BNN MAE log10a {:.4} k {:.4} | ANN MAE log10a {:.4} k {:.4} ({:.0} s)",
                m.n_s,
                b.aggregate.mae_alpha,
                b.aggregate.mae_k,
                a.aggregate.mae_alpha,
                a.aggregate.mae_k,
                t.elapsed().as_secs_f64()
            );
            (b, a)
        })
        .collect()
}

fn table_criteria(r: &mut Report, results: &[(GridResult, GridResult)]) {
    let mae = |i: usize| (results[i].0.aggregate.mae_alpha, results[i].1.aggregate.mae_alpha);
    let (b65, _) = mae(3);
    let (b16, _) = mae(2);
    r.check("1a-65536", b65 <= 0.06, format!("BNN MAE log10a at n_s = 65536: {b65:.4} (<= 0.06)"));
    r.check("1a-16384", b16 <= 0.08, format!("BNN MAE log10a at n_s = 16384: {b16:.4} (<= 0.08)"));
    for i in [3, 1, 0] {
        let (b, a) = mae(i);
        r.check(&format!("1b-{}", SIZES[i]), b <= a, format!("BNN <= ANN MAE log10a at n_s = {}: {b:.4} vs {a:.4}", SIZES[i]));
    }
    let bnn: Vec<f64> = (0..4).map(|i| mae(i).0).collect();
    let ann: Vec<f64> = (0..4).map(|i| mae(i).1).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    r.check("1c-bnn", decreasing(&bnn), format!("BNN MAE log10a strictly decreasing over n_s: {bnn:.4?}"));
    r.check("1c-ann", decreasing(&ann), format!("ANN MAE log10a strictly decreasing over n_s: {ann:.4?}"));

    let bk65 = results[3].0.aggregate.mae_k;
    r.check("2a", bk65 <= 0.09, format!("BNN MAE k at n_s = 65536: {bk65:.4} (<= 0.09)"));
    for (i, (b, a)) in results.iter().enumerate() {
        let (bk, ak) = (b.aggregate.mae_k, a.aggregate.mae_k);
        r.check(&format!("2b-{}", SIZES[i]), bk <= ak + 0.02, format!("BNN MAE k <= ANN + 0.02 at n_s = {}: {bk:.4} vs {ak:.4}", SIZES[i]));
    }
}

fn uncertainty_criteria(r: &mut Report, bnn16: &GridResult) {
    let cells = &bnn16.cells;
    let col = |f: fn(&hkq_core::eval::MetricCell) -> f64| cells.iter().map(f).collect::<Vec<_>>();
    let rho_a = spearman(&col(|c| c.mean_std_alpha), &col(|c| c.mae_alpha)).unwrap();
    let rho_k = spearman(&col(|c| c.mean_std_k), &col(|c| c.mae_k)).unwrap();
    r.check("6a", rho_a > 0.2, format!("Spearman(BNN std, |error|) over 341 cells, log10a, n_s = 16384: {rho_a:.3} (> 0.2)"));
    r.check("6b", rho_k > 0.2, format!("Spearman(BNN std, |error|) over 341 cells, k, n_s = 16384: {rho_k:.3} (> 0.2)"));

    let grid_median = median(col(|c| c.rrmse_k));
    let k0: Vec<f64> = cells.iter().filter(|c| c.k == 0.0).map(|c| c.rrmse_k).collect();
    let k0_min = k0.iter().copied().fold(f64::INFINITY, f64::min);
    r.check(
        "6c",
        k0_min >= 5.0 * grid_median,
        format!(
            "k = 0 column RRMSE_k: min {k0_min:.3}, median {:.3} vs grid median {grid_median:.4} (every k = 0 cell >= 5x)",
            median(k0.clone())
        ),
    );
}

fn phantom_criteria(r: &mut Report, bnn16: &Model) {
    let alpha_top = 10f64.powf(0.749);
    let alpha_bottom = 1.81 * alpha_top;
    let trials = 20u64;
    let (mut in_range, mut higher) = (0, 0);
    let mut ratios = Vec::new();
    for trial in 0..trials {
        let ph = simulate_two_layer_phantom(
            alpha_top,
            alpha_bottom,
            0.0,
            PatchGeometry::default(),
            PHANTOM_FRAMES,
            Skips::default(),
            100 + trial,
        )
        .unwrap();
        let est = ModelEstimator { model: bnn16, options: PredictOptions { seed: 200 + trial, ..PredictOptions::default() } };
        let rep = analyse_phantom(&ph, &est, Skips::default()).unwrap();
        if (1.4..=2.2).contains(&rep.ratio) {
            in_range += 1;
        }
        if rep.bottom.std_log10_alpha >= rep.top.std_log10_alpha {
            higher += 1;
        }
        if trial == 0 {
            println!(
                "phantom trial 0: ratio {:.3} +- {:.3} (true {:.2}); std log10a top {:.4}, bottom {:.4}",
                rep.ratio, rep.ratio_std, rep.true_ratio, rep.top.std_log10_alpha, rep.bottom.std_log10_alpha
            );
        }
        ratios.push((rep.ratio, rep.ratio_std));
    }
    let lo = ratios.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
    let mean_sd = ratios.iter().map(|r| r.1).sum::<f64>() / trials as f64;
    r.check(
        "7a",
        in_range == trials,
        format!("two-layer phantom alpha ratio in [1.4, 2.2]: {in_range}/{trials} trials, range [{lo:.3}, {hi:.3}], mean delta-method std {mean_sd:.3}"),
    );
    r.check(
        "7b",
        higher * 10 >= trials * 7,
        format!("higher-alpha patch has >= uncertainty in {higher}/{trials} trials (>= 70%)"),
    );
}

fn hkq(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_hkq"))
        .args(args)
        .current_dir(dir)
        .env_remove("HKQ_SEED")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(r: &mut Report, trained: &[Trained]) {
    let commands: [&[&str]; 7] = [
        &["simulate", "--log10-alpha", "0.5", "--k", "0.3", "--n", "16384", "--seed", "7", "-o", "block.f32"],
        &["simulate", "--log10-alpha", "0.2", "--k", "0.1", "--bottom-log10-alpha", "0.9", "--rows", "960", "--cols", "256", "--frames", "2", "--seed", "3", "-o", "two.f32"],
        &["train", "--estimator", "bnn", "--n-s", "16384", "--count", "500", "--epochs", "5", "--seed", "5", "-o", "m.hkq"],
        &["lookup", "--samples-per-cell", "2000", "--alpha-points", "12", "--k-points", "5", "--seed", "2", "-o", "t.bin"],
        &["evaluate", "--model", "m.hkq", "--moment-grid", "t.bin", "--alpha-points", "4", "--k-points", "3", "--reps", "3", "--n-draws", "6", "--seed", "9", "-o", "ev"],
        &["predict", "--model", "m.hkq", "-i", "block.f32", "--n-draws", "10", "--seed", "4", "-o", "p.json"],
        &["map", "--model", "m.hkq", "-i", "two.f32", "--window-rows", "480", "--window-cols", "256", "--step-rows", "120", "--n-draws", "5", "--force", "-o", "mp"],
    ];
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let ok = commands.iter().all(|c| hkq(dir.path(), c));
        (ok, snapshot(dir.path()))
    };
    let (ok1, a) = run();
    let (ok2, b) = run();
    r.check(
        "8a",
        ok1 && ok2 && a == b,
        format!("simulate/train/lookup/evaluate/predict/map run twice in fresh directories: {} files byte-identical", a.len()),
    );

    let mut all = true;
    for m in trained {
        for model in [&m.bnn, &m.ann] {
            let bytes = model.to_bytes().unwrap();
            let back = Model::from_bytes(&bytes, Path::new("<memory>")).unwrap();
            all &= back == *model && back.to_bytes().unwrap() == bytes;
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bnn.hkq");
    trained[0].bnn.save(&path).unwrap();
    all &= Model::load(&path).unwrap().to_bytes().unwrap() == fs::read(&path).unwrap();
    r.check("8b", all, "all 8 trained checkpoints round-trip byte-exactly (memory and file)");

    let cfg = TrainConfig { seed: 3, epochs: 3, ..TrainConfig::default() };
    let set = make_training_set(1024, 400, 4).unwrap();
    let one = Model::fit(EstimatorKind::Bnn, &set, &cfg).unwrap().0.to_bytes().unwrap();
    let two = Model::fit(EstimatorKind::Bnn, &make_training_set(1024, 400, 4).unwrap(), &cfg).unwrap().0.to_bytes().unwrap();
    r.check("8c", one == two, "library retraining with identical seeds gives identical checkpoint bytes");
}

fn main() {
    let start = Instant::now();
    let mut r = Report::default();
    println!("== criterion 3: sampler and density oracles");
    sampler_and_density(&mut r);
    println!("== criterion 4: feature analytics");
    feature_analytics(&mut r);
    println!("== criterion 5: gradient suite");
    gradient_suite(&mut r);
    println!("== training BNN and ANN at n_s = {SIZES:?}");
    let trained = train_all(&mut r);
    println!("== criteria 1, 2: 31 x 11 x 100 grid");
    let results = grid_results(&trained);
    table_criteria(&mut r, &results);
    println!("== criterion 6: uncertainty behaviour");
    uncertainty_criteria(&mut r, &results[2].0);
    println!("== criterion 7: two-layer phantom");
    phantom_criteria(&mut r, &trained[2].bnn);
    println!("== criterion 8: determinism");
    determinism(&mut r, &trained);
    println!("total {:.0} s", start.elapsed().as_secs_f64());
    r.finish()
}
