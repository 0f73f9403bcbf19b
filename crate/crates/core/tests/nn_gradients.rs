//! Backpropagation checked against central finite differences, and the
//! reparameterized sampler checked against closed-form moments.

use hkq_core::nn::bayes::{softplus, BayesDenseLayer, BayesMlp};
use hkq_core::nn::{Mlp, Parameters};
use hkq_core::rng::rng_from;
use ndarray::{Array1, Array2};
use rand::Rng as _;

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn inputs(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.5..1.5))
}

/// Linear read-out `sum(c * y)`, so the only kinks are the activations.
fn readout(y: &Array2<f64>, c: &Array2<f64>) -> f64 {
    (y * c).sum()
}

/// Sign pattern of all hidden pre-activations; a perturbation that flips one
/// crosses a kink and invalidates the finite difference.
fn pattern(net: &Mlp, x: &Array2<f64>) -> Vec<bool> {
    let cache = net.forward_cached(x.view());
    cache.preacts.iter().flat_map(|z| z.iter().map(|v| *v > 0.0).collect::<Vec<_>>()).collect()
}

#[test]
fn dense_backward_matches_finite_differences() {
    let mut net = Mlp::new(&[8, 10, 4, 2], &mut rng_from(11));
    let x = inputs(6, 8, 12);
    let c = inputs(6, 2, 13);
    let cache = net.forward_cached(x.view());
    let grads = net.backward(&cache, c.clone());
    let analytic: Vec<f64> = hkq_core::nn::dense_grad_tensors(&grads).concat();
    let base = pattern(&net, &x);
    let (mut checked, mut worst) = (0, 0.0f64);
    let total = net.parameter_count();
    for idx in 0..total {
        let eval = |net: &mut Mlp, delta: f64| {
            bump(net.tensors_mut(), idx, delta);
            let v = readout(&net.forward_batch(x.view()), &c);
            let same = pattern(net, &x) == base;
            bump(net.tensors_mut(), idx, -delta);
            (v, same)
        };
        let (up, s1) = eval(&mut net, H);
        let (down, s2) = eval(&mut net, -H);
        if !(s1 && s2) {
            continue;
        }
        let fd = (up - down) / (2.0 * H);
        worst = worst.max(rel_err(fd, analytic[idx]));
        checked += 1;
    }
    assert!(checked > total * 9 / 10, "only {checked} of {total} parameters away from kinks");
    assert!(worst < 1e-4, "worst relative error {worst}");
}

fn bump(tensors: Vec<&mut [f64]>, mut idx: usize, delta: f64) {
    for t in tensors {
        if idx < t.len() {
            t[idx] += delta;
            return;
        }
        idx -= t.len();
    }
    panic!("index out of range");
}

#[test]
fn bayesian_chain_rule_matches_finite_differences() {
    let mut net = BayesMlp::new(&[5, 7, 3], &mut rng_from(21));
    // Wider posteriors so the rho gradients are not negligible.
    for l in &mut net.layers {
        l.weight_rho.fill(-1.0);
        l.bias_rho.fill(-0.5);
    }
    let x = inputs(4, 5, 22);
    let c = inputs(4, 3, 23);
    let noise = net.draw_noise(&mut rng_from(24));
    let sampled = net.realize(&noise);
    let cache = sampled.forward_cached(x.view());
    let dense = sampled.backward(&cache, c.clone());
    let mut acc = net.zero_grads();
    for ((l, g), (n, a)) in net.layers.iter().zip(&dense).zip(noise.iter().zip(&mut acc)) {
        l.accumulate_grad(g, n, 1.0, a);
    }
    let analytic: Vec<f64> = hkq_core::nn::bayes_grad_tensors(&acc).concat();
    let base = pattern(&sampled, &x);
    let total = net.parameter_count();
    let (mut checked, mut worst) = (0, 0.0f64);
    for idx in 0..total {
        let mut eval = |delta: f64| {
            bump(net.tensors_mut(), idx, delta);
            let m = net.realize(&noise);
            let v = readout(&m.forward_batch(x.view()), &c);
            let same = pattern(&m, &x) == base;
            bump(net.tensors_mut(), idx, -delta);
            (v, same)
        };
        let (up, s1) = eval(H);
        let (down, s2) = eval(-H);
        if !(s1 && s2) {
            continue;
        }
        worst = worst.max(rel_err((up - down) / (2.0 * H), analytic[idx]));
        checked += 1;
    }
    assert!(checked > total * 9 / 10);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn kl_gradient_matches_finite_differences() {
    let mut rng = rng_from(31);
    let mut layer = BayesDenseLayer::init(4, 3, &mut rng);
    layer.weight_rho.mapv_inplace(|_| rng.random_range(-4.0..1.0));
    layer.bias_rho.mapv_inplace(|_| rng.random_range(-4.0..1.0));
    let prior = 0.7;
    let mut net = BayesMlp { layers: vec![layer], slope: 0.01, prior_std: prior };
    let mut acc = net.zero_grads();
    net.layers[0].accumulate_kl_grad(prior, 1.0, &mut acc[0]);
    let analytic: Vec<f64> = hkq_core::nn::bayes_grad_tensors(&acc).concat();
    for idx in 0..net.parameter_count() {
        bump(net.tensors_mut(), idx, H);
        let up = net.kl();
        bump(net.tensors_mut(), idx, -2.0 * H);
        let down = net.kl();
        bump(net.tensors_mut(), idx, H);
        let fd = (up - down) / (2.0 * H);
        assert!(rel_err(fd, analytic[idx]) < 1e-4, "param {idx}: fd {fd} vs {}", analytic[idx]);
    }
}

#[test]
fn reparameterized_weights_have_posterior_moments() {
    let layer = BayesDenseLayer {
        weight_mu: Array2::from_shape_vec((1, 2), vec![0.4, -1.2]).unwrap(),
        weight_rho: Array2::from_shape_vec((1, 2), vec![-1.0, 0.5]).unwrap(),
        bias_mu: Array1::from_vec(vec![0.1]),
        bias_rho: Array1::from_vec(vec![-3.0]),
    };
    let n = 100_000;
    let mut rng = rng_from(41);
    let mut sums = [[0.0; 2]; 3];
    for _ in 0..n {
        let d = layer.realize(&layer.draw_noise(&mut rng));
        for (j, v) in [d.weights[[0, 0]], d.weights[[0, 1]], d.biases[0]].into_iter().enumerate() {
            sums[j][0] += v;
            sums[j][1] += v * v;
        }
    }
    let expect = [(0.4, softplus(-1.0)), (-1.2, softplus(0.5)), (0.1, softplus(-3.0))];
    for (j, &(mu, sd)) in expect.iter().enumerate() {
        let mean = sums[j][0] / n as f64;
        let std = (sums[j][1] / n as f64 - mean * mean).sqrt();
        assert!((mean - mu).abs() < 5.0 * sd / (n as f64).sqrt(), "param {j}: mean {mean} vs {mu}");
        assert!((std / sd - 1.0).abs() < 0.015, "param {j}: std {std} vs {sd}");
    }
}

#[test]
fn single_linear_layer_output_is_gaussian_with_closed_form_moments() {
    let layer = BayesDenseLayer {
        weight_mu: Array2::from_shape_vec((1, 3), vec![0.5, -0.25, 1.0]).unwrap(),
        weight_rho: Array2::from_shape_vec((1, 3), vec![-2.0, -1.0, -0.5]).unwrap(),
        bias_mu: Array1::from_vec(vec![0.3]),
        bias_rho: Array1::from_vec(vec![-1.5]),
    };
    let net = BayesMlp { layers: vec![layer.clone()], slope: 0.01, prior_std: 1.0 };
    let x = [1.0, 2.0, -0.5];
    let mean: f64 = 0.3 + 0.5 * 1.0 - 0.25 * 2.0 - 0.5;
    let var: f64 = softplus(-1.5).powi(2)
        + x.iter().zip(layer.weight_rho.iter()).map(|(xi, r)| (softplus(*r) * xi).powi(2)).sum::<f64>();
    let n = 100_000;
    let ys: Vec<f64> = (0..n).map(|s| net.forward(&x, s as u64).unwrap()[0]).collect();
    let m = ys.iter().sum::<f64>() / n as f64;
    let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((m - mean).abs() < 5.0 * (var / n as f64).sqrt(), "mean {m} vs {mean}");
    assert!((v / var - 1.0).abs() < 0.03, "variance {v} vs {var}");
}
