mod common;

use subsel_core::nn::{clip_grad_norm, Adam, Mlp};

#[test]
fn mlp_gradients_match_finite_differences() {
    for layers in [3, 4, 5] {
        for seed in 0..20 {
            let err = common::mlp_gradient_error(layers, seed);
            assert!(err <= 1e-4, "{layers} layers, seed {seed}: relative error {err}");
        }
    }
}

#[test]
fn transformer_gradients_match_finite_differences() {
    for seed in 0..20 {
        let err = common::transformer_gradient_error(seed, true);
        assert!(err <= 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn mlp_learns_a_line() {
    let mut net = Mlp::with_layers(1, 16, 3, 1, 4);
    let mut opt = Adam::new(net.params().len(), 1e-2);
    let xs: Vec<f64> = (0..32).map(|i| -1.0 + 2.0 * i as f64 / 31.0).collect();
    for _ in 0..2000 {
        let mut g = vec![0.0; net.params().len()];
        for &x in &xs {
            let y = 2.0 * x + 1.0;
            net.accumulate(&[x], &mut g, |o| vec![2.0 * (o[0] - y) / xs.len() as f64]).unwrap();
        }
        clip_grad_norm(&mut g, 10.0);
        opt.step(net.params_mut(), &g).unwrap();
    }
    let mse: f64 = xs
        .iter()
        .map(|&x| (net.forward(&[x]).unwrap()[0] - (2.0 * x + 1.0)).powi(2))
        .sum::<f64>()
        / xs.len() as f64;
    assert!(mse < 1e-3, "mse {mse}");
}

