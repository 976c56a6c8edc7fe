mod common;

use std::time::Instant;

use nilm::nn::{compute_gradients, init_params, LayerSpec, ParamSet};

#[test]
fn analytic_gradients_match_central_differences() {
    let started = Instant::now();
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..24 {
        let r = common::gradient_check(seed, 1e-4);
        assert!(r.worst <= 1e-4, "seed {seed}: relative error {:.3e}", r.worst);
        checked += r.checked;
        skipped += r.skipped;
    }
    assert!(skipped * 50 < checked, "{skipped} kink skips out of {checked}");
    assert!(started.elapsed().as_secs() < 60);
}

#[test]
fn frozen_layers_get_zero_gradients() {
    let mut specs = vec![
        LayerSpec::conv1d(3, 3),
        LayerSpec::relu(),
        LayerSpec::flatten(),
        LayerSpec::dense(4),
        LayerSpec::relu(),
        LayerSpec::dense(1),
    ];
    specs[0].trainable = false;
    let params: ParamSet<f64> = init_params(&specs, 7, 3).unwrap();
    let windows = vec![vec![0.5, -1.0, 2.0, 0.1, 0.0, 1.5, -0.7]];
    let (_, grads) = compute_gradients(&specs, &params, &windows, &[0.3]).unwrap();
    let conv = grads.layers[0].as_ref().unwrap();
    assert!(conv.weight.data().iter().chain(conv.bias.data()).all(|g| *g == 0.0));
    let dense = grads.layers[5].as_ref().unwrap();
    assert!(dense.weight.data().iter().any(|g| *g != 0.0));
}

#[test]
fn loss_matches_oracle() {
    let mut rng = common::rng(5);
    for seed in 0..10 {
        let (specs, w) = common::random_small_net(&mut rng);
        let params: ParamSet<f64> = init_params(&specs, w, seed).unwrap();
        let windows: Vec<Vec<f64>> = (0..3).map(|_| common::random_vec(&mut rng, w, -1.0, 1.0)).collect();
        let targets = vec![0.1, -0.2, 0.4];
        let (loss, _) = compute_gradients(&specs, &params, &windows, &targets).unwrap();
        let (oracle, _) = common::loss_oracle(&specs, &params, &windows, &targets);
        assert!(common::rel_err(loss, oracle) < 1e-12, "{loss} vs {oracle}");
    }
}
