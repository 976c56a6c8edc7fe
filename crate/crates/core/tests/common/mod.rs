//! Loop-based reference implementations the library is checked against.
//! Nothing here calls into the library's kernels.

#![allow(dead_code)]

pub mod synthetic;

use std::collections::BTreeMap;

use nilm::nn::{LayerKind, LayerSpec, Padding, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `input[t][c]`, weight flat `[kernel, c_in, filters]`.
pub fn conv_oracle(
    input: &[Vec<f64>],
    weight: &[f64],
    bias: &[f64],
    kernel: usize,
    padding: Padding,
) -> Vec<Vec<f64>> {
    let len = input.len();
    let c_in = input[0].len();
    let filters = bias.len();
    let (left, len_out) = match padding {
        Padding::Same => ((kernel - 1) / 2, len),
        Padding::Valid => (0, len + 1 - kernel),
    };
    let mut out = vec![vec![0.0; filters]; len_out];
    for t in 0..len_out {
        for f in 0..filters {
            let mut acc = bias[f];
            for j in 0..kernel {
                let pos = t as i64 + j as i64 - left as i64;
                if pos < 0 || pos >= len as i64 {
                    continue;
                }
                for c in 0..c_in {
                    acc += input[pos as usize][c] * weight[(j * c_in + c) * filters + f];
                }
            }
            out[t][f] = acc;
        }
    }
    out
}

enum Act {
    Seq(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

/// Network output for one window, plus the sign of every ReLU input (so a
/// caller can tell when a perturbation crossed a kink).
pub fn forward_oracle(specs: &[LayerSpec], params: &ParamSet<f64>, window: &[f64]) -> (f64, Vec<bool>) {
    let mut act = Act::Seq(window.iter().map(|&x| vec![x]).collect());
    let mut signs = Vec::new();
    for (spec, p) in specs.iter().zip(&params.layers) {
        act = match (spec.kind, act) {
            (LayerKind::Conv1d { kernel, padding, .. }, Act::Seq(x)) => {
                let p = p.as_ref().unwrap();
                Act::Seq(conv_oracle(&x, p.weight.data(), p.bias.data(), kernel, padding))
            }
            (LayerKind::Dense { units }, Act::Flat(x)) => {
                let p = p.as_ref().unwrap();
                let w = p.weight.data();
                let out = (0..units)
                    .map(|u| p.bias.data()[u] + x.iter().enumerate().map(|(i, v)| v * w[i * units + u]).sum::<f64>())
                    .collect();
                Act::Flat(out)
            }
            (LayerKind::Relu, Act::Seq(x)) => Act::Seq(
                x.into_iter()
                    .map(|row| {
                        row.into_iter()
                            .map(|v| {
                                signs.push(v > 0.0);
                                v.max(0.0)
                            })
                            .collect()
                    })
                    .collect(),
            ),
            (LayerKind::Relu, Act::Flat(x)) => Act::Flat(
                x.into_iter()
                    .map(|v| {
                        signs.push(v > 0.0);
                        v.max(0.0)
                    })
                    .collect(),
            ),
            (LayerKind::Flatten, Act::Seq(x)) => Act::Flat(x.concat()),
            (kind, _) => panic!("oracle cannot apply {kind:?} here"),
        };
    }
    match act {
        Act::Flat(x) => (x[0], signs),
        Act::Seq(_) => panic!("stack must end flat"),
    }
}

/// Batch MSE and the concatenated ReLU sign pattern.
pub fn loss_oracle(specs: &[LayerSpec], params: &ParamSet<f64>, windows: &[Vec<f64>], targets: &[f64]) -> (f64, Vec<bool>) {
    let mut sum = 0.0;
    let mut signs = Vec::new();
    for (w, t) in windows.iter().zip(targets) {
        let (y, s) = forward_oracle(specs, params, w);
        sum += (y - t) * (y - t);
        signs.extend(s);
    }
    (sum / windows.len() as f64, signs)
}

pub fn mae_oracle(pred: &[f64], truth: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.len() {
        s += (pred[i] - truth[i]).abs();
    }
    s / pred.len() as f64
}

pub fn sae_oracle(pred: &[f64], truth: &[f64]) -> f64 {
    let (mut r, mut r_hat) = (0.0, 0.0);
    for i in 0..pred.len() {
        r += truth[i];
        r_hat += pred[i];
    }
    (r_hat - r).abs() / r
}

pub fn nde_oracle(pred: &[f64], truth: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..pred.len() {
        num += (truth[i] - pred[i]).powi(2);
        den += truth[i].powi(2);
    }
    num / den
}

/// Days keyed by UTC midnight; a day counts when its samples span 24 h.
pub fn epd_oracle(ts: &[i64], pred: &[f64], truth: &[f64], period: i64) -> Option<f64> {
    let mut days: BTreeMap<i64, (i64, f64, f64)> = BTreeMap::new();
    for i in 0..ts.len() {
        let d = days.entry(ts[i].div_euclid(86_400)).or_default();
        d.0 += 1;
        d.1 += pred[i] * period as f64 / 3600.0;
        d.2 += truth[i] * period as f64 / 3600.0;
    }
    let full: Vec<f64> = days
        .values()
        .filter(|(n, _, _)| n * period >= 86_400)
        .map(|(_, p, t)| (p - t).abs())
        .collect();
    if full.is_empty() {
        None
    } else {
        Some(full.iter().sum::<f64>() / full.len() as f64)
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Small random stack: two conv layers, flatten, one dense output.
pub fn random_small_net(rng: &mut impl Rng) -> (Vec<LayerSpec>, usize) {
    let w = rng.random_range(10..=31usize);
    let mut specs = Vec::new();
    for _ in 0..2 {
        let filters = rng.random_range(1..=4);
        let kernel = rng.random_range(1..=5);
        specs.push(if rng.random_bool(0.25) {
            LayerSpec::conv1d_valid(filters, kernel)
        } else {
            LayerSpec::conv1d(filters, kernel)
        });
        specs.push(LayerSpec::relu());
    }
    specs.push(LayerSpec::flatten());
    specs.push(LayerSpec::dense(1));
    (specs, w)
}

pub fn random_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

/// Compares every analytic gradient entry of a random small network with
/// central differences of the loop oracle. Entries whose perturbation flips
/// a ReLU are skipped: the loss is not differentiable across the kink.
pub fn gradient_check(seed: u64, h: f64) -> GradCheck {
    use nilm::nn::{compute_gradients, init_params};

    let mut rng = rng(seed);
    let (specs, w) = random_small_net(&mut rng);
    let mut params: ParamSet<f64> = init_params(&specs, w, seed).unwrap();
    // Non-zero biases so units sit away from the origin.
    for p in params.layers.iter_mut().flatten() {
        for b in p.bias.data_mut() {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    let batch = rng.random_range(1..=8);
    let windows: Vec<Vec<f64>> = (0..batch).map(|_| random_vec(&mut rng, w, -2.0, 2.0)).collect();
    let targets = random_vec(&mut rng, batch, -1.0, 1.0);

    let (_, grads) = compute_gradients(&specs, &params, &windows, &targets).unwrap();
    let analytic: Vec<f64> = grads.arrays().flat_map(|a| a.to_vec()).collect();
    let n = analytic.len();

    let mut report = GradCheck { checked: 0, skipped: 0, worst: 0.0 };
    for k in 0..n {
        let shifted = |delta: f64, params: &ParamSet<f64>| {
            let mut p = params.clone();
            let slot = p.arrays_mut().flat_map(|a| a.iter_mut()).nth(k).unwrap();
            *slot += delta;
            loss_oracle(&specs, &p, &windows, &targets)
        };
        let (plus, s_plus) = shifted(h, &params);
        let (minus, s_minus) = shifted(-h, &params);
        if s_plus != s_minus {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        report.worst = report.worst.max(err);
        report.checked += 1;
    }
    report
}
