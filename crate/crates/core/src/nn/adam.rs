use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::params::ParamSet;
use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            config,
        }
    }
}

/// One bias-corrected Adam update of every trainable layer. Layers with
/// `trainable == false` are not touched, moments included.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut AdamState<T>,
    specs: &[LayerSpec],
) -> Result<()> {
    if !params.congruent(grads)
        || !params.congruent(&state.m)
        || !params.congruent(&state.v)
        || specs.len() != params.layers.len()
    {
        return Err(Error::Shape("adam: parameters, gradients and moments differ in shape".into()));
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let lr = T::of(c.learning_rate);
    let b1 = T::of(c.beta1);
    let b2 = T::of(c.beta2);
    let eps = T::of(c.epsilon);
    let one = T::one();
    let corr1 = T::of(1.0 - c.beta1.powi(t));
    let corr2 = T::of(1.0 - c.beta2.powi(t));

    for (i, spec) in specs.iter().enumerate() {
        if !spec.trainable {
            continue;
        }
        let (Some(p), Some(g), Some(m), Some(v)) = (
            params.layers[i].as_mut(),
            grads.layers[i].as_ref(),
            state.m.layers[i].as_mut(),
            state.v.layers[i].as_mut(),
        ) else {
            continue;
        };
        let pairs = [
            (p.weight.data_mut(), g.weight.data(), m.weight.data_mut(), v.weight.data_mut()),
            (p.bias.data_mut(), g.bias.data(), m.bias.data_mut(), v.bias.data_mut()),
        ];
        for (p, g, m, v) in pairs {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}
