use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::{infer_shapes, ActShape, LayerKind, LayerSpec};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Weight and bias of one conv or dense layer.
///
/// Conv weights are `[kernel, in_channels, filters]`; dense weights are
/// `[inputs, units]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor::zeros(self.weight.shape().to_vec()),
            bias: Tensor::zeros(self.bias.shape().to_vec()),
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameters for every layer of a stack; layers without parameters hold
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub layers: Vec<Option<LayerParams<T>>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| l.as_ref().map(LayerParams::zeros_like))
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().flatten().map(LayerParams::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.as_ref().map(|p| LayerParams {
                        weight: p.weight.cast(),
                        bias: p.bias.cast(),
                    })
                })
                .collect(),
        }
    }

    /// Flat views of every parameter array, layer order, weight before bias.
    pub fn arrays(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| [p.weight.data(), p.bias.data()])
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|p| [p.weight.data_mut(), p.bias.data_mut()])
    }

    pub fn set_zero(&mut self) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// True when both sets have parameters of identical shape per layer.
    pub fn congruent<U>(&self, other: &ParamSet<U>) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    a.weight.shape() == b.weight.shape() && a.bias.shape() == b.bias.shape()
                }
                _ => false,
            })
    }
}

/// Expected `(weight_shape, bias_shape)` for each layer, `None` for layers
/// without parameters.
pub fn param_shapes(
    specs: &[LayerSpec],
    window_length: usize,
) -> Result<Vec<Option<(Vec<usize>, Vec<usize>)>>> {
    let shapes = infer_shapes(specs, window_length)?;
    Ok(specs
        .iter()
        .zip(&shapes)
        .map(|(spec, input)| match (spec.kind, *input) {
            (
                LayerKind::Conv1d {
                    filters, kernel, ..
                },
                ActShape::Seq { channels, .. },
            ) => Some((vec![kernel, channels, filters], vec![filters])),
            (LayerKind::Dense { units }, ActShape::Flat(width)) => {
                Some((vec![width, units], vec![units]))
            }
            _ => None,
        })
        .collect())
}

/// Seeded initialization: weights ~ N(0, 1/fan_in), biases zero.
///
/// Draws happen in `f64` and are cast, so `f32` and `f64` parameter sets from
/// the same seed agree up to rounding.
pub fn init_params<T: Scalar>(
    specs: &[LayerSpec],
    window_length: usize,
    seed: u64,
) -> Result<ParamSet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = param_shapes(specs, window_length)?
        .into_iter()
        .map(|shapes| {
            shapes
                .map(|(w_shape, b_shape)| {
                    let fan_in: usize = w_shape[..w_shape.len() - 1].iter().product();
                    let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt())
                        .map_err(|e| Error::Spec(e.to_string()))?;
                    let n: usize = w_shape.iter().product();
                    let data = (0..n).map(|_| T::of(normal.sample(&mut rng))).collect();
                    Ok(LayerParams {
                        weight: Tensor::new(w_shape, data)?,
                        bias: Tensor::zeros(b_shape),
                    })
                })
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamSet { layers })
}
