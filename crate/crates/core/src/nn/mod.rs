//! Small deterministic network engine: 1-D convolution, dense, ReLU and
//! flatten layers, mean-squared-error loss, reverse-mode gradients and Adam.

mod adam;
mod engine;
mod layer;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use engine::{
    accumulate_gradients, check_params, compute_gradients, conv1d_forward, dense_forward,
    mse_loss, relu, Engine,
};
pub use layer::{infer_shapes, layer_names, ActShape, LayerKind, LayerSpec, Padding};
pub use params::{init_params, param_shapes, LayerParams, ParamSet};
pub use tensor::{Scalar, Tensor};
