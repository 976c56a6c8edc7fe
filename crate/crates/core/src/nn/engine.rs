//! Forward and reverse passes over a closed layer set.

use super::layer::{infer_shapes, ActShape, LayerKind, LayerSpec, Padding};
use super::params::{LayerParams, ParamSet};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Slice kernels. Sequences are `[len, channels]` with channels fastest.

#[allow(clippy::too_many_arguments)]
fn conv_forward_into<T: Scalar>(
    x: &[T],
    len_in: usize,
    c_in: usize,
    p: &LayerParams<T>,
    kernel: usize,
    c_out: usize,
    pad_left: usize,
    y: &mut [T],
) {
    let w = p.weight.data();
    let b = p.bias.data();
    let len_out = y.len() / c_out;
    for l in 0..len_out {
        let yrow = &mut y[l * c_out..(l + 1) * c_out];
        yrow.copy_from_slice(b);
        for j in 0..kernel {
            let Some(src) = (l + j).checked_sub(pad_left).filter(|s| *s < len_in) else {
                continue;
            };
            let xrow = &x[src * c_in..(src + 1) * c_in];
            for (c, &xv) in xrow.iter().enumerate() {
                if xv == T::zero() {
                    continue;
                }
                let wrow = &w[(j * c_in + c) * c_out..(j * c_in + c + 1) * c_out];
                for (yo, &wo) in yrow.iter_mut().zip(wrow) {
                    *yo += xv * wo;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    x: &[T],
    len_in: usize,
    c_in: usize,
    p: &LayerParams<T>,
    kernel: usize,
    c_out: usize,
    pad_left: usize,
    dy: &[T],
    grad: Option<&mut LayerParams<T>>,
    dx: Option<&mut [T]>,
) {
    let w = p.weight.data();
    let len_out = dy.len() / c_out;
    let (mut dw, mut db) = match grad {
        Some(g) => (Some(g.weight.data_mut()), Some(g.bias.data_mut())),
        None => (None, None),
    };
    let mut dx = dx;
    if let Some(dx) = dx.as_deref_mut() {
        dx.iter_mut().for_each(|v| *v = T::zero());
    }
    for l in 0..len_out {
        let dyrow = &dy[l * c_out..(l + 1) * c_out];
        if let Some(db) = db.as_deref_mut() {
            for (d, &g) in db.iter_mut().zip(dyrow) {
                *d += g;
            }
        }
        for j in 0..kernel {
            let Some(src) = (l + j).checked_sub(pad_left).filter(|s| *s < len_in) else {
                continue;
            };
            for c in 0..c_in {
                let off = (j * c_in + c) * c_out;
                if let Some(dw) = dw.as_deref_mut() {
                    let xv = x[src * c_in + c];
                    if xv != T::zero() {
                        for (d, &g) in dw[off..off + c_out].iter_mut().zip(dyrow) {
                            *d += xv * g;
                        }
                    }
                }
                if let Some(dx) = dx.as_deref_mut() {
                    let wrow = &w[off..off + c_out];
                    dx[src * c_in + c] += dot(wrow, dyrow);
                }
            }
        }
    }
}

fn dense_forward_into<T: Scalar>(x: &[T], p: &LayerParams<T>, y: &mut [T]) {
    let w = p.weight.data();
    let units = y.len();
    y.copy_from_slice(p.bias.data());
    for (i, &xv) in x.iter().enumerate() {
        if xv == T::zero() {
            continue;
        }
        for (yo, &wo) in y.iter_mut().zip(&w[i * units..(i + 1) * units]) {
            *yo += xv * wo;
        }
    }
}

fn dense_backward<T: Scalar>(
    x: &[T],
    p: &LayerParams<T>,
    dy: &[T],
    grad: Option<&mut LayerParams<T>>,
    dx: Option<&mut [T]>,
) {
    let w = p.weight.data();
    let units = dy.len();
    if let Some(g) = grad {
        for (d, &gy) in g.bias.data_mut().iter_mut().zip(dy) {
            *d += gy;
        }
        let dw = g.weight.data_mut();
        for (i, &xv) in x.iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            for (d, &gy) in dw[i * units..(i + 1) * units].iter_mut().zip(dy) {
                *d += xv * gy;
            }
        }
    }
    if let Some(dx) = dx {
        for (i, d) in dx.iter_mut().enumerate() {
            *d = dot(&w[i * units..(i + 1) * units], dy);
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

// ---------------------------------------------------------------------------
// Tensor-level operations.

fn seq_dims(input: &Tensor<impl Scalar>) -> Result<(usize, usize)> {
    match input.shape() {
        [len, channels] => Ok((*len, *channels)),
        [len] => Ok((*len, 1)),
        s => Err(Error::Shape(format!("expected [len, channels], got {s:?}"))),
    }
}

/// 1-D convolution, stride 1. Input `[L, C_in]`, weight
/// `[kernel, C_in, filters]`, output `[L_out, filters]`.
pub fn conv1d_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &LayerParams<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (len, c_in) = seq_dims(input)?;
    let &[kernel, w_in, filters] = params.weight.shape() else {
        return Err(Error::Shape("conv weight must be rank 3".into()));
    };
    if w_in != c_in || params.bias.shape() != [filters] {
        return Err(Error::Shape(format!(
            "conv expects {w_in} input channels, got {c_in}"
        )));
    }
    let len_out = padding
        .output_len(len, kernel)
        .ok_or_else(|| Error::Shape(format!("kernel {kernel} longer than input {len}")))?;
    let mut out = vec![T::zero(); len_out * filters];
    conv_forward_into(
        input.data(),
        len,
        c_in,
        params,
        kernel,
        filters,
        padding.left(kernel),
        &mut out,
    );
    Tensor::new(vec![len_out, filters], out)
}

/// `input · W + b` for an `[n]` input and `[n, units]` weight.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, params: &LayerParams<T>) -> Result<Tensor<T>> {
    let &[rows, units] = params.weight.shape() else {
        return Err(Error::Shape("dense weight must be rank 2".into()));
    };
    if input.len() != rows || params.bias.shape() != [units] {
        return Err(Error::Shape(format!(
            "dense expects width {rows}, got {}",
            input.len()
        )));
    }
    let mut out = vec![T::zero(); units];
    dense_forward_into(input.data(), params, &mut out);
    Tensor::new(vec![units], out)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    out
}

/// Mean squared error.
pub fn mse_loss<T: Scalar>(predictions: &[T], targets: &[T]) -> Result<T> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::Shape(format!(
            "mse needs equal non-empty lengths, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let sum: T = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / T::of(predictions.len() as f64))
}

// ---------------------------------------------------------------------------
// Whole-stack evaluation.

/// Reusable buffers for evaluating one stack on single windows.
#[derive(Debug, Clone)]
pub struct Engine<T> {
    shapes: Vec<ActShape>,
    acts: Vec<Vec<T>>,
    deltas: Vec<Vec<T>>,
}

impl<T: Scalar> Engine<T> {
    pub fn new(specs: &[LayerSpec], window_length: usize) -> Result<Self> {
        let shapes = infer_shapes(specs, window_length)?;
        let acts = shapes.iter().map(|s| vec![T::zero(); s.size()]).collect();
        let deltas = shapes.iter().map(|s| vec![T::zero(); s.size()]).collect();
        Ok(Self {
            shapes,
            acts,
            deltas,
        })
    }

    pub fn shapes(&self) -> &[ActShape] {
        &self.shapes
    }

    /// Activation entering layer `index` (the output of layer `index - 1`)
    /// from the most recent forward pass.
    pub fn activation(&self, index: usize) -> &[T] {
        &self.acts[index]
    }

    pub fn window_length(&self) -> usize {
        self.shapes[0].size()
    }

    /// Runs layers `[from, to)` on whatever is stored at boundary `from`.
    fn run(&mut self, specs: &[LayerSpec], params: &ParamSet<T>, from: usize, to: usize) {
        for i in from..to {
            let (head, tail) = self.acts.split_at_mut(i + 1);
            let x = &head[i];
            let y = &mut tail[0];
            match specs[i].kind {
                LayerKind::Conv1d {
                    filters,
                    kernel,
                    padding,
                } => {
                    let ActShape::Seq { len, channels } = self.shapes[i] else {
                        unreachable!("shape algebra checked at construction")
                    };
                    let p = params.layers[i].as_ref().expect("conv params");
                    conv_forward_into(x, len, channels, p, kernel, filters, padding.left(kernel), y);
                }
                LayerKind::Dense { .. } => {
                    let p = params.layers[i].as_ref().expect("dense params");
                    dense_forward_into(x, p, y);
                }
                LayerKind::Relu => {
                    for (o, &v) in y.iter_mut().zip(x.iter()) {
                        *o = v.max(T::zero());
                    }
                }
                LayerKind::Flatten => y.copy_from_slice(x),
            }
        }
    }

    /// Forward pass of one window; returns the final activation.
    pub fn forward(&mut self, specs: &[LayerSpec], params: &ParamSet<T>, window: &[T]) -> &[T] {
        debug_assert_eq!(window.len(), self.acts[0].len());
        self.acts[0].copy_from_slice(window);
        self.run(specs, params, 0, specs.len());
        &self.acts[specs.len()]
    }

    /// Forward pass that starts from an activation at boundary `from`.
    pub fn forward_from(
        &mut self,
        specs: &[LayerSpec],
        params: &ParamSet<T>,
        from: usize,
        activation: &[T],
    ) -> &[T] {
        self.acts[from].copy_from_slice(activation);
        self.run(specs, params, from, specs.len());
        &self.acts[specs.len()]
    }

    /// Back-propagates `d_output` through the stack after a forward pass,
    /// accumulating into `grads` for trainable layers only.
    ///
    /// Input gradients are not computed below the lowest trainable layer.
    pub fn backward(
        &mut self,
        specs: &[LayerSpec],
        params: &ParamSet<T>,
        d_output: &[T],
        grads: &mut ParamSet<T>,
    ) {
        let n = specs.len();
        let lowest_trainable = specs.iter().position(|s| s.trainable && s.has_params());
        let Some(lowest) = lowest_trainable else {
            return;
        };
        self.deltas[n].copy_from_slice(d_output);
        for i in (lowest..n).rev() {
            let need_dx = i > lowest;
            let (dhead, dtail) = self.deltas.split_at_mut(i + 1);
            let dy = &dtail[0];
            let dx = &mut dhead[i];
            let x = &self.acts[i];
            let trainable = specs[i].trainable;
            match specs[i].kind {
                LayerKind::Conv1d {
                    filters,
                    kernel,
                    padding,
                } => {
                    let ActShape::Seq { len, channels } = self.shapes[i] else {
                        unreachable!()
                    };
                    let p = params.layers[i].as_ref().expect("conv params");
                    let g = if trainable {
                        grads.layers[i].as_mut()
                    } else {
                        None
                    };
                    conv_backward(
                        x,
                        len,
                        channels,
                        p,
                        kernel,
                        filters,
                        padding.left(kernel),
                        dy,
                        g,
                        need_dx.then_some(dx.as_mut_slice()),
                    );
                }
                LayerKind::Dense { .. } => {
                    let p = params.layers[i].as_ref().expect("dense params");
                    let g = if trainable {
                        grads.layers[i].as_mut()
                    } else {
                        None
                    };
                    dense_backward(x, p, dy, g, need_dx.then_some(dx.as_mut_slice()));
                }
                LayerKind::Relu => {
                    if need_dx {
                        let y = &self.acts[i + 1];
                        for ((d, &g), &yv) in dx.iter_mut().zip(dy.iter()).zip(y) {
                            *d = if yv > T::zero() { g } else { T::zero() };
                        }
                    }
                }
                LayerKind::Flatten => {
                    if need_dx {
                        dx.copy_from_slice(dy);
                    }
                }
            }
        }
    }
}

/// Checks parameter shapes against the stack before evaluation.
pub fn check_params<T: Scalar>(
    specs: &[LayerSpec],
    params: &ParamSet<T>,
    window_length: usize,
) -> Result<()> {
    let expected = super::params::param_shapes(specs, window_length)?;
    if expected.len() != params.layers.len() {
        return Err(Error::Shape(format!(
            "{} layer specs but {} parameter slots",
            expected.len(),
            params.layers.len()
        )));
    }
    for (i, (e, p)) in expected.iter().zip(&params.layers).enumerate() {
        let ok = match (e, p) {
            (None, None) => true,
            (Some((w, b)), Some(p)) => p.weight.shape() == w.as_slice() && p.bias.shape() == b.as_slice(),
            _ => false,
        };
        if !ok {
            return Err(Error::Shape(format!("layer {i}: parameter shape mismatch")));
        }
    }
    Ok(())
}

/// MSE over a batch and its gradient with respect to every trainable
/// parameter. Frozen layers get zero gradients.
pub fn compute_gradients<T: Scalar, S: AsRef<[T]>>(
    specs: &[LayerSpec],
    params: &ParamSet<T>,
    inputs: &[S],
    targets: &[T],
) -> Result<(T, ParamSet<T>)> {
    let mut engine = Engine::new(specs, inputs.first().map_or(0, |w| w.as_ref().len()))?;
    let mut grads = params.zeros_like();
    let loss = accumulate_gradients(&mut engine, specs, params, inputs, targets, &mut grads)?;
    Ok((loss, grads))
}

/// Like [`compute_gradients`] with caller-owned engine and gradient buffers.
/// `grads` is overwritten.
pub fn accumulate_gradients<T: Scalar, S: AsRef<[T]>>(
    engine: &mut Engine<T>,
    specs: &[LayerSpec],
    params: &ParamSet<T>,
    inputs: &[S],
    targets: &[T],
    grads: &mut ParamSet<T>,
) -> Result<T> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Shape(format!(
            "batch needs equal non-empty inputs and targets, got {} and {}",
            inputs.len(),
            targets.len()
        )));
    }
    check_params(specs, params, engine.window_length())?;
    if engine.shapes.last() != Some(&ActShape::Flat(1)) {
        return Err(Error::Shape("stack must end in a single output".into()));
    }
    grads.set_zero();
    let scale = T::of(2.0 / inputs.len() as f64);
    let mut loss = T::zero();
    for (window, &target) in inputs.iter().zip(targets) {
        let window = window.as_ref();
        if window.len() != engine.window_length() {
            return Err(Error::Shape(format!(
                "window of length {} for a stack built for {}",
                window.len(),
                engine.window_length()
            )));
        }
        let err = engine.forward(specs, params, window)[0] - target;
        loss += err * err;
        engine.backward(specs, params, &[scale * err], grads);
    }
    Ok(loss / T::of(inputs.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::init_params;

    fn lp(weight: Tensor<f64>, bias: Vec<f64>) -> LayerParams<f64> {
        LayerParams {
            bias: Tensor::from_vec(bias).unwrap(),
            weight,
        }
    }

    #[test]
    fn conv_valid_difference_kernel() {
        let x = Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = lp(Tensor::new(vec![3, 1, 1], vec![1.0, 0.0, -1.0]).unwrap(), vec![0.0]);
        let y = conv1d_forward(&x, &p, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        assert_eq!(y.data(), &[-2.0, -2.0]);
    }

    #[test]
    fn conv_identity_and_zero_kernels() {
        let x = Tensor::new(vec![5, 1], vec![3.0, -1.0, 4.0, 1.0, -5.0]).unwrap();
        let id = lp(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(), vec![0.0]);
        assert_eq!(conv1d_forward(&x, &id, Padding::Same).unwrap().data(), x.data());
        let zero = lp(Tensor::zeros(vec![3, 1, 2]), vec![0.0, 0.0]);
        let y = conv1d_forward(&x, &zero, Padding::Same).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conv_channel_mismatch() {
        let x = Tensor::new(vec![4, 2], vec![0.0; 8]).unwrap();
        let p = lp(Tensor::zeros(vec![3, 1, 1]), vec![0.0]);
        assert!(matches!(conv1d_forward(&x, &p, Padding::Same), Err(Error::Shape(_))));
    }

    #[test]
    fn dense_cases() {
        let id = lp(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        let x = Tensor::from_vec(vec![3.0, -7.0]).unwrap();
        assert_eq!(dense_forward(&x, &id).unwrap().data(), x.data());

        let sum = lp(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap(), vec![0.5]);
        let x = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        assert_eq!(dense_forward(&x, &sum).unwrap().data(), &[3.5]);

        let zero = Tensor::from_vec(vec![0.0, 0.0]).unwrap();
        assert_eq!(dense_forward(&zero, &sum).unwrap().data(), &[0.5]);
        assert!(dense_forward(&Tensor::from_vec(vec![1.0]).unwrap(), &sum).is_err());
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        assert_eq!(relu(&pos), pos);
        let neg = Tensor::from_vec(vec![-1.0, -2.0]).unwrap();
        assert_eq!(relu(&neg).data(), &[0.0, 0.0]);
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert_eq!(mse_loss(&[2.0], &[-1.0]).unwrap(), 9.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse_loss::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn linear_net_at_minimum_has_zero_gradient() {
        // y = w·x with targets generated by the same w.
        let specs = [LayerSpec::flatten(), LayerSpec::dense(1)];
        let params = init_params::<f64>(&specs, 3, 1).unwrap();
        let inputs = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]];
        let mut engine = Engine::new(&specs, 3).unwrap();
        let targets: Vec<f64> = inputs
            .iter()
            .map(|w| engine.forward(&specs, &params, w)[0])
            .collect();
        let (loss, grads) = compute_gradients(&specs, &params, &inputs, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.arrays().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn frozen_layer_gradients_are_zero() {
        let mut specs = vec![
            LayerSpec::conv1d(2, 3),
            LayerSpec::relu(),
            LayerSpec::flatten(),
            LayerSpec::dense(1),
        ];
        specs[0].trainable = false;
        let params = init_params::<f64>(&specs, 5, 2).unwrap();
        let inputs = vec![vec![0.1, -0.3, 0.5, 0.9, -1.0]];
        let (_, grads) = compute_gradients(&specs, &params, &inputs, &[1.0]).unwrap();
        let conv = grads.layers[0].as_ref().unwrap();
        assert!(conv.weight.data().iter().chain(conv.bias.data()).all(|g| *g == 0.0));
        let dense = grads.layers[3].as_ref().unwrap();
        assert!(dense.weight.data().iter().any(|g| *g != 0.0));
    }

    #[test]
    fn gradient_batch_shape_errors() {
        let specs = [LayerSpec::flatten(), LayerSpec::dense(1)];
        let params = init_params::<f64>(&specs, 3, 1).unwrap();
        let empty: Vec<Vec<f64>> = vec![];
        assert!(compute_gradients(&specs, &params, &empty, &[]).is_err());
        let bad = vec![vec![1.0, 2.0]];
        assert!(compute_gradients(&specs, &params, &bad, &[0.0]).is_err());
    }
}
