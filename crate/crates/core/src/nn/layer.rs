use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output length equals input length; the extra tap goes on the right
    /// for even kernels.
    #[default]
    Same,
    Valid,
}

impl Padding {
    /// Zeros added before the first input sample.
    pub fn left(self, kernel: usize) -> usize {
        match self {
            Padding::Same => (kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }

    pub fn output_len(self, input_len: usize, kernel: usize) -> Option<usize> {
        match self {
            Padding::Same => Some(input_len),
            Padding::Valid => (input_len + 1).checked_sub(kernel).filter(|l| *l > 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d {
        filters: usize,
        kernel: usize,
        #[serde(default)]
        padding: Padding,
    },
    Dense {
        units: usize,
    },
    Relu,
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default = "default_trainable")]
    pub trainable: bool,
}

fn default_trainable() -> bool {
    true
}

impl LayerSpec {
    pub fn conv1d(filters: usize, kernel: usize) -> Self {
        Self::new(LayerKind::Conv1d {
            filters,
            kernel,
            padding: Padding::Same,
        })
    }

    pub fn conv1d_valid(filters: usize, kernel: usize) -> Self {
        Self::new(LayerKind::Conv1d {
            filters,
            kernel,
            padding: Padding::Valid,
        })
    }

    pub fn dense(units: usize) -> Self {
        Self::new(LayerKind::Dense { units })
    }

    pub fn relu() -> Self {
        Self::new(LayerKind::Relu)
    }

    pub fn flatten() -> Self {
        Self::new(LayerKind::Flatten)
    }

    fn new(kind: LayerKind) -> Self {
        Self {
            kind,
            trainable: true,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self.kind, LayerKind::Conv1d { .. })
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. })
    }

    pub fn has_params(&self) -> bool {
        self.is_conv() || self.is_dense()
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LayerKind::Conv1d {
                filters, kernel, ..
            } if filters == 0 || kernel == 0 => Err(Error::Spec(format!(
                "conv1d needs filters >= 1 and kernel >= 1, got {filters}x{kernel}"
            ))),
            LayerKind::Dense { units: 0 } => Err(Error::Spec("dense needs units >= 1".into())),
            _ => Ok(()),
        }
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    /// `[len, channels]`, channels fastest.
    Seq { len: usize, channels: usize },
    Flat(usize),
}

impl ActShape {
    pub fn size(&self) -> usize {
        match *self {
            ActShape::Seq { len, channels } => len * channels,
            ActShape::Flat(w) => w,
        }
    }
}

/// Propagates a `[window_length, 1]` input through the stack. Returns one
/// shape per layer boundary (`specs.len() + 1` entries).
pub fn infer_shapes(specs: &[LayerSpec], window_length: usize) -> Result<Vec<ActShape>> {
    let mut shape = ActShape::Seq {
        len: window_length,
        channels: 1,
    };
    if window_length == 0 {
        return Err(Error::Spec("window length must be >= 1".into()));
    }
    let mut shapes = vec![shape];
    for (i, spec) in specs.iter().enumerate() {
        spec.validate()?;
        shape = match (spec.kind, shape) {
            (
                LayerKind::Conv1d {
                    filters,
                    kernel,
                    padding,
                },
                ActShape::Seq { len, .. },
            ) => {
                let len = padding.output_len(len, kernel).ok_or_else(|| {
                    Error::Spec(format!("layer {i}: kernel {kernel} longer than input {len}"))
                })?;
                ActShape::Seq {
                    len,
                    channels: filters,
                }
            }
            (LayerKind::Conv1d { .. }, ActShape::Flat(_)) => {
                return Err(Error::Spec(format!("layer {i}: conv1d after flatten")))
            }
            (LayerKind::Dense { units }, ActShape::Flat(_)) => ActShape::Flat(units),
            (LayerKind::Dense { .. }, ActShape::Seq { .. }) => {
                return Err(Error::Spec(format!(
                    "layer {i}: dense layer needs a flatten before it"
                )))
            }
            (LayerKind::Relu, s) => s,
            (LayerKind::Flatten, s) => ActShape::Flat(s.size()),
        };
        shapes.push(shape);
    }
    Ok(shapes)
}

/// Stable layer names: `conv1`.., `dense1`.., `relu1`.., `flatten1`...
pub fn layer_names(specs: &[LayerSpec]) -> Vec<String> {
    let mut counts = [0usize; 4];
    specs
        .iter()
        .map(|s| {
            let (slot, stem) = match s.kind {
                LayerKind::Conv1d { .. } => (0, "conv"),
                LayerKind::Dense { .. } => (1, "dense"),
                LayerKind::Relu => (2, "relu"),
                LayerKind::Flatten => (3, "flatten"),
            };
            counts[slot] += 1;
            format!("{stem}{}", counts[slot])
        })
        .collect()
}
