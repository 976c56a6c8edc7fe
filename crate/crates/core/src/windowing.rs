//! Fixed-constant normalization and midpoint-aligned sliding windows.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};
use crate::powerdata::AlignedPair;

/// Mean and standard deviation (watts) used to standardize one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: f64,
    pub std: f64,
}

impl NormalizationParams {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        let p = Self { mean, std };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0) || !self.std.is_finite() || !self.mean.is_finite() {
            return Err(Error::Config(format!(
                "invalid normalization constants mean={} std={}",
                self.mean, self.std
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn normalize(&self, watts: f64) -> f64 {
        (watts - self.mean) / self.std
    }

    #[inline]
    pub fn denormalize(&self, value: f64) -> f64 {
        value * self.std + self.mean
    }
}

/// Channel role -> constants. Defaults reproduce the published table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizationTable(BTreeMap<String, NormalizationParams>);

pub const AGGREGATE: &str = "aggregate";

impl Default for NormalizationTable {
    fn default() -> Self {
        let rows = [
            (AGGREGATE, 522.0, 814.0),
            ("kettle", 700.0, 1000.0),
            ("microwave", 500.0, 800.0),
            ("fridge", 200.0, 400.0),
            ("dishwasher", 700.0, 1000.0),
            ("washing_machine", 400.0, 700.0),
        ];
        Self(
            rows.into_iter()
                .map(|(k, mean, std)| (k.to_string(), NormalizationParams { mean, std }))
                .collect(),
        )
    }
}

impl NormalizationTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("normalization config: {e}")))?;
        for params in table.0.values() {
            params.validate()?;
        }
        Ok(table)
    }

    /// Reads a config file; entries override the defaults key by key.
    pub fn load(path: &Path) -> Result<Self> {
        let text = Error::read_config(path)?;
        let mut table = Self::default();
        table.0.extend(Self::from_toml(&text)?.0);
        Ok(table)
    }

    pub fn get(&self, role: &str) -> Result<NormalizationParams> {
        self.0
            .get(role)
            .copied()
            .ok_or_else(|| Error::Config(format!("no normalization constants for `{role}`")))
    }

    pub fn aggregate(&self) -> Result<NormalizationParams> {
        self.get(AGGREGATE)
    }

    pub fn insert(&mut self, role: impl Into<String>, params: NormalizationParams) {
        self.0.insert(role.into(), params);
    }
}

/// `(x - mean) / std` elementwise.
pub fn normalize(values: &[f64], params: &NormalizationParams) -> Vec<f64> {
    values.iter().map(|&x| params.normalize(x)).collect()
}

/// Inverse of [`normalize`]; `clamp` replaces negative watts with zero.
pub fn denormalize(values: &[f64], params: &NormalizationParams, clamp: bool) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let w = params.denormalize(v);
            if clamp && w < 0.0 {
                0.0
            } else {
                w
            }
        })
        .collect()
}

/// Zero-pads the sequence by `w / 2` on both sides.
pub fn pad_sequence<T: Copy + Default>(seq: &[T], w: usize) -> Vec<T> {
    let pad = w / 2;
    let mut padded = vec![T::default(); seq.len() + 2 * pad];
    padded[pad..pad + seq.len()].copy_from_slice(seq);
    padded
}

/// One window per sample, stride 1: row `t` holds the padded sequence
/// `[t, t + w)`, whose element `w / 2` is original sample `t`.
pub fn pad_and_window<T: Scalar>(seq: &[T], w: usize) -> Result<Tensor<T>> {
    if seq.is_empty() || w == 0 {
        return Err(Error::Shape(format!(
            "windowing needs T >= 1 and W >= 1, got T={} W={w}",
            seq.len()
        )));
    }
    let padded = pad_sequence(seq, w);
    let mut data = Vec::with_capacity(seq.len() * w);
    for t in 0..seq.len() {
        data.extend_from_slice(&padded[t..t + w]);
    }
    Tensor::new(vec![seq.len(), w], data)
}

/// Random access to `(window, midpoint target)` training examples.
pub trait WindowSource {
    fn len(&self) -> usize;
    fn window_length(&self) -> usize;
    fn window(&self, index: usize) -> &[f32];
    fn target(&self, index: usize) -> f32;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Materialized windows: `inputs` is `[n, W]`, `targets` is `[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub inputs: Tensor<f32>,
    pub targets: Vec<f32>,
}

impl WindowBatch {
    pub fn new(inputs: Tensor<f32>, targets: Vec<f32>) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.shape()[0] != targets.len() {
            return Err(Error::Shape(format!(
                "window batch inputs {:?} do not match {} targets",
                inputs.shape(),
                targets.len()
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data("non-finite target".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_source<S: WindowSource + ?Sized>(source: &S) -> Result<Self> {
        let w = source.window_length();
        let mut data = Vec::with_capacity(source.len() * w);
        let mut targets = Vec::with_capacity(source.len());
        for i in 0..source.len() {
            data.extend_from_slice(source.window(i));
            targets.push(source.target(i));
        }
        Self::new(Tensor::new(vec![source.len(), w], data)?, targets)
    }
}

impl WindowSource for WindowBatch {
    fn len(&self) -> usize {
        self.targets.len()
    }

    fn window_length(&self) -> usize {
        self.inputs.shape()[1]
    }

    fn window(&self, index: usize) -> &[f32] {
        let w = self.window_length();
        &self.inputs.data()[index * w..(index + 1) * w]
    }

    fn target(&self, index: usize) -> f32 {
        self.targets[index]
    }
}

/// Windows served as slices of one padded sequence, without materializing
/// the `[T, W]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindows {
    padded: Vec<f32>,
    targets: Vec<f32>,
    window_length: usize,
}

impl SlidingWindows {
    /// `targets` may be empty for inference-only use.
    pub fn new(normalized_mains: &[f32], targets: Vec<f32>, window_length: usize) -> Result<Self> {
        if window_length == 0 {
            return Err(Error::Shape("window length must be >= 1".into()));
        }
        if !targets.is_empty() && targets.len() != normalized_mains.len() {
            return Err(Error::Shape(format!(
                "{} mains samples but {} targets",
                normalized_mains.len(),
                targets.len()
            )));
        }
        if normalized_mains.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite normalized value".into()));
        }
        Ok(Self {
            padded: pad_sequence(normalized_mains, window_length),
            targets,
            window_length,
        })
    }

    pub fn from_pair(
        pair: &AlignedPair,
        window_length: usize,
        mains_params: &NormalizationParams,
        appliance_params: &NormalizationParams,
    ) -> Result<Self> {
        let mains = to_f32(&normalize(pair.mains().values(), mains_params));
        let targets = to_f32(&normalize(pair.appliance().values(), appliance_params));
        Self::new(&mains, targets, window_length)
    }

    pub fn samples(&self) -> usize {
        self.padded.len() - 2 * (self.window_length / 2)
    }
}

impl WindowSource for SlidingWindows {
    fn len(&self) -> usize {
        self.samples()
    }

    fn window_length(&self) -> usize {
        self.window_length
    }

    fn window(&self, index: usize) -> &[f32] {
        &self.padded[index..index + self.window_length]
    }

    fn target(&self, index: usize) -> f32 {
        self.targets[index]
    }
}

/// Several window sources served as one index space, in order.
#[derive(Debug, Clone, Default)]
pub struct WindowSet<S> {
    parts: Vec<S>,
    offsets: Vec<usize>,
    total: usize,
}

impl<S: WindowSource> WindowSet<S> {
    pub fn new(parts: Vec<S>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(parts.len());
        let mut total = 0;
        let w = parts.first().map(|p| p.window_length());
        for part in &parts {
            if Some(part.window_length()) != w {
                return Err(Error::Shape("window sets need one window length".into()));
            }
            offsets.push(total);
            total += part.len();
        }
        Ok(Self {
            parts,
            offsets,
            total,
        })
    }

    pub fn parts(&self) -> &[S] {
        &self.parts
    }

    fn locate(&self, index: usize) -> (usize, usize) {
        let part = self.offsets.partition_point(|&o| o <= index) - 1;
        (part, index - self.offsets[part])
    }
}

impl<S: WindowSource> WindowSource for WindowSet<S> {
    fn len(&self) -> usize {
        self.total
    }

    fn window_length(&self) -> usize {
        self.parts.first().map_or(0, |p| p.window_length())
    }

    fn window(&self, index: usize) -> &[f32] {
        let (p, i) = self.locate(index);
        self.parts[p].window(i)
    }

    fn target(&self, index: usize) -> f32 {
        let (p, i) = self.locate(index);
        self.parts[p].target(i)
    }
}

/// Sliding windows for every aligned segment, chained in order.
pub fn windows_for_pairs(
    pairs: &[AlignedPair],
    window_length: usize,
    mains_params: &NormalizationParams,
    appliance_params: &NormalizationParams,
) -> Result<WindowSet<SlidingWindows>> {
    let parts = pairs
        .iter()
        .map(|p| SlidingWindows::from_pair(p, window_length, mains_params, appliance_params))
        .collect::<Result<Vec<_>>>()?;
    WindowSet::new(parts)
}

/// Every `(window, midpoint)` pair of an aligned segment, materialized.
pub fn make_training_pairs(
    pair: &AlignedPair,
    window_length: usize,
    mains_params: &NormalizationParams,
    appliance_params: &NormalizationParams,
) -> Result<WindowBatch> {
    mains_params.validate()?;
    appliance_params.validate()?;
    let mains = to_f32(&normalize(pair.mains().values(), mains_params));
    let targets = to_f32(&normalize(pair.appliance().values(), appliance_params));
    WindowBatch::new(pad_and_window(&mains, window_length)?, targets)
}

pub(crate) fn to_f32(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}
