use crate::error::{Error, Result};
use crate::nn::{check_params, infer_shapes, init_params, ActShape, Engine, LayerKind, LayerSpec, ParamSet, Tensor};
use crate::powerdata::{PowerSeries, DEFAULT_PERIOD};
use crate::windowing::{denormalize, normalize, to_f32, NormalizationParams, SlidingWindows, WindowSource};

/// Published window length in samples.
pub const DEFAULT_WINDOW: usize = 599;

/// Conv stack `(filters, kernel)` followed by hidden dense layers and a
/// single linear output. Every hidden layer is followed by a ReLU.
pub fn stack(convs: &[(usize, usize)], hidden: &[usize]) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for &(filters, kernel) in convs {
        specs.push(LayerSpec::conv1d(filters, kernel));
        specs.push(LayerSpec::relu());
    }
    specs.push(LayerSpec::flatten());
    for &units in hidden {
        specs.push(LayerSpec::dense(units));
        specs.push(LayerSpec::relu());
    }
    specs.push(LayerSpec::dense(1));
    specs
}

/// Five same-padded conv layers, a 1024-unit dense layer and one linear output.
pub fn default_architecture() -> Vec<LayerSpec> {
    stack(&[(30, 10), (30, 8), (40, 6), (50, 5), (50, 5)], &[1024])
}

/// A seq2point regressor: mains window in, appliance midpoint out.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2PointModel {
    specs: Vec<LayerSpec>,
    params: ParamSet<f32>,
    window_length: usize,
    period: i64,
    mains_norm: NormalizationParams,
    appliance_norm: NormalizationParams,
    appliance: String,
}

impl Seq2PointModel {
    /// Freshly initialized model; every layer trainable.
    pub fn build(
        appliance: impl Into<String>,
        window_length: usize,
        mains_norm: NormalizationParams,
        appliance_norm: NormalizationParams,
        architecture: &[LayerSpec],
        seed: u64,
    ) -> Result<Self> {
        let specs: Vec<LayerSpec> = architecture
            .iter()
            .map(|s| LayerSpec {
                trainable: true,
                ..*s
            })
            .collect();
        let params = init_params(&specs, window_length, seed)?;
        Self::from_parts(
            specs,
            params,
            window_length,
            DEFAULT_PERIOD,
            mains_norm,
            appliance_norm,
            appliance.into(),
        )
    }

    pub fn from_parts(
        specs: Vec<LayerSpec>,
        params: ParamSet<f32>,
        window_length: usize,
        period: i64,
        mains_norm: NormalizationParams,
        appliance_norm: NormalizationParams,
        appliance: String,
    ) -> Result<Self> {
        let shapes = infer_shapes(&specs, window_length)?;
        if shapes.last() != Some(&ActShape::Flat(1)) {
            return Err(Error::Spec(format!(
                "final layer must produce one output, got {:?}",
                shapes.last()
            )));
        }
        check_params(&specs, &params, window_length).map_err(|e| Error::Spec(e.to_string()))?;
        mains_norm.validate()?;
        appliance_norm.validate()?;
        if period <= 0 {
            return Err(Error::Spec(format!("period must be positive, got {period}")));
        }
        Ok(Self {
            specs,
            params,
            window_length,
            period,
            mains_norm,
            appliance_norm,
            appliance,
        })
    }

    pub fn with_period(mut self, period: i64) -> Self {
        self.period = period;
        self
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    pub(crate) fn set_params(&mut self, params: ParamSet<f32>) {
        debug_assert!(self.params.congruent(&params));
        self.params = params;
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn period(&self) -> i64 {
        self.period
    }

    pub fn mains_norm(&self) -> NormalizationParams {
        self.mains_norm
    }

    pub fn appliance_norm(&self) -> NormalizationParams {
        self.appliance_norm
    }

    pub fn appliance(&self) -> &str {
        &self.appliance
    }

    pub fn with_appliance(
        mut self,
        label: impl Into<String>,
        appliance_norm: NormalizationParams,
    ) -> Self {
        self.appliance = label.into();
        self.appliance_norm = appliance_norm;
        self
    }

    pub fn set_trainable(&mut self, layer: usize, trainable: bool) {
        self.specs[layer].trainable = trainable;
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Parameters of the conv layers only, in order.
    pub fn conv_params(&self) -> Vec<&crate::nn::LayerParams<f32>> {
        self.specs
            .iter()
            .zip(&self.params.layers)
            .filter(|(s, _)| s.is_conv())
            .filter_map(|(_, p)| p.as_ref())
            .collect()
    }

    pub fn engine(&self) -> Engine<f32> {
        Engine::new(&self.specs, self.window_length).expect("shape algebra checked at construction")
    }

    /// Network output (normalized appliance units) for every window.
    pub fn forward_windows<S: WindowSource + ?Sized>(&self, windows: &S) -> Result<Vec<f32>> {
        if windows.window_length() != self.window_length {
            return Err(Error::Shape(format!(
                "windows of length {} for a model built for {}",
                windows.window_length(),
                self.window_length
            )));
        }
        let mut engine = self.engine();
        Ok((0..windows.len())
            .map(|i| engine.forward(&self.specs, &self.params, windows.window(i))[0])
            .collect())
    }

    /// One appliance estimate (watts, clamped at zero) per mains sample.
    pub fn predict(&self, mains: &PowerSeries) -> Result<PowerSeries> {
        if mains.is_empty() {
            return Err(Error::Data("cannot predict on an empty mains series".into()));
        }
        let normalized = to_f32(&normalize(mains.values(), &self.mains_norm));
        let windows = SlidingWindows::new(&normalized, Vec::new(), self.window_length)?;
        let raw: Vec<f64> = self
            .forward_windows(&windows)?
            .into_iter()
            .map(f64::from)
            .collect();
        let watts = denormalize(&raw, &self.appliance_norm, true);
        PowerSeries::new(
            mains.timestamps().to_vec(),
            watts,
            mains.period(),
            self.appliance.clone(),
        )
    }

    /// Layer boundary holding the post-activation output of the last conv.
    fn feature_boundary(&self) -> Result<usize> {
        let last_conv = self
            .specs
            .iter()
            .rposition(LayerSpec::is_conv)
            .ok_or_else(|| Error::Spec("model has no conv layers".into()))?;
        let mut boundary = last_conv + 1;
        if matches!(self.specs.get(boundary).map(|s| s.kind), Some(LayerKind::Relu)) {
            boundary += 1;
        }
        Ok(boundary)
    }

    /// Last conv layer activations, `[n_windows, L, channels]`.
    pub fn extract_features<S: WindowSource + ?Sized>(&self, windows: &S) -> Result<Tensor<f32>> {
        let boundary = self.feature_boundary()?;
        if windows.window_length() != self.window_length {
            return Err(Error::Shape("window length does not match the model".into()));
        }
        let mut engine = self.engine();
        let ActShape::Seq { len, channels } = engine.shapes()[boundary] else {
            unreachable!("conv output is a sequence")
        };
        let mut data = Vec::with_capacity(windows.len() * len * channels);
        for i in 0..windows.len() {
            engine.forward(&self.specs, &self.params, windows.window(i));
            data.extend_from_slice(engine.activation(boundary));
        }
        Tensor::new(vec![windows.len(), len, channels], data)
    }

    /// Runs the layers after the feature boundary on extracted features.
    pub fn head_forward(&self, features: &Tensor<f32>) -> Result<Vec<f32>> {
        let boundary = self.feature_boundary()?;
        let mut engine = self.engine();
        let width = engine.shapes()[boundary].size();
        if features.shape().len() != 3 || features.shape()[1] * features.shape()[2] != width {
            return Err(Error::Shape(format!(
                "features {:?} do not match width {width}",
                features.shape()
            )));
        }
        Ok(features
            .data()
            .chunks_exact(width)
            .map(|f| engine.forward_from(&self.specs, &self.params, boundary, f)[0])
            .collect())
    }
}
