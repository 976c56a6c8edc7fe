//! WebAssembly bindings for the browser demo: synthesize a household, train
//! a small seq2point model on it, and disaggregate the held-out tail.

use nilm::metrics::{mae, nde};
use nilm::powerdata::AlignedPair;
use nilm::seq2point::{stack, synthesize_household, train, ApplianceProfile, Seq2PointModel, SynthConfig, TrainConfig};
use nilm::windowing::{NormalizationParams, SlidingWindows};
use wasm_bindgen::prelude::*;

const WINDOW: usize = 49;
const TARGET: &str = "kettle";

/// Everything the page keeps between button presses.
pub struct Session {
    pair: AlignedPair,
    seed: u64,
    model: Option<Seq2PointModel>,
    losses: Vec<f64>,
}

fn mains_norm() -> NormalizationParams {
    NormalizationParams::new(500.0, 500.0).expect("valid constants")
}

fn target_norm() -> NormalizationParams {
    NormalizationParams::new(150.0, 350.0).expect("valid constants")
}

impl Session {
    pub fn new(seed: u64, length: usize, kettle_watts: f64) -> nilm::Result<Self> {
        let config = SynthConfig {
            appliances: vec![
                ApplianceProfile::two_state(TARGET, kettle_watts, 30.0, 0.15),
                ApplianceProfile::two_state("fridge", 150.0, 100.0, 0.4),
                ApplianceProfile::multi_stage("washer", 500.0, 300.0, 0.1, &[1.0, 0.2, 0.8]),
            ],
            noise_std: 30.0,
            length,
            seed,
            period: 8,
            start: 0,
        };
        let house = synthesize_household(&config)?;
        let target = house.appliance(TARGET).expect("configured above").clone();
        Ok(Self {
            pair: AlignedPair::new(house.mains, target)?,
            seed,
            model: None,
            losses: Vec::new(),
        })
    }

    /// Chronological 70/15/15 split points.
    fn bounds(&self) -> (usize, usize) {
        let n = self.pair.len();
        (n * 70 / 100, n * 85 / 100)
    }

    fn windows(&self, from: usize, to: usize) -> nilm::Result<SlidingWindows> {
        SlidingWindows::from_pair(&self.pair.slice(from, to), WINDOW, &mains_norm(), &target_norm())
    }

    pub fn mains(&self) -> &[f64] {
        self.pair.mains().values()
    }

    pub fn truth(&self) -> &[f64] {
        self.pair.appliance().values()
    }

    pub fn test_start(&self) -> usize {
        self.bounds().1
    }

    /// Runs `epochs` more epochs (a fresh model on the first call) and
    /// returns the validation loss of every epoch so far.
    pub fn train(&mut self, epochs: usize) -> nilm::Result<&[f64]> {
        let (a, b) = self.bounds();
        let model = match self.model.take() {
            Some(m) => m,
            None => Seq2PointModel::build(
                TARGET,
                WINDOW,
                mains_norm(),
                target_norm(),
                &stack(&[(8, 9), (8, 7)], &[32]),
                self.seed,
            )?,
        };
        let config = TrainConfig {
            max_epochs: epochs.max(1),
            batch_size: 100,
            min_epochs_before_stop: epochs.max(1),
            patience: epochs.max(1),
            seed: self.seed + self.losses.len() as u64,
            ..TrainConfig::default()
        };
        let (model, history) = train(model, &self.windows(0, a)?, &self.windows(a, b)?, &config)?;
        self.model = Some(model);
        self.losses.extend(history.val_loss);
        Ok(&self.losses)
    }

    /// Predicted appliance power over the test tail, with `[MAE, NDE]`.
    pub fn disaggregate(&self) -> nilm::Result<(Vec<f64>, [f64; 2])> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| nilm::Error::Config("train the model first".into()))?;
        let test = self.pair.slice(self.test_start(), self.pair.len());
        let predicted = model.predict(test.mains())?.values().to_vec();
        let truth = test.appliance().values();
        let scores = [mae(&predicted, truth)?, nde(&predicted, truth).unwrap_or(f64::NAN)];
        Ok((predicted, scores))
    }
}

fn js(e: nilm::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo(Session);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, length: u32, kettle_watts: f64) -> Result<Demo, JsError> {
        Session::new(seed.into(), length as usize, kettle_watts).map(Demo).map_err(js)
    }

    pub fn mains(&self) -> Vec<f64> {
        self.0.mains().to_vec()
    }

    pub fn truth(&self) -> Vec<f64> {
        self.0.truth().to_vec()
    }

    #[wasm_bindgen(js_name = testStart)]
    pub fn test_start(&self) -> u32 {
        self.0.test_start() as u32
    }

    pub fn train(&mut self, epochs: u32) -> Result<Vec<f64>, JsError> {
        self.0.train(epochs as usize).map(<[f64]>::to_vec).map_err(js)
    }

    /// Prediction over the test tail followed by MAE and NDE.
    pub fn disaggregate(&self) -> Result<Vec<f64>, JsError> {
        let (mut out, scores) = self.0.disaggregate().map_err(js)?;
        out.extend(scores);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn household_is_deterministic() {
        let a = Session::new(3, 2_000, 1500.0).unwrap();
        let b = Session::new(3, 2_000, 1500.0).unwrap();
        assert_eq!(a.mains(), b.mains());
        assert_eq!(a.mains().len(), 2_000);
        assert!(a.truth().contains(&1500.0));
        assert_eq!(a.test_start(), 1_700);
    }

    #[test]
    fn disaggregate_needs_a_model() {
        let s = Session::new(1, 1_000, 1000.0).unwrap();
        assert!(matches!(s.disaggregate(), Err(nilm::Error::Config(_))));
    }

    #[test]
    fn training_accumulates_losses_and_predicts_the_tail() {
        let mut s = Session::new(2, 3_000, 1000.0).unwrap();
        assert_eq!(s.train(2).unwrap().len(), 2);
        assert_eq!(s.train(1).unwrap().len(), 3);
        let (pred, [mae, _]) = s.disaggregate().unwrap();
        assert_eq!(pred.len(), 3_000 - s.test_start());
        assert!(mae.is_finite() && mae >= 0.0);
    }
}
