//! Mini-batch Adam training with early stopping and best-epoch restore.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Seq2PointModel;
use crate::error::{Error, Result};
use crate::nn::{
    accumulate_gradients, adam_step, AdamConfig, AdamState, Engine, LayerSpec, ParamSet,
};
use crate::windowing::WindowSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Early stopping never fires before this many epochs have run.
    pub min_epochs_before_stop: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            batch_size: 1000,
            min_epochs_before_stop: 5,
            patience: 5,
            seed: 0,
            shuffle: true,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("batch size and patience must be >= 1".into()));
        }
        if self.min_epochs_before_stop > self.max_epochs {
            return Err(Error::Config(format!(
                "min epochs {} exceeds max epochs {}",
                self.min_epochs_before_stop, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Per-epoch losses; epochs are numbered from 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Last epoch that ran (0 if none did).
    pub stopped_epoch: usize,
    /// Epoch whose parameters were restored. `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    /// Validation loss of the parameters before any update.
    pub initial_val_loss: Option<f64>,
    /// Wall-clock seconds spent in each training epoch (excludes validation).
    pub epoch_seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.val_loss[e - 1])
    }

    /// `epoch,train_loss,val_loss` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,val_loss")?;
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            writeln!(out, "{},{t},{v}", i + 1)?;
        }
        Ok(())
    }
}

/// What the early-stopping loop drives.
pub trait EpochRunner {
    type Snapshot;

    /// Runs one epoch of updates and returns its training loss.
    fn train_epoch(&mut self, epoch: usize) -> Result<f64>;
    fn validate(&mut self) -> Result<f64>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: Self::Snapshot);
}

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    use std::time::Instant;

    pub fn now() -> Option<Instant> {
        Some(Instant::now())
    }

    pub fn seconds_since(start: Option<Instant>) -> f64 {
        start.map_or(0.0, |s| s.elapsed().as_secs_f64())
    }
}

// Browsers have no `Instant`; epoch times read as zero there.
#[cfg(target_arch = "wasm32")]
mod clock {
    pub fn now() -> Option<()> {
        None
    }

    pub fn seconds_since(_: Option<()>) -> f64 {
        0.0
    }
}

/// Runs epochs until validation loss fails to improve for `patience`
/// consecutive epochs (and at least `min_epochs_before_stop` have run) or
/// `max_epochs` is reached, then restores the best epoch. Ties keep the
/// earliest epoch.
pub fn fit<R: EpochRunner>(runner: &mut R, config: &TrainConfig) -> Result<TrainHistory> {
    config.validate()?;
    let mut history = TrainHistory::default();
    let mut best: Option<(usize, f64, R::Snapshot)> = None;
    for epoch in 1..=config.max_epochs {
        let started = clock::now();
        let train_loss = runner.train_epoch(epoch)?;
        history.epoch_seconds.push(clock::seconds_since(started));
        let val_loss = runner.validate()?;
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.stopped_epoch = epoch;

        let improved = match &best {
            None => !val_loss.is_nan(),
            Some((_, best_loss, _)) => val_loss < *best_loss,
        };
        if improved {
            best = Some((epoch, val_loss, runner.snapshot()));
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= config.patience && epoch >= config.min_epochs_before_stop {
            break;
        }
    }
    if let Some((epoch, _, snapshot)) = best {
        history.best_epoch = Some(epoch);
        runner.restore(snapshot);
    }
    Ok(history)
}

/// Mean squared error of the model over every window, normalized units.
pub fn evaluate_loss<S: WindowSource + ?Sized>(model: &Seq2PointModel, windows: &S) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Data("empty validation source".into()));
    }
    let out = model.forward_windows(windows)?;
    let sum: f64 = out
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let e = f64::from(y) - f64::from(windows.target(i));
            e * e
        })
        .sum();
    Ok(sum / windows.len() as f64)
}

struct ModelRunner<'a, A: ?Sized, B: ?Sized> {
    model: &'a mut Seq2PointModel,
    specs: Vec<LayerSpec>,
    train: &'a A,
    val: &'a B,
    engine: Engine<f32>,
    adam: AdamState<f32>,
    grads: ParamSet<f32>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    config: TrainConfig,
}

impl<A: WindowSource + ?Sized, B: WindowSource + ?Sized> EpochRunner for ModelRunner<'_, A, B> {
    type Snapshot = ParamSet<f32>;

    fn train_epoch(&mut self, _epoch: usize) -> Result<f64> {
        if self.config.shuffle {
            self.order.shuffle(&mut self.rng);
        }
        let mut total = 0.0;
        let mut windows: Vec<&[f32]> = Vec::with_capacity(self.config.batch_size);
        let mut targets: Vec<f32> = Vec::with_capacity(self.config.batch_size);
        for chunk in self.order.chunks(self.config.batch_size) {
            windows.clear();
            targets.clear();
            for &i in chunk {
                windows.push(self.train.window(i));
                targets.push(self.train.target(i));
            }
            let loss = accumulate_gradients(
                &mut self.engine,
                &self.specs,
                self.model.params(),
                &windows,
                &targets,
                &mut self.grads,
            )?;
            adam_step(self.model.params_mut(), &self.grads, &mut self.adam, &self.specs)?;
            total += f64::from(loss) * chunk.len() as f64;
        }
        Ok(total / self.order.len() as f64)
    }

    fn validate(&mut self) -> Result<f64> {
        evaluate_loss(self.model, self.val)
    }

    fn snapshot(&self) -> ParamSet<f32> {
        self.model.params().clone()
    }

    fn restore(&mut self, snapshot: ParamSet<f32>) {
        self.model.set_params(snapshot);
    }
}

/// Trains every trainable layer of `model` on `train`, early-stopping on
/// `val`, and returns the best-epoch model.
pub fn train<A, B>(
    mut model: Seq2PointModel,
    train: &A,
    val: &B,
    config: &TrainConfig,
) -> Result<(Seq2PointModel, TrainHistory)>
where
    A: WindowSource + ?Sized,
    B: WindowSource + ?Sized,
{
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation sources must be non-empty".into()));
    }
    for (name, w) in [("training", train.window_length()), ("validation", val.window_length())] {
        if w != model.window_length() {
            return Err(Error::Shape(format!(
                "{name} windows have length {w}, model expects {}",
                model.window_length()
            )));
        }
    }
    let initial_val_loss = evaluate_loss(&model, val)?;
    let mut runner = ModelRunner {
        engine: model.engine(),
        adam: AdamState::new(model.params(), config.adam),
        grads: model.params().zeros_like(),
        order: (0..train.len()).collect(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        config: *config,
        specs: model.specs().to_vec(),
        model: &mut model,
        train,
        val,
    };
    let mut history = fit(&mut runner, config)?;
    history.initial_val_loss = Some(initial_val_loss);
    Ok((model, history))
}
