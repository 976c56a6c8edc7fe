use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_params, layer_names};
use crate::powerdata::{AlignedPair, PowerSeries};
use crate::seq2point::{train, Seq2PointModel, TrainConfig, TrainHistory};
use crate::windowing::{windows_for_pairs, NormalizationParams, WindowSource};

pub const DEFAULT_SUBSET_FRACTION: f64 = 0.1;

/// Which layers to freeze.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    #[default]
    None,
    ConvStack,
    All,
    Named(Vec<String>),
}

impl FromStr for Selector {
    type Err = Error;

    /// `none`, `conv-stack`, `all`, or a comma-separated list of layer names
    /// such as `conv1,conv2`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "" | "none" => Selector::None,
            "conv" | "conv-stack" => Selector::ConvStack,
            "all" => Selector::All,
            list => Selector::Named(list.split(',').map(|n| n.trim().to_string()).collect()),
        })
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::None => f.write_str("none"),
            Selector::ConvStack => f.write_str("conv-stack"),
            Selector::All => f.write_str("all"),
            Selector::Named(names) => f.write_str(&names.join(",")),
        }
    }
}

impl Selector {
    /// Layer indices selected in `model`.
    pub fn resolve(&self, model: &Seq2PointModel) -> Result<Vec<usize>> {
        let specs = model.specs();
        Ok(match self {
            Selector::None => Vec::new(),
            Selector::ConvStack => (0..specs.len()).filter(|&i| specs[i].is_conv()).collect(),
            Selector::All => (0..specs.len()).collect(),
            Selector::Named(wanted) => {
                let names = layer_names(specs);
                let mut out = Vec::with_capacity(wanted.len());
                for w in wanted {
                    let i = names
                        .iter()
                        .position(|n| n == w)
                        .ok_or_else(|| Error::Selector(w.clone()))?;
                    out.push(i);
                }
                out.sort_unstable();
                out.dedup();
                out
            }
        })
    }
}

/// Marks the selected layers as not trainable. Other layers keep their flags.
pub fn freeze(mut model: Seq2PointModel, selector: &Selector) -> Result<Seq2PointModel> {
    for i in selector.resolve(&model)? {
        model.set_trainable(i, false);
    }
    Ok(model)
}

pub fn unfreeze_all(mut model: Seq2PointModel) -> Seq2PointModel {
    for i in 0..model.specs().len() {
        model.set_trainable(i, true);
    }
    model
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    Atl,
    CtlDirect,
    CtlFinetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub mode: TransferMode,
    pub freeze: Selector,
    pub subset_fraction: f64,
    pub config: TrainConfig,
    /// Lets the conv stack train too. Off by default.
    #[serde(default)]
    pub tune_conv: bool,
}

impl TransferPlan {
    pub fn atl(config: TrainConfig) -> Self {
        Self {
            mode: TransferMode::Atl,
            freeze: Selector::ConvStack,
            subset_fraction: 1.0,
            config,
            tune_conv: false,
        }
    }

    pub fn ctl_direct() -> Self {
        Self {
            mode: TransferMode::CtlDirect,
            freeze: Selector::All,
            subset_fraction: 1.0,
            config: TrainConfig::default(),
            tune_conv: false,
        }
    }

    pub fn ctl_finetune(subset_fraction: f64, config: TrainConfig) -> Self {
        Self {
            mode: TransferMode::CtlFinetune,
            freeze: Selector::ConvStack,
            subset_fraction,
            config,
            tune_conv: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::Plan(format!(
                "subset fraction must be in (0, 1], got {}",
                self.subset_fraction
            )));
        }
        if self.mode != TransferMode::CtlDirect {
            self.config.validate()?;
        }
        Ok(())
    }

    fn expect(&self, mode: TransferMode) -> Result<()> {
        self.validate()?;
        if self.mode != mode {
            return Err(Error::Plan(format!("plan is for {:?}, not {mode:?}", self.mode)));
        }
        Ok(())
    }

    /// Applies the plan's trainability mask: everything trainable, then the
    /// selector frozen. Unless `tune_conv` is set, every conv layer must end
    /// up frozen.
    fn mask(&self, model: Seq2PointModel) -> Result<Seq2PointModel> {
        let model = freeze(unfreeze_all(model), &self.freeze)?;
        if !self.tune_conv && model.specs().iter().any(|s| s.is_conv() && s.trainable) {
            return Err(Error::Plan(format!(
                "selector `{}` leaves conv layers trainable",
                self.freeze
            )));
        }
        Ok(model)
    }
}

/// Reuses the source conv stack for another appliance: conv layers are
/// copied and frozen, every other parameterized layer is re-initialized from
/// `plan.config.seed` and trained on the target windows.
pub fn atl_transfer<A, B>(
    source: &Seq2PointModel,
    appliance: &str,
    appliance_norm: NormalizationParams,
    train_windows: &A,
    val_windows: &B,
    plan: &TransferPlan,
) -> Result<(Seq2PointModel, TrainHistory)>
where
    A: WindowSource + ?Sized,
    B: WindowSource + ?Sized,
{
    plan.expect(TransferMode::Atl)?;
    appliance_norm.validate()?;
    for w in [train_windows.window_length(), val_windows.window_length()] {
        if w != source.window_length() {
            return Err(Error::Plan(format!(
                "target windows have length {w}, source model uses {}",
                source.window_length()
            )));
        }
    }
    let mut model = source.clone().with_appliance(appliance, appliance_norm);
    let fresh = init_params::<f32>(model.specs(), model.window_length(), plan.config.seed)?;
    let mut params = model.params().clone();
    for (i, spec) in model.specs().iter().enumerate() {
        if !spec.is_conv() {
            params.layers[i].clone_from(&fresh.layers[i]);
        }
    }
    model.set_params(params);
    let model = plan.mask(model)?;
    train(model, train_windows, val_windows, &plan.config)
}

/// Direct application of the source model to another domain.
pub fn ctl_apply(source: &Seq2PointModel, mains: &PowerSeries) -> Result<PowerSeries> {
    if mains.period() != source.period() {
        return Err(Error::Plan(format!(
            "target mains sampled every {}s, source model expects {}s",
            mains.period(),
            source.period()
        )));
    }
    source.predict(mains)
}

/// The chronological prefix holding `floor(fraction * total)` samples.
pub fn leading_fraction(pairs: &[AlignedPair], fraction: f64) -> Result<Vec<AlignedPair>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Plan(format!("subset fraction must be in (0, 1], got {fraction}")));
    }
    let total: usize = pairs.iter().map(AlignedPair::len).sum();
    let mut remaining = (fraction * total as f64).floor() as usize;
    if remaining == 0 {
        return Err(Error::Data(format!(
            "a {fraction} fraction of {total} samples is empty"
        )));
    }
    let mut out = Vec::new();
    for pair in pairs {
        if remaining == 0 {
            break;
        }
        let take = pair.len().min(remaining);
        out.push(pair.slice(0, take));
        remaining -= take;
    }
    Ok(out)
}

/// Fine-tunes the source model on the leading `plan.subset_fraction` of the
/// target training pairs. The dense head starts from the source weights.
pub fn ctl_finetune(
    source: &Seq2PointModel,
    train_pairs: &[AlignedPair],
    val_pairs: &[AlignedPair],
    plan: &TransferPlan,
) -> Result<(Seq2PointModel, TrainHistory)> {
    plan.expect(TransferMode::CtlFinetune)?;
    if let Some(p) = train_pairs.iter().chain(val_pairs).find(|p| p.period() != source.period()) {
        return Err(Error::Plan(format!(
            "target data sampled every {}s, source model expects {}s",
            p.period(),
            source.period()
        )));
    }
    let subset = leading_fraction(train_pairs, plan.subset_fraction)?;
    if val_pairs.iter().all(AlignedPair::is_empty) {
        return Err(Error::Data("fine-tuning needs validation data".into()));
    }
    let (w, mn, an) = (source.window_length(), source.mains_norm(), source.appliance_norm());
    let train_windows = windows_for_pairs(&subset, w, &mn, &an)?;
    let val_windows = windows_for_pairs(val_pairs, w, &mn, &an)?;
    let model = plan.mask(source.clone())?;
    train(model, &train_windows, &val_windows, &plan.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2point::{default_architecture, stack, DEFAULT_WINDOW};
    use crate::windowing::SlidingWindows;

    fn norm() -> NormalizationParams {
        NormalizationParams::new(100.0, 200.0).unwrap()
    }

    fn small() -> Seq2PointModel {
        Seq2PointModel::build("a", 9, norm(), norm(), &stack(&[(3, 3), (2, 3)], &[4]), 1).unwrap()
    }

    fn pair(n: usize, start: i64) -> AlignedPair {
        let mains: Vec<f64> = (0..n).map(|i| (i % 17) as f64 * 20.0).collect();
        let appl: Vec<f64> = mains.iter().map(|m| m / 2.0).collect();
        AlignedPair::new(
            PowerSeries::regular(start, 8, mains, "mains").unwrap(),
            PowerSeries::regular(start, 8, appl, "a").unwrap(),
        )
        .unwrap()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            max_epochs: epochs,
            batch_size: 16,
            min_epochs_before_stop: 0,
            patience: epochs.max(1),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn empty_selector_is_identity() {
        let m = small();
        assert_eq!(freeze(m.clone(), &Selector::None).unwrap(), m);
        assert!(m.specs().iter().all(|s| s.trainable));
    }

    #[test]
    fn conv_stack_on_default_architecture() {
        let m = Seq2PointModel::build("k", DEFAULT_WINDOW, norm(), norm(), &default_architecture(), 0).unwrap();
        let m = freeze(m, &Selector::ConvStack).unwrap();
        let frozen = m.specs().iter().filter(|s| s.has_params() && !s.trainable).count();
        let live = m.specs().iter().filter(|s| s.has_params() && s.trainable).count();
        assert_eq!((frozen, live), (5, 2));
    }

    #[test]
    fn named_selector() {
        let m = freeze(small(), &"conv2, dense1".parse().unwrap()).unwrap();
        let frozen: Vec<usize> = (0..m.specs().len()).filter(|&i| !m.specs()[i].trainable).collect();
        assert_eq!(frozen, vec![2, 5]);
        assert!(matches!(
            freeze(small(), &Selector::Named(vec!["conv9".into()])),
            Err(Error::Selector(n)) if n == "conv9"
        ));
    }

    #[test]
    fn frozen_model_does_not_move() {
        let m = freeze(small(), &Selector::All).unwrap();
        let p = pair(200, 0);
        let w = SlidingWindows::from_pair(&p, 9, &norm(), &norm()).unwrap();
        let (out, h) = train(m.clone(), &w, &w, &quick(10)).unwrap();
        assert_eq!(h.stopped_epoch, 10);
        assert_eq!(out.params(), m.params());
    }

    #[test]
    fn atl_keeps_conv_and_resets_head() {
        let src = small();
        let p = pair(300, 0);
        let w = SlidingWindows::from_pair(&p, 9, &norm(), &norm()).unwrap();
        let (out, _) = atl_transfer(&src, "b", norm(), &w, &w, &TransferPlan::atl(quick(2))).unwrap();
        assert_eq!(out.conv_params(), src.conv_params());
        assert_eq!(out.appliance(), "b");
        assert!(out.specs().iter().filter(|s| s.is_conv()).all(|s| !s.trainable));
        assert!(out.specs().iter().filter(|s| s.is_dense()).all(|s| s.trainable));
        assert_ne!(out.params().layers[5], src.params().layers[5]);
    }

    #[test]
    fn atl_window_mismatch_is_plan_error() {
        let p = pair(50, 0);
        let w = SlidingWindows::from_pair(&p, 7, &norm(), &norm()).unwrap();
        let err = atl_transfer(&small(), "b", norm(), &w, &w, &TransferPlan::atl(quick(1))).unwrap_err();
        assert!(matches!(err, Error::Plan(_)));
    }

    #[test]
    fn plan_validation() {
        assert!(TransferPlan::ctl_finetune(0.0, quick(1)).validate().is_err());
        assert!(TransferPlan::ctl_finetune(1.5, quick(1)).validate().is_err());
        assert!(TransferPlan::ctl_finetune(1.0, quick(1)).validate().is_ok());
        let mut plan = TransferPlan::atl(quick(1));
        plan.freeze = Selector::None;
        let p = pair(50, 0);
        let w = SlidingWindows::from_pair(&p, 9, &norm(), &norm()).unwrap();
        assert!(matches!(atl_transfer(&small(), "b", norm(), &w, &w, &plan), Err(Error::Plan(_))));
        plan.tune_conv = true;
        let (out, _) = atl_transfer(&small(), "b", norm(), &w, &w, &plan).unwrap();
        assert!(out.specs().iter().all(|s| s.trainable));
    }

    #[test]
    fn ctl_apply_is_predict_and_checks_period() {
        let src = small();
        let mains = pair(40, 0).mains().clone();
        assert_eq!(ctl_apply(&src, &mains).unwrap(), src.predict(&mains).unwrap());
        let coarse = PowerSeries::regular(0, 16, vec![1.0; 10], "mains").unwrap();
        assert!(matches!(ctl_apply(&src, &coarse), Err(Error::Plan(_))));
    }

    #[test]
    fn leading_fraction_is_a_chronological_prefix() {
        let pairs = vec![pair(30, 0), pair(50, 10_000)];
        let sub = leading_fraction(&pairs, 0.5).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!((sub[0].len(), sub[1].len()), (30, 10));
        assert_eq!(sub[1].mains().timestamps()[0], 10_000);
        assert!(matches!(leading_fraction(&pairs, 0.001), Err(Error::Data(_))));
    }

    #[test]
    fn finetune_with_zero_rate_returns_source() {
        let src = small();
        let pairs = vec![pair(160, 0)];
        let mut config = quick(1);
        config.adam.learning_rate = 0.0;
        config.batch_size = 16;
        let plan = TransferPlan::ctl_finetune(0.1, config);
        let (out, _) = ctl_finetune(&src, &pairs, &pairs, &plan).unwrap();
        assert_eq!(out.params(), src.params());
        assert!(ctl_finetune(&src, &pairs, &[], &plan).is_err());
    }

    #[test]
    fn finetune_keeps_conv() {
        let src = small();
        let pairs = vec![pair(200, 0)];
        let plan = TransferPlan::ctl_finetune(0.5, quick(3));
        let (out, _) = ctl_finetune(&src, &pairs, &pairs, &plan).unwrap();
        assert_eq!(out.conv_params(), src.conv_params());
        assert_ne!(out.params(), src.params());
    }

    #[test]
    fn selector_round_trips_through_text() {
        for s in [Selector::None, Selector::ConvStack, Selector::All, Selector::Named(vec!["conv1".into(), "dense2".into()])] {
            assert_eq!(s.to_string().parse::<Selector>().unwrap(), s);
        }
    }
}
