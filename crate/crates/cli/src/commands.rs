use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use nilm::dataset::{DatasetConfig, Role, SplitConfig};
use nilm::metrics::{compute_report, energy_share, ApplianceResult};
use nilm::powerdata::{resample, split_on_gaps, AlignedPair, PowerSeries};
use nilm::seq2point::{stack, synthesize_household, train as fit_model, Seq2PointModel, SynthConfig, TrainConfig, TrainHistory, DEFAULT_WINDOW};
use nilm::transfer::{
    atl_transfer, ctl_apply, ctl_finetune, Checkpoint, Provenance, Selector, TransferPlan, DEFAULT_SUBSET_FRACTION,
};
use nilm::windowing::{normalize, windows_for_pairs, NormalizationTable, SlidingWindows, WindowSource};
use nilm::Error;

use crate::io::{self, MainsFile};
use crate::Common;

impl Common {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            min_epochs_before_stop: self.min_epochs,
            patience: self.patience,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    fn norm_table(&self) -> Result<NormalizationTable> {
        Ok(match &self.norm_config {
            Some(path) => NormalizationTable::load(path)?,
            None => NormalizationTable::default(),
        })
    }

    /// The window length to use with a source model.
    fn source_window(&self, source: &Seq2PointModel) -> Result<usize> {
        match self.window {
            Some(w) if w != source.window_length() => Err(Error::Plan(format!(
                "--window {w} differs from the source model's {}",
                source.window_length()
            ))
            .into()),
            _ => Ok(source.window_length()),
        }
    }
}

/// `30x10,30x8` style conv list.
fn parse_convs(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let (f, k) = part
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::Config(format!("conv layer `{part}` is not FILTERSxKERNEL")))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("conv layer `{part}` is not FILTERSxKERNEL")))
            };
            Ok((parse(f)?, parse(k)?))
        })
        .collect()
}

fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("hidden layer width `{p}` is not a number")).into())
        })
        .collect()
}

fn load_pairs(config: &DatasetConfig, splits: &SplitConfig, appliance: &str, role: Role, common: &Common) -> Result<Vec<AlignedPair>> {
    let pairs = config.load_role(splits, appliance, role, common.period, common.max_gap)?;
    if pairs.is_empty() {
        return Err(Error::Data(format!("no {role:?} data for `{appliance}`").to_lowercase()).into());
    }
    Ok(pairs)
}

fn save(model: Seq2PointModel, provenance: Provenance, out: &Path) -> Result<()> {
    Checkpoint::new(model, provenance)
        .save(out)
        .with_context(|| format!("saving checkpoint to {}", out.display()))
}

fn save_history(history: &TrainHistory, path: Option<&Path>) -> Result<()> {
    if let Some(path) = path {
        io::write_with(path, |out| history.write_csv(out))?;
    }
    Ok(())
}

fn report_training(label: &str, history: &TrainHistory) {
    match (history.best_epoch, history.best_val_loss()) {
        (Some(best), Some(loss)) => println!(
            "{label}: best epoch {best} of {} (validation loss {loss:.6})",
            history.stopped_epoch
        ),
        _ => println!("{label}: no epochs run"),
    }
}

fn load_model(dir: &Path) -> Result<Checkpoint> {
    Checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))
}

/// Resamples raw mains onto the model's grid and cuts it at long gaps.
fn mains_segments(mains: &PowerSeries, period: i64, max_gap: i64) -> Result<Vec<PowerSeries>> {
    Ok(split_on_gaps(&resample(mains, period)?, max_gap)?)
}

fn concat(series: &[PowerSeries], channel: &str) -> Result<PowerSeries> {
    let period = series.first().map_or(1, PowerSeries::period);
    Ok(PowerSeries::new(
        series.iter().flat_map(|s| s.timestamps().iter().copied()).collect(),
        series.iter().flat_map(|s| s.values().iter().copied()).collect(),
        period,
        channel,
    )?)
}

/// Predictions and ground truth for every test house of `appliance`. Rows
/// are labelled by appliance, or `appliance@houseN` when there are several.
fn score_test_houses(
    model: &Seq2PointModel,
    config: &DatasetConfig,
    splits: &SplitConfig,
    appliance: &str,
    max_gap: i64,
) -> Result<Vec<ApplianceResult>> {
    let ids = splits.split(appliance)?.test;
    if ids.is_empty() {
        return Err(Error::Data(format!("no test houses for `{appliance}`")).into());
    }
    let mut results = Vec::new();
    for &id in &ids {
        let pairs = config.load_house(id, appliance, model.period(), max_gap)?;
        let predictions = pairs
            .iter()
            .map(|p| ctl_apply(model, p.mains()))
            .collect::<nilm::Result<Vec<_>>>()?;
        let truths: Vec<PowerSeries> = pairs.iter().map(|p| p.appliance().clone()).collect();
        let label = if ids.len() == 1 {
            appliance.to_string()
        } else {
            format!("{appliance}@house{id}")
        };
        results.push(ApplianceResult {
            appliance: label.clone(),
            prediction: concat(&predictions, &label)?,
            truth: concat(&truths, &label)?,
        });
    }
    Ok(results)
}

fn write_report(results: &[ApplianceResult], out: &Path, share: Option<&Path>) -> Result<()> {
    let report = compute_report(results)?;
    io::write_with(out, |w| report.write_csv(w))?;
    report.write_csv(std::io::stdout().lock())?;
    if let Some(path) = share {
        let share = energy_share(results)?;
        io::write_with(path, |w| share.write_csv(w))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset config (house files, column layout, split file).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    appliance: String,
    /// Checkpoint directory to write.
    #[arg(long)]
    out: PathBuf,
    /// Training-history CSV to write.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Conv layers as FILTERSxKERNEL, comma separated.
    #[arg(long, default_value = "30x10,30x8,40x6,50x5,50x5")]
    conv: String,
    /// Hidden dense layer widths, comma separated (may be empty).
    #[arg(long, default_value = "1024")]
    hidden: String,
    #[command(flatten)]
    common: Common,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let c = &args.common;
    let arch = stack(&parse_convs(&args.conv)?, &parse_hidden(&args.hidden)?);
    let table = c.norm_table()?;
    let (mains_norm, appliance_norm) = (table.aggregate()?, table.get(&args.appliance)?);
    let config = DatasetConfig::load(&args.dataset)?;
    let splits = config.split_config()?;
    let train_pairs = load_pairs(&config, &splits, &args.appliance, Role::Train, c)?;
    let val_pairs = load_pairs(&config, &splits, &args.appliance, Role::Validation, c)?;

    let w = c.window.unwrap_or(DEFAULT_WINDOW);
    let model = Seq2PointModel::build(&args.appliance, w, mains_norm, appliance_norm, &arch, c.seed)?
        .with_period(c.period);
    let train_windows = windows_for_pairs(&train_pairs, w, &mains_norm, &appliance_norm)?;
    let val_windows = windows_for_pairs(&val_pairs, w, &mains_norm, &appliance_norm)?;
    let (model, history) = fit_model(model, &train_windows, &val_windows, &c.train_config())?;

    report_training(&args.appliance, &history);
    save_history(&history, args.history.as_deref())?;
    let provenance = Provenance {
        workflow: Some("train".into()),
        seed: Some(c.seed),
        stopped_epoch: Some(history.stopped_epoch),
        best_epoch: history.best_epoch,
        source_appliance: None,
    };
    save(model, provenance, &args.out)
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    mains: MainsFile,
    /// Predictions CSV (timestamp,watts).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?.model;
    let mains = args.mains.read()?;
    let predictions = mains_segments(&mains, model.period(), args.common.max_gap)?
        .iter()
        .map(|s| model.predict(s))
        .collect::<nilm::Result<Vec<_>>>()?;
    io::write_predictions(&args.out, &predictions)
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory; repeat for several appliances.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Report CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Energy-share CSV to write.
    #[arg(long)]
    energy_share: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let config = DatasetConfig::load(&args.dataset)?;
    let splits = config.split_config()?;
    let mut results = Vec::new();
    for dir in &args.checkpoints {
        let model = load_model(dir)?.model;
        let appliance = model.appliance().to_string();
        results.extend(score_test_houses(&model, &config, &splits, &appliance, args.common.max_gap)?);
    }
    write_report(&results, &args.out, args.energy_share.as_deref())
}

#[derive(Debug, Args)]
pub struct AtlArgs {
    /// Checkpoint whose conv stack is reused.
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Target appliance.
    #[arg(long)]
    appliance: String,
    /// Checkpoint directory to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
    /// Layers to freeze: conv-stack, all, none, or names like conv1,conv2.
    #[arg(long, default_value = "conv-stack")]
    freeze: String,
    /// Allow conv layers to train as well.
    #[arg(long)]
    tune_conv: bool,
    #[command(flatten)]
    common: Common,
}

pub fn transfer_atl(args: &AtlArgs) -> Result<()> {
    let c = &args.common;
    let checkpoint = load_model(&args.source)?;
    let source = checkpoint.model;
    let w = c.source_window(&source)?;
    let appliance_norm = c.norm_table()?.get(&args.appliance)?;
    let config = DatasetConfig::load(&args.dataset)?;
    let splits = config.split_config()?;
    let train_pairs = load_pairs(&config, &splits, &args.appliance, Role::Train, c)?;
    let val_pairs = load_pairs(&config, &splits, &args.appliance, Role::Validation, c)?;
    let mains_norm = source.mains_norm();
    let train_windows = windows_for_pairs(&train_pairs, w, &mains_norm, &appliance_norm)?;
    let val_windows = windows_for_pairs(&val_pairs, w, &mains_norm, &appliance_norm)?;

    let mut plan = TransferPlan::atl(c.train_config());
    plan.freeze = args.freeze.parse::<Selector>()?;
    plan.tune_conv = args.tune_conv;
    let (model, history) = atl_transfer(&source, &args.appliance, appliance_norm, &train_windows, &val_windows, &plan)?;

    report_training(&args.appliance, &history);
    save_history(&history, args.history.as_deref())?;
    let provenance = Provenance {
        workflow: Some("atl".into()),
        seed: Some(c.seed),
        stopped_epoch: Some(history.stopped_epoch),
        best_epoch: history.best_epoch,
        source_appliance: Some(source.appliance().to_string()),
    };
    save(model, provenance, &args.out)
}

#[derive(Debug, Args)]
pub struct CtlArgs {
    #[arg(long)]
    source: PathBuf,
    /// Target-domain dataset config.
    #[arg(long)]
    dataset: PathBuf,
    /// Appliance in the target dataset [default: the source's].
    #[arg(long)]
    appliance: Option<String>,
    /// Fine-tune the dense head on the leading part of the target training split.
    #[arg(long)]
    finetune: bool,
    /// Fraction of the target training split used for fine-tuning.
    #[arg(long, default_value_t = DEFAULT_SUBSET_FRACTION)]
    subset_fraction: f64,
    /// Predictions CSV when applying directly; checkpoint directory when fine-tuning.
    #[arg(long)]
    out: PathBuf,
    /// Report CSV for the target test split.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn transfer_ctl(args: &CtlArgs) -> Result<()> {
    let c = &args.common;
    let source = load_model(&args.source)?.model;
    c.source_window(&source)?;
    if c.period != source.period() {
        return Err(Error::Plan(format!(
            "--period {} differs from the source model's {}s",
            c.period,
            source.period()
        ))
        .into());
    }
    let appliance = args.appliance.clone().unwrap_or_else(|| source.appliance().to_string());
    let config = DatasetConfig::load(&args.dataset)?;
    let splits = config.split_config()?;

    let model = if args.finetune {
        let train_pairs = load_pairs(&config, &splits, &appliance, Role::Train, c)?;
        let val_pairs = load_pairs(&config, &splits, &appliance, Role::Validation, c)?;
        let plan = TransferPlan::ctl_finetune(args.subset_fraction, c.train_config());
        let (model, history) = ctl_finetune(&source, &train_pairs, &val_pairs, &plan)?;
        report_training(&appliance, &history);
        save_history(&history, args.history.as_deref())?;
        let provenance = Provenance {
            workflow: Some("ctl-finetune".into()),
            seed: Some(c.seed),
            stopped_epoch: Some(history.stopped_epoch),
            best_epoch: history.best_epoch,
            source_appliance: Some(source.appliance().to_string()),
        };
        save(model.clone(), provenance, &args.out)?;
        model
    } else {
        source
    };

    let results = score_test_houses(&model, &config, &splits, &appliance, c.max_gap)?;
    if !args.finetune {
        let predictions: Vec<PowerSeries> = results.iter().map(|r| r.prediction.clone()).collect();
        io::write_predictions(&args.out, &predictions)?;
    }
    if let Some(report) = &args.report {
        write_report(&results, report, None)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    mains: MainsFile,
    /// First window (sample index after resampling).
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// One past the last window [default: start + 1].
    #[arg(long)]
    end: Option<usize>,
    /// CSV of `window,position,f0,f1,...` rows.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

/// A contiguous range of another window source.
struct WindowRange<'a> {
    inner: &'a SlidingWindows,
    start: usize,
    end: usize,
}

impl WindowSource for WindowRange<'_> {
    fn len(&self) -> usize {
        self.end - self.start
    }

    fn window_length(&self) -> usize {
        self.inner.window_length()
    }

    fn window(&self, index: usize) -> &[f32] {
        self.inner.window(self.start + index)
    }

    fn target(&self, index: usize) -> f32 {
        self.inner.target(self.start + index)
    }
}

pub fn features(args: &FeaturesArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?.model;
    let mains = resample(&args.mains.read()?, model.period())?;
    let normalized: Vec<f32> = normalize(mains.values(), &model.mains_norm())
        .into_iter()
        .map(|v| v as f32)
        .collect();
    let windows = SlidingWindows::new(&normalized, Vec::new(), model.window_length())?;
    let end = args.end.unwrap_or(args.start + 1);
    if args.start >= end || end > windows.len() {
        return Err(Error::Config(format!(
            "window range {}..{end} is outside 0..{}",
            args.start,
            windows.len()
        ))
        .into());
    }
    let range = WindowRange {
        inner: &windows,
        start: args.start,
        end,
    };
    let features = model.extract_features(&range)?;
    let &[n, len, channels] = features.shape() else {
        unreachable!("features are rank 3")
    };
    io::write_with(&args.out, |out| {
        let names: Vec<String> = (0..channels).map(|c| format!("f{c}")).collect();
        writeln!(out, "window,position,{}", names.join(","))?;
        for (i, block) in features.data().chunks_exact(len * channels).enumerate().take(n) {
            for (p, row) in block.chunks_exact(channels).enumerate() {
                write!(out, "{},{p}", args.start + i)?;
                for v in row {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config (appliance profiles, noise, length).
    #[arg(long)]
    config: PathBuf,
    /// CSV of `timestamp,mains,<appliance...>` rows.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's length in samples.
    #[arg(long)]
    length: Option<usize>,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut config = SynthConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(length) = args.length {
        config.length = length;
    }
    let house = synthesize_household(&config)?;
    let mut names = vec!["mains"];
    names.extend(house.appliances.iter().map(|a| a.channel()));
    let mut columns = vec![house.mains.values()];
    columns.extend(house.appliances.iter().map(|a| a.values()));
    io::write_columns(&args.out, house.mains.timestamps(), &names, &columns)
}
