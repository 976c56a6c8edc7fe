//! Disaggregation metrics (MAE, SAE, EpD, NDE), per-appliance reports and
//! energy shares.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::powerdata::PowerSeries;

const SECONDS_PER_DAY: i64 = 86_400;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "metric needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Mean absolute error, watts.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// `|r̂ - r| / r` over total energies.
pub fn sae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let r: f64 = truth.iter().sum();
    let r_hat: f64 = pred.iter().sum();
    if r == 0.0 {
        return Err(Error::UndefinedDenominator("SAE"));
    }
    Ok((r_hat - r).abs() / r)
}

/// `Σ(x - x̂)² / Σx²`.
pub fn nde(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if den == 0.0 {
        return Err(Error::UndefinedDenominator("NDE"));
    }
    Ok(num / den)
}

/// Energy (Wh) per complete UTC day, `(day_index, predicted, actual)`.
///
/// A day is complete when its samples cover all 24 hours at the series
/// period; partial edge days and days broken by gaps are dropped.
pub fn daily_energy(pred: &PowerSeries, truth: &PowerSeries) -> Result<Vec<(i64, f64, f64)>> {
    if pred.timestamps() != truth.timestamps() {
        return Err(Error::Data("prediction and truth timestamps differ".into()));
    }
    check_lengths(pred.values(), truth.values())?;
    let period = truth.period();
    let wh = period as f64 / 3600.0;
    let needed = (SECONDS_PER_DAY + period - 1) / period;
    let mut days = Vec::new();
    let ts = truth.timestamps();
    let mut start = 0;
    while start < ts.len() {
        let day = ts[start].div_euclid(SECONDS_PER_DAY);
        let end = start + ts[start..].partition_point(|t| t.div_euclid(SECONDS_PER_DAY) == day);
        if (end - start) as i64 >= needed {
            let e_hat: f64 = pred.values()[start..end].iter().sum::<f64>() * wh;
            let e: f64 = truth.values()[start..end].iter().sum::<f64>() * wh;
            days.push((day, e_hat, e));
        }
        start = end;
    }
    Ok(days)
}

/// Mean absolute per-day energy error, Wh.
pub fn epd(pred: &PowerSeries, truth: &PowerSeries) -> Result<f64> {
    let days = daily_energy(pred, truth)?;
    if days.is_empty() {
        return Err(Error::Data("no complete day in the evaluation span".into()));
    }
    let sum: f64 = days.iter().map(|(_, e_hat, e)| (e_hat - e).abs()).sum();
    Ok(sum / days.len() as f64)
}

/// A metric value, or a marker for an undefined one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricCell {
    Value(f64),
    Invalid,
}

impl MetricCell {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricCell::Value(v) => Some(v),
            MetricCell::Invalid => None,
        }
    }
}

impl From<Result<f64>> for MetricCell {
    fn from(r: Result<f64>) -> Self {
        r.map_or(MetricCell::Invalid, MetricCell::Value)
    }
}

impl fmt::Display for MetricCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricCell::Value(v) => write!(f, "{v}"),
            MetricCell::Invalid => f.write_str("invalid"),
        }
    }
}

pub const METRIC_NAMES: [&str; 4] = ["mae", "sae", "epd_wh", "nde"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub appliance: String,
    /// MAE, SAE, EpD, NDE in that order.
    pub cells: [MetricCell; 4],
}

impl MetricsRow {
    pub fn mae(&self) -> MetricCell {
        self.cells[0]
    }
    pub fn sae(&self) -> MetricCell {
        self.cells[1]
    }
    pub fn epd(&self) -> MetricCell {
        self.cells[2]
    }
    pub fn nde(&self) -> MetricCell {
        self.cells[3]
    }
}

/// One predicted and one ground-truth series for an appliance.
#[derive(Debug, Clone)]
pub struct ApplianceResult {
    pub appliance: String,
    pub prediction: PowerSeries,
    pub truth: PowerSeries,
}

impl ApplianceResult {
    pub fn new(prediction: PowerSeries, truth: PowerSeries) -> Self {
        Self {
            appliance: truth.channel().to_string(),
            prediction,
            truth,
        }
    }
}

/// Per-appliance rows plus mean and population standard deviation across
/// appliances. Invalid cells are left out of the aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub mean: [MetricCell; 4],
    pub std: [MetricCell; 4],
    pub valid_counts: [usize; 4],
}

impl MetricsReport {
    pub fn row(&self, appliance: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.appliance == appliance)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "appliance,{}", METRIC_NAMES.join(","))?;
        let line = |cells: &[MetricCell; 4]| {
            cells.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        };
        for row in &self.rows {
            writeln!(out, "{},{}", row.appliance, line(&row.cells))?;
        }
        writeln!(out, "overall_mean,{}", line(&self.mean))?;
        writeln!(out, "overall_std,{}", line(&self.std))?;
        let counts: Vec<String> = self.valid_counts.iter().map(ToString::to_string).collect();
        writeln!(out, "valid_count,{}", counts.join(","))
    }
}

pub fn compute_row(result: &ApplianceResult) -> MetricsRow {
    let (p, t) = (result.prediction.values(), result.truth.values());
    MetricsRow {
        appliance: result.appliance.clone(),
        cells: [
            mae(p, t).into(),
            sae(p, t).into(),
            epd(&result.prediction, &result.truth).into(),
            nde(p, t).into(),
        ],
    }
}

/// Rows in lexicographic appliance order, then mean and population std.
pub fn compute_report(results: &[ApplianceResult]) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(Error::Data("report needs at least one appliance".into()));
    }
    let mut rows: Vec<MetricsRow> = results.iter().map(compute_row).collect();
    rows.sort_by(|a, b| a.appliance.cmp(&b.appliance));
    let mut mean = [MetricCell::Invalid; 4];
    let mut std = [MetricCell::Invalid; 4];
    let mut valid_counts = [0; 4];
    for k in 0..4 {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r.cells[k].value()).collect();
        valid_counts[k] = vals.len();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        mean[k] = MetricCell::Value(m);
        std[k] = MetricCell::Value(var.sqrt());
    }
    Ok(MetricsReport {
        rows,
        mean,
        std,
        valid_counts,
    })
}

/// Predicted and actual energy per appliance with their shares of the total.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyShare {
    pub appliances: Vec<String>,
    pub predicted_wh: Vec<f64>,
    pub actual_wh: Vec<f64>,
    pub predicted_share: Vec<f64>,
    pub actual_share: Vec<f64>,
}

impl EnergyShare {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "appliance,predicted_wh,actual_wh,predicted_share,actual_share")?;
        for i in 0..self.appliances.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.appliances[i],
                self.predicted_wh[i],
                self.actual_wh[i],
                self.predicted_share[i],
                self.actual_share[i]
            )?;
        }
        Ok(())
    }
}

fn shares(totals: &[f64]) -> Vec<f64> {
    let sum: f64 = totals.iter().sum();
    if sum > 0.0 {
        totals.iter().map(|t| t / sum).collect()
    } else {
        vec![0.0; totals.len()]
    }
}

/// Energy totals over each appliance's span; a group whose total is zero
/// gets all-zero shares.
pub fn energy_share(results: &[ApplianceResult]) -> Result<EnergyShare> {
    if results.is_empty() {
        return Err(Error::Data("energy share needs at least one appliance".into()));
    }
    let energy = |s: &PowerSeries| s.values().iter().sum::<f64>() * s.period() as f64 / 3600.0;
    let predicted_wh: Vec<f64> = results.iter().map(|r| energy(&r.prediction)).collect();
    let actual_wh: Vec<f64> = results.iter().map(|r| energy(&r.truth)).collect();
    if predicted_wh.iter().chain(&actual_wh).all(|e| *e == 0.0) {
        return Err(Error::DegenerateShare);
    }
    Ok(EnergyShare {
        appliances: results.iter().map(|r| r.appliance.clone()).collect(),
        predicted_share: shares(&predicted_wh),
        actual_share: shares(&actual_wh),
        predicted_wh,
        actual_wh,
    })
}
