//! Ingestion of per-house channel files and the resample / align / gap-split
//! pipeline that turns raw readings into aligned (mains, appliance) segments.

use std::collections::BTreeSet;
use std::io::Read;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cut threshold between sensor outages and transient dropouts.
pub const DEFAULT_MAX_GAP: i64 = 3600;

/// Common sampling period every channel is brought onto.
pub const DEFAULT_PERIOD: i64 = 8;

/// Active-power readings of one channel.
///
/// Timestamps are integer UNIX seconds, strictly increasing. Values are watts,
/// finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    timestamps: Vec<i64>,
    values: Vec<f64>,
    period: i64,
    channel: String,
}

impl PowerSeries {
    pub fn new(
        timestamps: Vec<i64>,
        values: Vec<f64>,
        period: i64,
        channel: impl Into<String>,
    ) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Data(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if period <= 0 {
            return Err(Error::Data(format!("period must be positive, got {period}")));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Data(format!("invalid power value {v}")));
        }
        Ok(Self {
            timestamps,
            values,
            period,
            channel: channel.into(),
        })
    }

    /// A regularly sampled series starting at `start`.
    pub fn regular(
        start: i64,
        period: i64,
        values: Vec<f64>,
        channel: impl Into<String>,
    ) -> Result<Self> {
        let timestamps = (0..values.len() as i64).map(|i| start + i * period).collect();
        Self::new(timestamps, values, period, channel)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn period(&self) -> i64 {
        self.period
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_channel(mut self, channel: impl Into<String>) -> Self {
        self.channel = channel.into();
        self
    }

    /// Sub-series over the index range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values[start..end].to_vec(),
            period: self.period,
            channel: self.channel.clone(),
        }
    }

    // Construction from parts already known to satisfy the invariants.
    fn from_parts(timestamps: Vec<i64>, values: Vec<f64>, period: i64, channel: String) -> Self {
        debug_assert_eq!(timestamps.len(), values.len());
        Self {
            timestamps,
            values,
            period,
            channel,
        }
    }
}

/// Mains and appliance readings over identical timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    mains: PowerSeries,
    appliance: PowerSeries,
}

impl AlignedPair {
    pub fn new(mains: PowerSeries, appliance: PowerSeries) -> Result<Self> {
        if mains.period != appliance.period {
            return Err(Error::PeriodMismatch {
                expected: mains.period,
                found: appliance.period,
            });
        }
        if mains.timestamps != appliance.timestamps {
            return Err(Error::Data("aligned pair timestamps differ".into()));
        }
        Ok(Self { mains, appliance })
    }

    pub fn mains(&self) -> &PowerSeries {
        &self.mains
    }

    pub fn appliance(&self) -> &PowerSeries {
        &self.appliance
    }

    pub fn len(&self) -> usize {
        self.mains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mains.is_empty()
    }

    pub fn period(&self) -> i64 {
        self.mains.period
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            mains: self.mains.slice(start, end),
            appliance: self.appliance.slice(start, end),
        }
    }

    /// Splits both channels at the same large gaps.
    pub fn split_on_gaps(&self, max_gap: i64) -> Result<Vec<AlignedPair>> {
        let mains = split_on_gaps(&self.mains, max_gap)?;
        let appliance = split_on_gaps(&self.appliance, max_gap)?;
        Ok(mains
            .into_iter()
            .zip(appliance)
            .map(|(mains, appliance)| AlignedPair { mains, appliance })
            .collect())
    }
}

/// House ids assigned to each role for one appliance.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<u32>,
    #[serde(default)]
    pub validation: Vec<u32>,
    #[serde(default)]
    pub test: Vec<u32>,
}

impl DatasetSplit {
    pub fn new(train: Vec<u32>, validation: Vec<u32>, test: Vec<u32>) -> Result<Self> {
        let split = Self {
            train,
            validation,
            test,
        };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(*id) {
                return Err(Error::Config(format!(
                    "house {id} appears in more than one split"
                )));
            }
        }
        Ok(())
    }

    /// Drops the given houses from every role.
    pub fn without(&self, excluded: &[u32]) -> Self {
        let keep = |ids: &[u32]| -> Vec<u32> {
            ids.iter().copied().filter(|id| !excluded.contains(id)).collect()
        };
        Self {
            train: keep(&self.train),
            validation: keep(&self.validation),
            test: keep(&self.test),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFormat {
    /// Integer UNIX seconds.
    #[default]
    Unix,
    /// `YYYY-MM-DD HH:MM:SS`, interpreted as UTC.
    Datetime,
}

/// One power column to extract, and the channel tag it is given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerColumn {
    pub column: String,
    pub channel: String,
}

impl PowerColumn {
    pub fn named(column: impl Into<String>) -> Self {
        let column = column.into();
        Self {
            channel: column.clone(),
            column,
        }
    }

    pub fn renamed(column: impl Into<String>, channel: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            channel: channel.into(),
        }
    }
}

/// Describes where the timestamp and power readings live in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub timestamp: String,
    pub power: Vec<PowerColumn>,
    /// When true the first line names the columns; otherwise `columns` does.
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub time_format: TimeFormat,
    /// Nominal sampling period. Inferred from the data when absent.
    #[serde(default)]
    pub period: Option<i64>,
}

impl ChannelLayout {
    /// Headerless layout with positional column names.
    pub fn positional(columns: &[&str], timestamp: &str, power: &[&str]) -> Self {
        Self {
            timestamp: timestamp.to_string(),
            power: power.iter().map(|c| PowerColumn::named(*c)).collect(),
            header: false,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            time_format: TimeFormat::Unix,
            period: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedChannels {
    pub series: Vec<PowerSeries>,
    pub skipped_rows: usize,
}

/// Parses a comma-separated channel file into one series per requested
/// power column.
///
/// Rows with any unparseable, negative or non-finite field are skipped and
/// counted. Duplicate timestamps keep the last row written.
pub fn parse_channel_file<R: Read>(raw: R, layout: &ChannelLayout) -> Result<ParsedChannels> {
    if layout.power.is_empty() {
        return Err(Error::Layout("layout names no power columns".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let mut records = reader.records();

    let names: Vec<String> = if layout.header {
        match records.next() {
            Some(Ok(rec)) => rec.iter().map(str::to_string).collect(),
            Some(Err(e)) => return Err(Error::Layout(format!("unreadable header: {e}"))),
            None => return Err(Error::EmptyInput("channel file is empty".into())),
        }
    } else {
        layout.columns.clone()
    };
    let find = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Layout(format!("column `{name}` not found")))
    };
    let ts_idx = find(&layout.timestamp)?;
    let power_idx = layout
        .power
        .iter()
        .map(|p| find(&p.column))
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<(i64, Vec<f64>)> = Vec::new();
    let mut skipped = 0usize;
    for rec in records {
        let Ok(rec) = rec else {
            skipped += 1;
            continue;
        };
        let ts = rec
            .get(ts_idx)
            .and_then(|f| parse_timestamp(f, layout.time_format));
        let vals: Option<Vec<f64>> = power_idx
            .iter()
            .map(|&i| {
                rec.get(i)
                    .and_then(|f| f.parse::<f64>().ok())
                    .filter(|v| v.is_finite() && *v >= 0.0)
            })
            .collect();
        match (ts, vals) {
            (Some(ts), Some(vals)) => rows.push((ts, vals)),
            _ => skipped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("no parseable rows".into()));
    }

    // Stable sort keeps file order among equal timestamps; keep the last.
    rows.sort_by_key(|(ts, _)| *ts);
    let mut deduped: Vec<(i64, Vec<f64>)> = Vec::with_capacity(rows.len());
    for row in rows {
        match deduped.last_mut() {
            Some(last) if last.0 == row.0 => *last = row,
            _ => deduped.push(row),
        }
    }

    let timestamps: Vec<i64> = deduped.iter().map(|(t, _)| *t).collect();
    let period = layout.period.unwrap_or_else(|| infer_period(&timestamps));
    let series = layout
        .power
        .iter()
        .enumerate()
        .map(|(k, col)| {
            let values = deduped.iter().map(|(_, v)| v[k]).collect();
            PowerSeries::new(timestamps.clone(), values, period, col.channel.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParsedChannels {
        series,
        skipped_rows: skipped,
    })
}

fn parse_timestamp(field: &str, format: TimeFormat) -> Option<i64> {
    match format {
        TimeFormat::Unix => field.parse::<i64>().ok().or_else(|| {
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(|v| v.floor() as i64)
        }),
        TimeFormat::Datetime => NaiveDateTime::parse_from_str(field, "%Y-%m-%d %H:%M:%S")
            .ok()
            .map(|dt| dt.and_utc().timestamp()),
    }
}

/// Most frequent positive delta; smallest wins ties. One-sample series get 1 s.
fn infer_period(timestamps: &[i64]) -> i64 {
    let mut deltas: Vec<i64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    if deltas.is_empty() {
        return 1;
    }
    deltas.sort_unstable();
    let mut best = (deltas[0], 0usize);
    let mut i = 0;
    while i < deltas.len() {
        let j = deltas[i..].iter().take_while(|d| **d == deltas[i]).count();
        if j > best.1 {
            best = (deltas[i], j);
        }
        i += j;
    }
    best.0
}

/// Down-samples onto the grid `t0, t0 + p, ...` by forward fill.
///
/// A grid point is emitted only when at least one reading falls in
/// `(g - p, g]`; grid points inside a hole in the data are left out so that
/// [`split_on_gaps`] can decide whether to fill or cut.
pub fn resample(series: &PowerSeries, target_period: i64) -> Result<PowerSeries> {
    if series.is_empty() {
        return Err(Error::EmptyInput("cannot resample an empty series".into()));
    }
    if target_period < series.period {
        return Err(Error::UnsupportedUpsample {
            source_period: series.period,
            target_period,
        });
    }
    let ts = &series.timestamps;
    let t0 = ts[0];
    let t_last = *ts.last().unwrap();
    let mut out_t = Vec::with_capacity(((t_last - t0) / target_period + 1) as usize);
    let mut out_v = Vec::with_capacity(out_t.capacity());
    // `next` indexes the first reading strictly after the current grid point.
    let mut next = 0usize;
    let mut g = t0;
    while g <= t_last {
        while next < ts.len() && ts[next] <= g {
            next += 1;
        }
        let last = next - 1;
        if ts[last] > g - target_period {
            out_t.push(g);
            out_v.push(series.values[last]);
        }
        g += target_period;
    }
    Ok(PowerSeries::from_parts(
        out_t,
        out_v,
        target_period,
        series.channel.clone(),
    ))
}

/// Cuts the series wherever consecutive readings are more than `max_gap`
/// seconds apart. Shorter holes are forward-filled onto the sampling grid.
pub fn split_on_gaps(series: &PowerSeries, max_gap: i64) -> Result<Vec<PowerSeries>> {
    if max_gap <= series.period {
        return Err(Error::Config(format!(
            "max_gap {max_gap}s must exceed the sampling period {}s",
            series.period
        )));
    }
    let mut segments = Vec::new();
    if series.is_empty() {
        return Ok(segments);
    }
    let p = series.period;
    let mut seg_t = vec![series.timestamps[0]];
    let mut seg_v = vec![series.values[0]];
    for i in 1..series.len() {
        let (prev, cur) = (series.timestamps[i - 1], series.timestamps[i]);
        if cur - prev > max_gap {
            segments.push(PowerSeries::from_parts(
                std::mem::take(&mut seg_t),
                std::mem::take(&mut seg_v),
                p,
                series.channel.clone(),
            ));
        } else {
            let mut g = prev + p;
            while g < cur {
                seg_t.push(g);
                seg_v.push(series.values[i - 1]);
                g += p;
            }
        }
        seg_t.push(cur);
        seg_v.push(series.values[i]);
    }
    segments.push(PowerSeries::from_parts(seg_t, seg_v, p, series.channel.clone()));
    Ok(segments)
}

/// Restricts both series to their common timestamps.
pub fn align(mains: &PowerSeries, appliance: &PowerSeries) -> Result<AlignedPair> {
    if mains.period != appliance.period {
        return Err(Error::PeriodMismatch {
            expected: mains.period,
            found: appliance.period,
        });
    }
    let (mut i, mut j) = (0, 0);
    let mut ts = Vec::new();
    let mut mv = Vec::new();
    let mut av = Vec::new();
    while i < mains.len() && j < appliance.len() {
        let (a, b) = (mains.timestamps[i], appliance.timestamps[j]);
        match a.cmp(&b) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                ts.push(a);
                mv.push(mains.values[i]);
                av.push(appliance.values[j]);
                i += 1;
                j += 1;
            }
        }
    }
    if ts.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(AlignedPair {
        mains: PowerSeries::from_parts(ts.clone(), mv, mains.period, mains.channel.clone()),
        appliance: PowerSeries::from_parts(ts, av, appliance.period, appliance.channel.clone()),
    })
}

/// Resample, align and gap-split one house's mains and appliance channels.
pub fn prepare_pair(
    mains: &PowerSeries,
    appliance: &PowerSeries,
    period: i64,
    max_gap: i64,
) -> Result<Vec<AlignedPair>> {
    let mains = resample(mains, period)?;
    let appliance = resample(appliance, period)?;
    align(&mains, &appliance)?.split_on_gaps(max_gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(ts: &[i64], vs: &[f64], period: i64) -> PowerSeries {
        PowerSeries::new(ts.to_vec(), vs.to_vec(), period, "x").unwrap()
    }

    #[test]
    fn parses_two_headerless_rows() {
        let layout = ChannelLayout::positional(&["ts", "mains", "kettle"], "ts", &["mains", "kettle"]);
        let parsed = parse_channel_file("0,100,5\n8,120,0".as_bytes(), &layout).unwrap();
        assert_eq!(parsed.series.len(), 2);
        assert_eq!(parsed.series[0].timestamps(), &[0, 8]);
        assert_eq!(parsed.series[0].values(), &[100.0, 120.0]);
        assert_eq!(parsed.series[0].channel(), "mains");
        assert_eq!(parsed.series[1].values(), &[5.0, 0.0]);
        assert_eq!(parsed.series[1].period(), 8);
        assert_eq!(parsed.skipped_rows, 0);
    }

    #[test]
    fn empty_stream_is_empty_input() {
        let layout = ChannelLayout::positional(&["ts", "mains"], "ts", &["mains"]);
        let err = parse_channel_file("".as_bytes(), &layout).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn missing_column_is_layout_error() {
        let mut layout = ChannelLayout::positional(&[], "Time", &["fridge"]);
        layout.header = true;
        let raw = "Time,Aggregate,Appliance1\n0,1,2\n";
        let err = parse_channel_file(raw.as_bytes(), &layout).unwrap_err();
        assert!(matches!(err, Error::Layout(_)), "{err}");
    }

    #[test]
    fn header_rows_skips_sorts_and_dedups() {
        let layout = ChannelLayout {
            timestamp: "Time".into(),
            power: vec![PowerColumn::renamed("Appliance1", "fridge")],
            header: true,
            columns: vec![],
            time_format: TimeFormat::Datetime,
            period: Some(8),
        };
        let raw = "Time,Aggregate,Appliance1\n\
                   2014-01-01 00:00:16,300,30\n\
                   2014-01-01 00:00:00,100,10\n\
                   2014-01-01 00:00:08,200,oops\n\
                   2014-01-01 00:00:16,300,31\n\
                   garbage,1,1\n";
        let parsed = parse_channel_file(raw.as_bytes(), &layout).unwrap();
        let s = &parsed.series[0];
        assert_eq!(s.channel(), "fridge");
        assert_eq!(s.timestamps(), &[1388534400, 1388534416]);
        assert_eq!(s.values(), &[10.0, 31.0]);
        assert_eq!(parsed.skipped_rows, 2);
    }

    #[test]
    fn negative_power_rows_are_skipped() {
        let layout = ChannelLayout::positional(&["ts", "mains"], "ts", &["mains"]);
        let parsed = parse_channel_file("0,1\n8,-3\n16,NaN\n24,4".as_bytes(), &layout).unwrap();
        assert_eq!(parsed.series[0].values(), &[1.0, 4.0]);
        assert_eq!(parsed.skipped_rows, 2);
    }

    #[test]
    fn resample_forward_fills_to_grid() {
        let s = series(&[0, 6, 12, 18, 24], &[1., 2., 3., 4., 5.], 6);
        let r = resample(&s, 8).unwrap();
        assert_eq!(r.timestamps(), &[0, 8, 16, 24]);
        assert_eq!(r.values(), &[1., 2., 3., 5.]);
        assert_eq!(r.period(), 8);
    }

    #[test]
    fn resample_same_period_is_identity() {
        let s = series(&[0, 8, 16, 40], &[1., 2., 3., 4.], 8);
        assert_eq!(resample(&s, 8).unwrap(), s);
    }

    #[test]
    fn resample_rejects_upsampling() {
        let s = series(&[0, 8], &[1., 2.], 8);
        assert!(matches!(
            resample(&s, 4),
            Err(Error::UnsupportedUpsample { .. })
        ));
    }

    #[test]
    fn resample_leaves_holes_for_the_splitter() {
        let s = series(&[0, 8, 80, 88], &[1., 2., 3., 4.], 8);
        let r = resample(&s, 8).unwrap();
        assert_eq!(r.timestamps(), &[0, 8, 80, 88]);
    }

    #[test]
    fn split_cuts_large_gaps() {
        let s = series(&[0, 8, 16, 100000, 100008], &[1., 2., 3., 4., 5.], 8);
        let parts = split_on_gaps(&s, 3600).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].timestamps(), &[0, 8, 16]);
        assert_eq!(parts[1].timestamps(), &[100000, 100008]);
        assert_eq!(parts[1].values(), &[4., 5.]);
    }

    #[test]
    fn split_without_large_gaps_is_identity() {
        let s = series(&[0, 8, 16, 24], &[1., 2., 3., 4.], 8);
        assert_eq!(split_on_gaps(&s, 3600).unwrap(), vec![s]);
    }

    #[test]
    fn split_single_point_and_empty() {
        let s = series(&[5], &[1.], 8);
        assert_eq!(split_on_gaps(&s, 3600).unwrap(), vec![s]);
        let e = series(&[], &[], 8);
        assert!(split_on_gaps(&e, 3600).unwrap().is_empty());
    }

    #[test]
    fn split_fills_small_gaps() {
        let s = series(&[0, 8, 40], &[1., 2., 3.], 8);
        let parts = split_on_gaps(&s, 3600).unwrap();
        assert_eq!(parts[0].timestamps(), &[0, 8, 16, 24, 32, 40]);
        assert_eq!(parts[0].values(), &[1., 2., 2., 2., 2., 3.]);
    }

    #[test]
    fn align_intersects_timestamps() {
        let m = series(&[0, 8, 16], &[1., 2., 3.], 8);
        let a = series(&[8, 16, 24], &[4., 5., 6.], 8);
        let pair = align(&m, &a).unwrap();
        assert_eq!(pair.mains().timestamps(), &[8, 16]);
        assert_eq!(pair.mains().values(), &[2., 3.]);
        assert_eq!(pair.appliance().values(), &[4., 5.]);
        assert_eq!(align(&m, &m).unwrap().mains(), &m);
    }

    #[test]
    fn align_disjoint_is_error() {
        let m = series(&[0, 8], &[1., 2.], 8);
        let a = series(&[80, 88], &[1., 2.], 8);
        assert!(matches!(align(&m, &a), Err(Error::NoOverlap)));
    }

    #[test]
    fn split_rejects_overlapping_houses() {
        assert!(DatasetSplit::new(vec![1, 2], vec![3], vec![2]).is_err());
        let s = DatasetSplit::new(vec![1, 13], vec![3], vec![21]).unwrap();
        assert_eq!(s.without(&[13, 21]), DatasetSplit::new(vec![1], vec![3], vec![]).unwrap());
    }

    #[test]
    fn series_rejects_bad_invariants() {
        assert!(PowerSeries::new(vec![0, 0], vec![1., 1.], 8, "x").is_err());
        assert!(PowerSeries::new(vec![0, 8], vec![1., -1.], 8, "x").is_err());
        assert!(PowerSeries::new(vec![0], vec![1., 2.], 8, "x").is_err());
    }
}
