use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use nilm::powerdata::{parse_channel_file, ChannelLayout, PowerColumn, PowerSeries, TimeFormat};

/// Where to find the mains readings in a CSV file with a header row.
#[derive(Debug, Clone, Args)]
pub struct MainsFile {
    #[arg(long)]
    pub mains: PathBuf,
    /// Column holding mains power in watts.
    #[arg(long, default_value = "mains")]
    pub column: String,
    #[arg(long, default_value = "timestamp")]
    pub timestamp_column: String,
    /// `unix` seconds or `datetime` (YYYY-MM-DD HH:MM:SS, UTC).
    #[arg(long, default_value = "unix", value_parser = parse_time_format)]
    pub time_format: TimeFormat,
}

fn parse_time_format(s: &str) -> Result<TimeFormat, String> {
    match s {
        "unix" => Ok(TimeFormat::Unix),
        "datetime" => Ok(TimeFormat::Datetime),
        other => Err(format!("unknown time format `{other}` (expected unix or datetime)")),
    }
}

impl MainsFile {
    pub fn read(&self) -> Result<PowerSeries> {
        let layout = ChannelLayout {
            timestamp: self.timestamp_column.clone(),
            power: vec![PowerColumn::renamed(&self.column, "mains")],
            header: true,
            columns: Vec::new(),
            time_format: self.time_format,
            period: None,
        };
        let file = File::open(&self.mains).map_err(|e| nilm::Error::Io {
            path: self.mains.clone(),
            source: e,
        })?;
        let parsed = parse_channel_file(std::io::BufReader::new(file), &layout)
            .with_context(|| format!("reading {}", self.mains.display()))?;
        if parsed.skipped_rows > 0 {
            eprintln!("skipped {} unparseable rows in {}", parsed.skipped_rows, self.mains.display());
        }
        Ok(parsed.series.into_iter().next().expect("one power column requested"))
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// `timestamp,<names...>` rows.
pub fn write_columns(path: &Path, timestamps: &[i64], names: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "timestamp,{}", names.join(","))?;
    for (i, t) in timestamps.iter().enumerate() {
        write!(out, "{t}")?;
        for c in columns {
            write!(out, ",{}", c[i])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_predictions(path: &Path, series: &[PowerSeries]) -> Result<()> {
    let ts: Vec<i64> = series.iter().flat_map(|s| s.timestamps().iter().copied()).collect();
    let watts: Vec<f64> = series.iter().flat_map(|s| s.values().iter().copied()).collect();
    write_columns(path, &ts, &["watts"], &[&watts])
}

pub fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = create(path)?;
    f(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush()?;
    Ok(())
}
