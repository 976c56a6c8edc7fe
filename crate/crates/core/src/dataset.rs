//! Config files describing where house recordings live and how houses are
//! split between training, validation and test.
//!
//! ```toml
//! # dataset.toml
//! splits = "refit_splits.toml"   # relative to this file
//!
//! [layout]
//! header = true
//! timestamp = "Time"
//! time_format = "unix"
//!
//! [[house]]
//! id = 2
//! path = "CLEAN_House2.csv"
//! mains = "Aggregate"
//! appliances = { kettle = "Appliance8", washing_machine = "Appliance2" }
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powerdata::{parse_channel_file, prepare_pair, AlignedPair, ChannelLayout, DatasetSplit, PowerColumn, TimeFormat};

/// Per-appliance house splits plus houses excluded everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default)]
    pub exclude: Vec<u32>,
    #[serde(default)]
    pub appliances: BTreeMap<String, DatasetSplit>,
}

impl SplitConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, split) in &config.appliances {
            split
                .validate()
                .map_err(|e| Error::Config(format!("split for `{name}`: {e}")))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = Error::read_config(path)?;
        Self::from_toml(&text)
    }

    /// The split for `appliance` with excluded houses removed.
    pub fn split(&self, appliance: &str) -> Result<DatasetSplit> {
        self.appliances
            .get(appliance)
            .map(|s| s.without(&self.exclude))
            .ok_or_else(|| Error::Config(format!("no split configured for `{appliance}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
    Test,
}

/// Column layout shared by every house file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileLayout {
    pub timestamp: String,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub time_format: TimeFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseEntry {
    pub id: u32,
    pub path: PathBuf,
    pub mains: String,
    /// Appliance name to column name.
    #[serde(default)]
    pub appliances: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub layout: FileLayout,
    #[serde(default, rename = "house")]
    pub houses: Vec<HouseEntry>,
    /// Path of a split config file.
    #[serde(default)]
    pub splits: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads the config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = Error::read_config(path)?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for house in &mut config.houses {
            house.path = base.join(&house.path);
        }
        if let Some(splits) = &mut config.splits {
            *splits = base.join(&*splits);
        }
        Ok(config)
    }

    pub fn house(&self, id: u32) -> Result<&HouseEntry> {
        self.houses
            .iter()
            .find(|h| h.id == id)
            .ok_or_else(|| Error::Config(format!("house {id} is not listed in the dataset config")))
    }

    pub fn split_config(&self) -> Result<SplitConfig> {
        match &self.splits {
            Some(path) => SplitConfig::load(path),
            None => Err(Error::Config("dataset config names no split file".into())),
        }
    }

    /// Aligned, gap-split segments of one house's mains and `appliance`.
    pub fn load_house(&self, id: u32, appliance: &str, period: i64, max_gap: i64) -> Result<Vec<AlignedPair>> {
        let house = self.house(id)?;
        let column = house.appliances.get(appliance).ok_or_else(|| {
            Error::Config(format!("house {id} has no `{appliance}` channel"))
        })?;
        let layout = ChannelLayout {
            timestamp: self.layout.timestamp.clone(),
            power: vec![
                PowerColumn::renamed(&house.mains, "mains"),
                PowerColumn::renamed(column, appliance),
            ],
            header: self.layout.header,
            columns: self.layout.columns.clone(),
            time_format: self.layout.time_format,
            period: None,
        };
        let file = File::open(&house.path).map_err(|e| Error::io(&house.path, e))?;
        let parsed = parse_channel_file(std::io::BufReader::new(file), &layout)?;
        let [mains, appl] = <[_; 2]>::try_from(parsed.series).expect("two power columns requested");
        prepare_pair(&mains, &appl, period, max_gap)
    }

    /// Every segment from the houses assigned to `role` for `appliance`, in
    /// house order.
    pub fn load_role(
        &self,
        splits: &SplitConfig,
        appliance: &str,
        role: Role,
        period: i64,
        max_gap: i64,
    ) -> Result<Vec<AlignedPair>> {
        let split = splits.split(appliance)?;
        let ids = match role {
            Role::Train => &split.train,
            Role::Validation => &split.validation,
            Role::Test => &split.test,
        };
        let mut out = Vec::new();
        for &id in ids {
            out.extend(self.load_house(id, appliance, period, max_gap)?);
        }
        Ok(out)
    }
}
