//! Station data ingestion: SURFRAD parsing, extraterrestrial normalization,
//! clearness index and supervised datasets for each forecast task.

mod clearsky;
mod dataset;
mod surfrad;

pub use clearsky::{
    clearness_index, clearness_index_with, compute_extraterrestrial, eccentricity_factor,
    extraterrestrial_for_day, Clearness, ClearSkySeries, ClearSkySource, DEFAULT_DAYTIME_THRESHOLD,
    DEFAULT_K_CAP, SOLAR_CONSTANT,
};
pub use dataset::{
    build_dataset, build_grid, dataset_from_grid, resample_five_minute, DatasetConfig, DatasetMeta,
    GridPoint, Resolution, ResolutionGrid, SupervisedDataset, Task, FEATURE_NAMES, N_FEATURES, N_LAGS,
};
pub use surfrad::{
    parse_surfrad_day, render_surfrad_day, ParsedDay, RowError, StationHeader, COLUMNS,
    MISSING_SENTINEL,
};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("file is empty")]
    EmptyFile,
    #[error("timestamps must be strictly increasing ({0} follows a later or equal time)")]
    NonMonotonic(DateTime<Utc>),
    #[error("no rows left after filtering")]
    EmptyDataset,
    #[error("no clear-sky value for {0}")]
    MisalignedClearSky(DateTime<Utc>),
    #[error("clear-sky csv: {0}")]
    ClearSkyCsv(String),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Raw quality codes of the fields a [`Record`] keeps; nonzero means failed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcFlags {
    pub ghi: u8,
    pub temp: u8,
    pub rh: u8,
    pub wind_speed: u8,
    pub wind_dir: u8,
    pub pressure: u8,
}

/// One station observation. Fields whose quality check failed are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub timestamp: DateTime<Utc>,
    pub zenith_deg: f64,
    /// Global horizontal irradiance, W/m^2.
    pub ghi: Option<f64>,
    pub temp_c: Option<f64>,
    pub rh_pct: Option<f64>,
    pub wind_speed: Option<f64>,
    pub wind_dir_deg: Option<f64>,
    pub pressure_mb: Option<f64>,
    pub qc: QcFlags,
}

/// Records with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordSeries(Vec<Record>);

impl RecordSeries {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        for w in records.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return Err(IngestError::NonMonotonic(w[1].timestamp));
            }
        }
        Ok(Self(records))
    }

    /// Concatenates several series into one, ordering by timestamp. When two
    /// inputs share a timestamp the first one wins.
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a RecordSeries>) -> Self {
        let mut all: Vec<Record> = parts.into_iter().flat_map(|s| s.0.iter().cloned()).collect();
        all.sort_by_key(|r| r.timestamp);
        all.dedup_by_key(|r| r.timestamp);
        Self(all)
    }

    pub fn records(&self) -> &[Record] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Record> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Records whose timestamp falls in the given calendar year.
    pub fn year(&self, year: i32) -> Self {
        use chrono::Datelike;
        Self(self.0.iter().filter(|r| r.timestamp.year() == year).cloned().collect())
    }
}
