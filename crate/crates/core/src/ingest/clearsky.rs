use super::{IngestError, RecordSeries, Result};
use chrono::{DateTime, Datelike, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Read;

/// Solar constant, W/m^2.
pub const SOLAR_CONSTANT: f64 = 1361.0;
/// Normalizers at or below this count as night.
pub const DEFAULT_DAYTIME_THRESHOLD: f64 = 5.0;
pub const DEFAULT_K_CAP: f64 = 1.2;

/// Orbital eccentricity correction 1 + 0.033 cos(2 pi n / 365).
pub fn eccentricity_factor(day_of_year: f64) -> f64 {
    1.0 + 0.033 * (2.0 * PI * day_of_year / 365.0).cos()
}

/// Horizontal extraterrestrial irradiance for a (possibly fractional) day of
/// year, floored at zero below the horizon.
pub fn extraterrestrial_for_day(day_of_year: f64, zenith_deg: f64, solar_constant: f64) -> f64 {
    if zenith_deg >= 90.0 {
        return 0.0;
    }
    let cos_zenith = zenith_deg.to_radians().cos();
    (solar_constant * eccentricity_factor(day_of_year) * cos_zenith).max(0.0)
}

pub fn compute_extraterrestrial(timestamp: DateTime<Utc>, zenith_deg: f64, solar_constant: f64) -> f64 {
    extraterrestrial_for_day(timestamp.ordinal() as f64, zenith_deg, solar_constant)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Clearness {
    Day(f64),
    /// Normalizer at or below the daytime threshold; excluded downstream.
    Night,
}

impl Clearness {
    pub fn value(self) -> Option<f64> {
        match self {
            Clearness::Day(k) => Some(k),
            Clearness::Night => None,
        }
    }
}

/// `clamp(ghi / e_ext, 0, k_cap)` with the default daytime threshold.
pub fn clearness_index(ghi: f64, e_ext: f64, k_cap: f64) -> Clearness {
    clearness_index_with(ghi, e_ext, k_cap, DEFAULT_DAYTIME_THRESHOLD)
}

pub fn clearness_index_with(ghi: f64, e_ext: f64, k_cap: f64, daytime_threshold: f64) -> Clearness {
    if !(e_ext > daytime_threshold) {
        return Clearness::Night;
    }
    Clearness::Day((ghi / e_ext).clamp(0.0, k_cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearSkySource {
    Computed,
    ExternalCsv,
}

/// Normalizer values keyed by timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearSkySeries {
    timestamps: Vec<DateTime<Utc>>,
    e_ext: Vec<f64>,
    source: ClearSkySource,
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

impl ClearSkySeries {
    /// Sorts by timestamp; duplicate timestamps keep the first value.
    pub fn new(pairs: Vec<(DateTime<Utc>, f64)>, source: ClearSkySource) -> Result<Self> {
        let mut pairs = pairs;
        if pairs.iter().any(|(_, e)| !(*e >= 0.0)) {
            return Err(IngestError::ClearSkyCsv("normalizer values must be >= 0".into()));
        }
        pairs.sort_by_key(|(t, _)| *t);
        pairs.dedup_by_key(|(t, _)| *t);
        let (timestamps, e_ext) = pairs.into_iter().unzip();
        Ok(Self {
            timestamps,
            e_ext,
            source,
        })
    }

    /// Extraterrestrial irradiance at every record of `series`.
    pub fn computed(series: &RecordSeries, solar_constant: f64) -> Self {
        let (timestamps, e_ext) = series
            .iter()
            .map(|r| (r.timestamp, compute_extraterrestrial(r.timestamp, r.zenith_deg, solar_constant)))
            .unzip();
        Self {
            timestamps,
            e_ext,
            source: ClearSkySource::Computed,
        }
    }

    /// Reads a `timestamp,e_ext` CSV with ISO-8601 UTC timestamps.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| IngestError::ClearSkyCsv(e.to_string()))?
            .clone();
        if headers.len() < 2 || &headers[0] != "timestamp" || &headers[1] != "e_ext" {
            return Err(IngestError::ClearSkyCsv(format!(
                "expected header timestamp,e_ext, found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut pairs = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| IngestError::ClearSkyCsv(e.to_string()))?;
            let line = i + 2;
            let t = parse_timestamp(&row[0])
                .ok_or_else(|| IngestError::ClearSkyCsv(format!("line {line}: bad timestamp {:?}", &row[0])))?;
            let e: f64 = row[1]
                .parse()
                .map_err(|_| IngestError::ClearSkyCsv(format!("line {line}: bad value {:?}", &row[1])))?;
            pairs.push((t, e));
        }
        Self::new(pairs, ClearSkySource::ExternalCsv)
    }

    pub fn source(&self) -> ClearSkySource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn value_at(&self, t: DateTime<Utc>) -> Option<f64> {
        self.timestamps.binary_search(&t).ok().map(|i| self.e_ext[i])
    }

    /// Values aligned 1:1 with `timestamps`.
    pub fn aligned(&self, timestamps: &[DateTime<Utc>]) -> Result<Vec<f64>> {
        timestamps
            .iter()
            .map(|&t| self.value_at(t).ok_or(IngestError::MisalignedClearSky(t)))
            .collect()
    }
}
