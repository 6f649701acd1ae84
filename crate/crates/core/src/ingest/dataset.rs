use super::clearsky::{clearness_index_with, DEFAULT_DAYTIME_THRESHOLD, DEFAULT_K_CAP};
use super::{ClearSkySeries, IngestError, QcFlags, Record, RecordSeries, Result};
use chrono::{DateTime, Duration, DurationRound, Timelike, Utc};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

pub const N_LAGS: usize = 5;
pub const N_FEATURES: usize = 8 + N_LAGS;
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "rh_pct",
    "wind_speed",
    "wind_dir_deg",
    "pressure_mb",
    "tod_sin",
    "tod_cos",
    "zenith_deg",
    "temp_c",
    "ghi_lag0",
    "ghi_lag1",
    "ghi_lag2",
    "ghi_lag3",
    "ghi_lag4",
];

const BASE_STEP_MINUTES: i64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// 5-minute steps.
    IntraHourly,
    Hourly,
}

impl Resolution {
    pub fn step_minutes(self) -> i64 {
        match self {
            Resolution::IntraHourly => BASE_STEP_MINUTES,
            Resolution::Hourly => 60,
        }
    }

    /// Horizons the benchmark evaluates, in steps: 5..60 min or 1..6 h.
    pub fn default_horizons(self) -> Vec<usize> {
        match self {
            Resolution::IntraHourly => (1..=12).collect(),
            Resolution::Hourly => (1..=6).collect(),
        }
    }

    pub fn max_horizon(self) -> usize {
        match self {
            Resolution::IntraHourly => 12,
            Resolution::Hourly => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::IntraHourly => "intra_hourly",
            Resolution::Hourly => "hourly",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intra_hourly" | "intra-hourly" | "5min" | "intra" => Ok(Resolution::IntraHourly),
            "hourly" | "1h" => Ok(Resolution::Hourly),
            other => Err(format!("unknown resolution {other:?}")),
        }
    }
}

/// A forecast task: resolution plus horizon in steps of that resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Task {
    pub resolution: Resolution,
    pub horizon: usize,
}

impl Task {
    pub fn new(resolution: Resolution, horizon: usize) -> Self {
        Self { resolution, horizon }
    }

    pub fn horizon_minutes(&self) -> i64 {
        self.horizon as i64 * self.resolution.step_minutes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub k_cap: f64,
    pub daytime_threshold: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            k_cap: DEFAULT_K_CAP,
            daytime_threshold: DEFAULT_DAYTIME_THRESHOLD,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn circular_mean_deg(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for v in values {
        let r = v.to_radians();
        s += r.sin();
        c += r.cos();
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let deg = s.atan2(c).to_degrees().rem_euclid(360.0);
    // rem_euclid can round up to exactly 360
    Some(if deg >= 360.0 { 0.0 } else { deg })
}

fn floor_to_step(t: DateTime<Utc>, minutes: i64) -> DateTime<Utc> {
    t.duration_trunc(Duration::minutes(minutes)).expect("in-range timestamp")
}

/// Averages records into 5-minute bins labelled by the start of the bin.
/// Each field is the mean of its valid values (wind direction uses a
/// circular mean); a field with no valid value stays missing. Series that
/// are already on the 5-minute grid pass through unchanged.
pub fn resample_five_minute(series: &RecordSeries) -> RecordSeries {
    let mut bins: BTreeMap<DateTime<Utc>, Vec<&Record>> = BTreeMap::new();
    for r in series.iter() {
        bins.entry(floor_to_step(r.timestamp, BASE_STEP_MINUTES)).or_default().push(r);
    }
    let records = bins
        .into_iter()
        .map(|(timestamp, rs)| {
            if rs.len() == 1 {
                return Record {
                    timestamp,
                    ..rs[0].clone()
                };
            }
            let avg = |f: fn(&Record) -> Option<f64>| mean(rs.iter().filter_map(|r| f(r)));
            let flag = |present: bool, f: fn(&QcFlags) -> u8| {
                if present {
                    0
                } else {
                    rs.iter().map(|r| f(&r.qc)).max().unwrap_or(0)
                }
            };
            let ghi = avg(|r| r.ghi);
            let temp_c = avg(|r| r.temp_c);
            let rh_pct = avg(|r| r.rh_pct);
            let wind_speed = avg(|r| r.wind_speed);
            let wind_dir_deg = circular_mean_deg(rs.iter().filter_map(|r| r.wind_dir_deg));
            let pressure_mb = avg(|r| r.pressure_mb);
            Record {
                timestamp,
                zenith_deg: mean(rs.iter().map(|r| r.zenith_deg)).unwrap_or(90.0),
                ghi,
                temp_c,
                rh_pct,
                wind_speed,
                wind_dir_deg,
                pressure_mb,
                qc: QcFlags {
                    ghi: flag(ghi.is_some(), |q| q.ghi),
                    temp: flag(temp_c.is_some(), |q| q.temp),
                    rh: flag(rh_pct.is_some(), |q| q.rh),
                    wind_speed: flag(wind_speed.is_some(), |q| q.wind_speed),
                    wind_dir: flag(wind_dir_deg.is_some(), |q| q.wind_dir),
                    pressure: flag(pressure_mb.is_some(), |q| q.pressure),
                },
            }
        })
        .collect();
    RecordSeries(records)
}

/// One point of a regular time grid. `k` is `None` at night or when the
/// irradiance or normalizer is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub timestamp: DateTime<Utc>,
    pub ghi: Option<f64>,
    pub e_ext: Option<f64>,
    pub k: Option<f64>,
    pub zenith_deg: Option<f64>,
    pub temp_c: Option<f64>,
    pub rh_pct: Option<f64>,
    pub wind_speed: Option<f64>,
    pub wind_dir_deg: Option<f64>,
    pub pressure_mb: Option<f64>,
}

impl GridPoint {
    fn empty(timestamp: DateTime<Utc>) -> Self {
        Self {
            timestamp,
            ghi: None,
            e_ext: None,
            k: None,
            zenith_deg: None,
            temp_c: None,
            rh_pct: None,
            wind_speed: None,
            wind_dir_deg: None,
            pressure_mb: None,
        }
    }
}

/// A gap-free time grid at one resolution. Missing observations are kept as
/// points with `None` fields so that index arithmetic equals time arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionGrid {
    pub resolution: Resolution,
    pub points: Vec<GridPoint>,
}

impl ResolutionGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        self.points.iter().map(|p| p.timestamp).collect()
    }

    pub fn clearness(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.k).collect()
    }

    pub fn index_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let first = self.points.first()?.timestamp;
        let step = self.resolution.step_minutes();
        let minutes = (t - first).num_minutes();
        if t < first || minutes % step != 0 || (t - first).num_seconds() % 60 != 0 {
            return None;
        }
        let i = (minutes / step) as usize;
        (i < self.points.len()).then_some(i)
    }
}

fn five_minute_grid(
    series: &RecordSeries,
    clearsky: &ClearSkySeries,
    config: &DatasetConfig,
) -> Result<Vec<GridPoint>> {
    let resampled = resample_five_minute(series);
    let (Some(first), Some(last)) = (resampled.0.first(), resampled.0.last()) else {
        return Ok(Vec::new());
    };
    let n = ((last.timestamp - first.timestamp).num_minutes() / BASE_STEP_MINUTES) as usize + 1;
    let start = first.timestamp;
    let mut points: Vec<GridPoint> = (0..n)
        .map(|i| GridPoint::empty(start + Duration::minutes(i as i64 * BASE_STEP_MINUTES)))
        .collect();
    for r in resampled.iter() {
        let i = ((r.timestamp - start).num_minutes() / BASE_STEP_MINUTES) as usize;
        let e = clearsky
            .value_at(r.timestamp)
            .ok_or(IngestError::MisalignedClearSky(r.timestamp))?;
        let p = &mut points[i];
        p.ghi = r.ghi;
        p.e_ext = Some(e);
        p.k = r
            .ghi
            .and_then(|g| clearness_index_with(g, e, config.k_cap, config.daytime_threshold).value());
        p.zenith_deg = Some(r.zenith_deg);
        p.temp_c = r.temp_c;
        p.rh_pct = r.rh_pct;
        p.wind_speed = r.wind_speed;
        p.wind_dir_deg = r.wind_dir_deg;
        p.pressure_mb = r.pressure_mb;
    }
    Ok(points)
}

/// The hourly point at `T` averages the twelve 5-minute points in
/// `(T - 1h, T]`; irradiance and normalizer must be present at all twelve.
/// The hourly clearness index is the ratio of the two means, so target GHI
/// equals k times the hourly normalizer. Meteorology is taken at `T`.
fn hourly_grid(five: &[GridPoint], config: &DatasetConfig) -> Vec<GridPoint> {
    const PER_HOUR: usize = 12;
    // first index whose label sits on the hour
    let Some(offset) = (0..five.len().min(PER_HOUR)).find(|&i| five[i].timestamp.minute() == 0) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut i = offset;
    while i < five.len() {
        let mut p = five[i].clone();
        let window = if i + 1 >= PER_HOUR { Some(&five[i + 1 - PER_HOUR..=i]) } else { None };
        let (ghi, e) = match window {
            Some(w) => {
                let g: Option<Vec<f64>> = w.iter().map(|q| q.ghi).collect();
                let e: Option<Vec<f64>> = w.iter().map(|q| q.e_ext).collect();
                (
                    g.map(|g| g.iter().sum::<f64>() / PER_HOUR as f64),
                    e.map(|e| e.iter().sum::<f64>() / PER_HOUR as f64),
                )
            }
            None => (None, None),
        };
        p.ghi = ghi;
        p.e_ext = e;
        p.k = match (ghi, e) {
            (Some(g), Some(e)) => clearness_index_with(g, e, config.k_cap, config.daytime_threshold).value(),
            _ => None,
        };
        out.push(p);
        i += PER_HOUR;
    }
    out
}

/// Builds the regular grid for `resolution`. `clearsky` must hold a value at
/// every 5-minute label present in the (resampled) records.
pub fn build_grid(
    series: &RecordSeries,
    clearsky: &ClearSkySeries,
    resolution: Resolution,
    config: &DatasetConfig,
) -> Result<ResolutionGrid> {
    let five = five_minute_grid(series, clearsky, config)?;
    let points = match resolution {
        Resolution::IntraHourly => five,
        Resolution::Hourly => hourly_grid(&five, config),
    };
    Ok(ResolutionGrid { resolution, points })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub station: String,
    pub resolution: Resolution,
    /// In steps of `resolution`.
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedDataset {
    pub features: Array2<f64>,
    pub targets_k: Vec<f64>,
    pub targets_e_ext: Vec<f64>,
    pub target_ghi: Vec<f64>,
    pub issue_times: Vec<DateTime<Utc>>,
    pub target_times: Vec<DateTime<Utc>>,
    /// Grid indices of issue and target times, for history lookups.
    pub issue_index: Vec<usize>,
    pub target_index: Vec<usize>,
    pub meta: DatasetMeta,
}

impl SupervisedDataset {
    pub fn len(&self) -> usize {
        self.targets_k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets_k.is_empty()
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            features: self.features.select(ndarray::Axis(0), indices),
            targets_k: pick(&self.targets_k),
            targets_e_ext: pick(&self.targets_e_ext),
            target_ghi: pick(&self.target_ghi),
            issue_times: indices.iter().map(|&i| self.issue_times[i]).collect(),
            target_times: indices.iter().map(|&i| self.target_times[i]).collect(),
            issue_index: indices.iter().map(|&i| self.issue_index[i]).collect(),
            target_index: indices.iter().map(|&i| self.target_index[i]).collect(),
            meta: self.meta.clone(),
        }
    }
}

fn feature_row(grid: &ResolutionGrid, i: usize) -> Option<[f64; N_FEATURES]> {
    if i + 1 < N_LAGS {
        return None;
    }
    let p = &grid.points[i];
    let t = p.timestamp;
    let day_fraction = (t.num_seconds_from_midnight() as f64) / 86_400.0;
    let angle = 2.0 * PI * day_fraction;
    let mut row = [0.0; N_FEATURES];
    let met = [
        p.rh_pct?,
        p.wind_speed?,
        p.wind_dir_deg?,
        p.pressure_mb?,
        angle.sin(),
        angle.cos(),
        p.zenith_deg?,
        p.temp_c?,
    ];
    row[..8].copy_from_slice(&met);
    for lag in 0..N_LAGS {
        row[8 + lag] = grid.points[i - lag].ghi?;
    }
    Some(row)
}

/// Turns a grid into supervised rows for `horizon` steps ahead. A row issued
/// at grid index `i` needs five lags `i, i-1, .., i-4`, every meteorological
/// input at `i`, and a daytime target at `i + horizon`.
pub fn dataset_from_grid(
    grid: &ResolutionGrid,
    station: &str,
    horizon: usize,
    config: &DatasetConfig,
) -> Result<SupervisedDataset> {
    let mut data = Vec::new();
    let (mut ks, mut es, mut ghis) = (Vec::new(), Vec::new(), Vec::new());
    let (mut issue_times, mut target_times, mut issue_index, mut target_index) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..grid.len().saturating_sub(horizon) {
        let j = i + horizon;
        let target = &grid.points[j];
        let (Some(k), Some(e)) = (target.k, target.e_ext) else {
            continue;
        };
        if !(e > config.daytime_threshold) {
            continue;
        }
        let Some(row) = feature_row(grid, i) else {
            continue;
        };
        data.extend_from_slice(&row);
        ks.push(k);
        es.push(e);
        ghis.push(k * e);
        issue_times.push(grid.points[i].timestamp);
        target_times.push(target.timestamp);
        issue_index.push(i);
        target_index.push(j);
    }
    if ks.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let features = Array2::from_shape_vec((ks.len(), N_FEATURES), data).expect("row-major shape");
    Ok(SupervisedDataset {
        features,
        targets_k: ks,
        targets_e_ext: es,
        target_ghi: ghis,
        issue_times,
        target_times,
        issue_index,
        target_index,
        meta: DatasetMeta {
            station: station.to_string(),
            resolution: grid.resolution,
            horizon,
        },
    })
}

/// Merges `records`, builds the grid for the task's resolution and extracts
/// the supervised rows.
pub fn build_dataset(
    records: &[RecordSeries],
    clearsky: &ClearSkySeries,
    station: &str,
    task: Task,
    config: &DatasetConfig,
) -> Result<SupervisedDataset> {
    let merged = RecordSeries::merge(records);
    let grid = build_grid(&merged, clearsky, task.resolution, config)?;
    dataset_from_grid(&grid, station, task.horizon, config)
}
