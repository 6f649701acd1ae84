use super::config::{CalibratorKind, ModelKind};
use super::run::{sha256_hex, EvaluationReport};
use super::{HarnessError, Result};
use crate::ingest::Resolution;
use crate::metrics::{default_levels, VerificationRecord};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Quantile levels stored per forecast for fan charts.
pub const FORECAST_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub station: String,
    pub resolution: Resolution,
    pub horizon: usize,
    pub model: ModelKind,
    pub calibrator: CalibratorKind,
    pub repeat: usize,
    /// CRPS in W/m^2; calibration and sharpness in clearness-index units.
    pub record: VerificationRecord,
}

/// Test-period forecast quantiles in W/m^2 for one target time.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub station: String,
    pub model: ModelKind,
    pub calibrator: CalibratorKind,
    pub horizon: usize,
    pub target_time: DateTime<Utc>,
    pub e_ext: f64,
    pub observed_ghi: f64,
    pub quantiles: [f64; 9],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputFile {
    /// Relative to the data directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

/// Mean over repeats and horizons for one (station, model, calibrator).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub station: String,
    pub model: ModelKind,
    pub calibrator: CalibratorKind,
    pub mean_crps: f64,
    pub calibration_error: f64,
    pub sharpness: f64,
    pub rows: usize,
}

pub const ALL_STATIONS: &str = "all";

/// Per-station cells followed by cells pooled over every row (`"all"`).
pub fn summarize(rows: &[ReportRow]) -> Vec<SummaryCell> {
    let mut groups: BTreeMap<(String, ModelKind, CalibratorKind), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.station.clone(), r.model, r.calibrator)).or_default().push(r);
    }
    let mut pooled: BTreeMap<(ModelKind, CalibratorKind), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        pooled.entry((r.model, r.calibrator)).or_default().push(r);
    }
    let cell = |station: String, model, calibrator, rs: &[&ReportRow]| {
        let n = rs.len() as f64;
        SummaryCell {
            station,
            model,
            calibrator,
            mean_crps: rs.iter().map(|r| r.record.mean_crps).sum::<f64>() / n,
            calibration_error: rs.iter().map(|r| r.record.calibration_error).sum::<f64>() / n,
            sharpness: rs.iter().map(|r| r.record.sharpness).sum::<f64>() / n,
            rows: rs.len(),
        }
    };
    let mut out: Vec<SummaryCell> = groups
        .into_iter()
        .map(|((s, m, c), rs)| cell(s, m, c, &rs))
        .collect();
    let multi_station = out.iter().any(|c| c.station != out[0].station);
    if multi_station {
        out.extend(pooled.into_iter().map(|((m, c), rs)| cell(ALL_STATIONS.to_string(), m, c, &rs)));
    }
    out
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn level_header(p: f64) -> String {
    format!("cov_{p:.2}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = [
        "station",
        "resolution",
        "horizon",
        "horizon_minutes",
        "model",
        "calibrator",
        "repeat",
        "n",
        "mean_crps_wm2",
        "calibration_error",
        "sharpness_k",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(default_levels().into_iter().map(level_header));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.station.clone(),
            r.resolution.to_string(),
            r.horizon.to_string(),
            (r.horizon as i64 * r.resolution.step_minutes()).to_string(),
            r.model.to_string(),
            r.calibrator.to_string(),
            r.repeat.to_string(),
            r.record.n.to_string(),
            fmt_f(r.record.mean_crps),
            fmt_f(r.record.calibration_error),
            fmt_f(r.record.sharpness),
        ];
        rec.extend(r.record.level_curve.iter().map(|(_, hit)| fmt_f(*hit)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn present<T: Ord + Copy>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = items.collect();
    v.sort();
    v.dedup();
    v
}

/// Station x model table with one column per calibrator.
fn write_summary(path: &Path, cells: &[SummaryCell], value: fn(&SummaryCell) -> f64) -> Result<()> {
    let calibrators = present(cells.iter().map(|c| c.calibrator));
    let mut w = csv_writer(path)?;
    let mut header = vec!["station".to_string(), "model".to_string()];
    header.extend(calibrators.iter().map(|c| c.label().to_string()));
    w.write_record(&header)?;
    let mut table: BTreeMap<(usize, String, ModelKind), BTreeMap<CalibratorKind, f64>> = BTreeMap::new();
    for c in cells {
        let order = usize::from(c.station == ALL_STATIONS);
        table
            .entry((order, c.station.clone(), c.model))
            .or_default()
            .insert(c.calibrator, value(c));
    }
    for ((_, station, model), vals) in table {
        let mut rec = vec![station, model.label().to_string()];
        rec.extend(calibrators.iter().map(|c| vals.get(c).map(|v| fmt_f(*v)).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Uncalibrated CRPS per station and model, plus NGBoost's change relative
/// to MCM in percent.
fn write_comparison(path: &Path, cells: &[SummaryCell]) -> Result<()> {
    let none: Vec<&SummaryCell> = cells.iter().filter(|c| c.calibrator == CalibratorKind::None).collect();
    let models = present(none.iter().map(|c| c.model));
    let mut w = csv_writer(path)?;
    let mut header = vec!["station".to_string()];
    header.extend(models.iter().map(|m| m.label().to_string()));
    header.push("delta_pct".to_string());
    w.write_record(&header)?;
    let mut table: BTreeMap<(usize, String), BTreeMap<ModelKind, f64>> = BTreeMap::new();
    for c in none {
        table
            .entry((usize::from(c.station == ALL_STATIONS), c.station.clone()))
            .or_default()
            .insert(c.model, c.mean_crps);
    }
    for ((_, station), vals) in table {
        let mut rec = vec![station];
        rec.extend(models.iter().map(|m| vals.get(m).map(|v| fmt_f(*v)).unwrap_or_default()));
        let delta = match (vals.get(&ModelKind::Ngboost), vals.get(&ModelKind::Mcm)) {
            (Some(ngb), Some(mcm)) => fmt_f(100.0 * (ngb - mcm) / mcm),
            _ => String::new(),
        };
        rec.push(delta);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn write_by_horizon(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut groups: BTreeMap<(String, ModelKind, CalibratorKind, usize), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.station.clone(), r.model, r.calibrator, r.horizon))
            .or_default()
            .push(r);
    }
    let mut w = csv_writer(path)?;
    w.write_record([
        "station",
        "model",
        "calibrator",
        "horizon",
        "horizon_minutes",
        "mean_crps_wm2",
        "std_crps_wm2",
        "repeats",
    ])?;
    for ((station, model, calibrator, horizon), rs) in groups {
        let n = rs.len() as f64;
        let mean = rs.iter().map(|r| r.record.mean_crps).sum::<f64>() / n;
        let std = if rs.len() > 1 {
            (rs.iter().map(|r| (r.record.mean_crps - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        w.write_record([
            station,
            model.to_string(),
            calibrator.to_string(),
            horizon.to_string(),
            (horizon as i64 * rs[0].resolution.step_minutes()).to_string(),
            fmt_f(mean),
            fmt_f(std),
            rs.len().to_string(),
        ])?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn quantile_header(p: f64) -> String {
    format!("q{:02}", (p * 100.0).round() as u32)
}

fn write_forecasts(path: &Path, rows: &[ForecastRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["station", "model", "calibrator", "horizon", "target_time", "e_ext", "observed_ghi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(FORECAST_LEVELS.iter().map(|&p| quantile_header(p)));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.station.clone(),
            r.model.to_string(),
            r.calibrator.to_string(),
            r.horizon.to_string(),
            r.target_time.to_rfc3339_opts(SecondsFormat::Secs, true),
            fmt_f(r.e_ext),
            fmt_f(r.observed_ghi),
        ];
        rec.extend(r.quantiles.iter().map(|q| fmt_f(*q)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: BTreeMap<String, String>,
    config_sha256: String,
    rows: usize,
    inputs: &'a [InputFile],
    outputs: BTreeMap<String, String>,
}

/// Writes every report file into `out_dir` and returns their paths.
pub fn emit_report(report: &EvaluationReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let cells = summarize(&report.rows);
    let files: Vec<(&str, Box<dyn Fn(&Path) -> Result<()> + '_>)> = vec![
        ("rows.csv", Box::new(|p| write_rows(p, &report.rows))),
        ("summary.csv", Box::new(|p| write_summary(p, &cells, |c| c.mean_crps))),
        (
            "summary_calibration.csv",
            Box::new(|p| write_summary(p, &cells, |c| c.calibration_error)),
        ),
        ("summary_sharpness.csv", Box::new(|p| write_summary(p, &cells, |c| c.sharpness))),
        ("comparison.csv", Box::new(|p| write_comparison(p, &cells))),
        ("crps_by_horizon.csv", Box::new(|p| write_by_horizon(p, &report.rows))),
        ("forecasts.csv", Box::new(|p| write_forecasts(p, &report.forecasts))),
    ];
    let mut written = Vec::new();
    let mut outputs = BTreeMap::new();
    for (name, write) in files {
        let path = out_dir.join(name);
        write(&path)?;
        let bytes = std::fs::read(&path).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        outputs.insert(name.to_string(), sha256_hex(&bytes));
        written.push(path);
    }
    let canonical = report.config.canonical_text();
    let manifest = Manifest {
        tool: "solarcast",
        version: env!("CARGO_PKG_VERSION"),
        seed: report.config.seed,
        config: report.config.canonical().into_iter().collect(),
        config_sha256: sha256_hex(canonical.as_bytes()),
        rows: report.rows.len(),
        inputs: &report.inputs,
        outputs,
    };
    let path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(written)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Reader::from_reader(file))
}

fn field<'r>(rec: &'r csv::StringRecord, headers: &csv::StringRecord, name: &str) -> Result<&'r str> {
    let i = headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| HarnessError::MalformedReport(format!("missing column {name}")))?;
    rec.get(i)
        .ok_or_else(|| HarnessError::MalformedReport(format!("short record for {name}")))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| HarnessError::MalformedReport(format!("{what}: cannot parse {s:?}")))
}

fn parse_kind<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T> {
    s.parse().map_err(HarnessError::MalformedReport)
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers()?.clone();
    let levels: Vec<(f64, String)> = default_levels().into_iter().map(|p| (p, level_header(p))).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |name: &str| field(&rec, &headers, name);
        let mut curve = Vec::with_capacity(levels.len());
        for (p, name) in &levels {
            curve.push((*p, parse(f(name)?, name)?));
        }
        rows.push(ReportRow {
            station: f("station")?.to_string(),
            resolution: parse_kind(f("resolution")?)?,
            horizon: parse(f("horizon")?, "horizon")?,
            model: parse_kind(f("model")?)?,
            calibrator: parse_kind(f("calibrator")?)?,
            repeat: parse(f("repeat")?, "repeat")?,
            record: VerificationRecord {
                mean_crps: parse(f("mean_crps_wm2")?, "mean_crps_wm2")?,
                calibration_error: parse(f("calibration_error")?, "calibration_error")?,
                sharpness: parse(f("sharpness_k")?, "sharpness_k")?,
                n: parse(f("n")?, "n")?,
                level_curve: curve,
            },
        });
    }
    Ok(rows)
}

pub fn read_forecasts_csv(path: &Path) -> Result<Vec<ForecastRow>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers()?.clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |name: &str| field(&rec, &headers, name);
        let mut quantiles = [0.0; 9];
        for (q, &p) in quantiles.iter_mut().zip(FORECAST_LEVELS.iter()) {
            let name = quantile_header(p);
            *q = parse(f(&name)?, &name)?;
        }
        let t = f("target_time")?;
        rows.push(ForecastRow {
            station: f("station")?.to_string(),
            model: parse_kind(f("model")?)?,
            calibrator: parse_kind(f("calibrator")?)?,
            horizon: parse(f("horizon")?, "horizon")?,
            target_time: DateTime::parse_from_rfc3339(t)
                .map_err(|_| HarnessError::MalformedReport(format!("bad time {t:?}")))?
                .with_timezone(&Utc),
            e_ext: parse(f("e_ext")?, "e_ext")?,
            observed_ghi: parse(f("observed_ghi")?, "observed_ghi")?,
            quantiles,
        });
    }
    Ok(rows)
}
