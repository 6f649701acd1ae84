//! SURFRAD daily files (LV1.0 layout).
//!
//! Line 1 holds the station name, line 2 latitude, longitude and elevation.
//! Every following line is one observation with 48 whitespace-separated
//! columns: year, jday, month, day, hour, min, dt, zen, then 20
//! (value, qc) pairs starting with dw_solar and ending with pressure.

use super::{IngestError, Record, RecordSeries, Result};
use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Values at or below this are the file's missing-value sentinel (-9999.9).
pub const MISSING_SENTINEL: f64 = -9999.0;
const MISSING_OUT: f64 = -9999.9;

pub const COLUMNS: usize = 48;
const PAIR_START: usize = 8;
const PAIR_NAMES: [&str; 20] = [
    "dw_solar",
    "uw_solar",
    "direct_n",
    "diffuse",
    "dw_ir",
    "dw_casetemp",
    "dw_dometemp",
    "uw_ir",
    "uw_casetemp",
    "uw_dometemp",
    "uvb",
    "par",
    "netsolar",
    "netir",
    "totalnet",
    "temp",
    "rh",
    "windspd",
    "winddir",
    "pressure",
];

fn pair_index(name: &str) -> usize {
    let k = PAIR_NAMES.iter().position(|n| *n == name).unwrap();
    PAIR_START + 2 * k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationHeader {
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub elevation_m: f64,
}

/// Recoverable problem with one data row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the file.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDay {
    pub header: StationHeader,
    pub series: RecordSeries,
    pub row_errors: Vec<RowError>,
}

fn parse_header(name_line: &str, location_line: Option<&str>) -> Result<StationHeader> {
    let name = name_line.trim();
    if name.is_empty() {
        return Err(IngestError::MalformedHeader("missing station name".into()));
    }
    let location_line =
        location_line.ok_or_else(|| IngestError::MalformedHeader("missing location line".into()))?;
    let nums: Vec<f64> = location_line
        .split_whitespace()
        .take(3)
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| IngestError::MalformedHeader(format!("unreadable location line {location_line:?}")))?;
    if nums.len() < 3 {
        return Err(IngestError::MalformedHeader(format!(
            "expected latitude, longitude and elevation in {location_line:?}"
        )));
    }
    Ok(StationHeader {
        name: name.to_string(),
        latitude: nums[0],
        longitude: nums[1],
        elevation_m: nums[2],
    })
}

fn measured(value: f64, qc: u8) -> Option<f64> {
    if qc != 0 || value <= MISSING_SENTINEL || !value.is_finite() {
        None
    } else {
        Some(value)
    }
}

fn parse_row(line: &str) -> std::result::Result<Record, String> {
    let cols: Vec<&str> = line.split_whitespace().collect();
    if cols.len() < COLUMNS {
        return Err(format!("expected {COLUMNS} columns, found {}", cols.len()));
    }
    let int = |i: usize| -> std::result::Result<i64, String> {
        cols[i]
            .parse::<i64>()
            .map_err(|_| format!("column {} is not an integer: {:?}", i + 1, cols[i]))
    };
    let real = |i: usize| -> std::result::Result<f64, String> {
        cols[i]
            .parse::<f64>()
            .map_err(|_| format!("column {} is not a number: {:?}", i + 1, cols[i]))
    };
    let qc = |i: usize| -> std::result::Result<u8, String> {
        cols[i]
            .parse::<u8>()
            .map_err(|_| format!("column {} is not a qc flag: {:?}", i + 1, cols[i]))
    };
    let (year, month, day, hour, minute) = (int(0)?, int(2)?, int(3)?, int(4)?, int(5)?);
    let timestamp = NaiveDate::from_ymd_opt(year as i32, month as u32, day as u32)
        .and_then(|d| d.and_hms_opt(hour as u32, minute as u32, 0))
        .ok_or_else(|| format!("invalid date {year}-{month}-{day} {hour}:{minute}"))?
        .and_utc();
    let zenith_deg = real(7)?;
    if !(0.0..=180.0).contains(&zenith_deg) {
        return Err(format!("zenith {zenith_deg} outside [0, 180]"));
    }
    let field = |name: &str| -> std::result::Result<(Option<f64>, u8), String> {
        let i = pair_index(name);
        let (v, q) = (real(i)?, qc(i + 1)?);
        Ok((measured(v, q), q))
    };
    let (ghi, ghi_qc) = field("dw_solar")?;
    let (temp_c, temp_qc) = field("temp")?;
    let (rh_pct, rh_qc) = field("rh")?;
    let (wind_speed, ws_qc) = field("windspd")?;
    let (wind_dir_deg, wd_qc) = field("winddir")?;
    let (pressure_mb, p_qc) = field("pressure")?;
    Ok(Record {
        timestamp,
        zenith_deg,
        ghi,
        temp_c,
        rh_pct,
        wind_speed,
        wind_dir_deg,
        pressure_mb,
        qc: super::QcFlags {
            ghi: ghi_qc,
            temp: temp_qc,
            rh: rh_qc,
            wind_speed: ws_qc,
            wind_dir: wd_qc,
            pressure: p_qc,
        },
    })
}

/// Parses one daily file. Bad rows are collected in
/// [`ParsedDay::row_errors`] and skipped; header problems abort.
pub fn parse_surfrad_day(raw: &[u8]) -> Result<ParsedDay> {
    let text = String::from_utf8_lossy(raw);
    if text.trim().is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, name_line) = lines.next().ok_or(IngestError::EmptyFile)?;
    let header = parse_header(name_line, lines.next().map(|(_, l)| l))?;

    let mut records: Vec<Record> = Vec::new();
    let mut row_errors = Vec::new();
    for (idx, line) in lines {
        match parse_row(line) {
            Ok(rec) => {
                if let Some(prev) = records.last() {
                    if rec.timestamp <= prev.timestamp {
                        row_errors.push(RowError {
                            line: idx + 1,
                            message: format!(
                                "timestamp {} does not follow {}",
                                rec.timestamp, prev.timestamp
                            ),
                        });
                        continue;
                    }
                }
                records.push(rec);
            }
            Err(message) => row_errors.push(RowError {
                line: idx + 1,
                message,
            }),
        }
    }
    Ok(ParsedDay {
        header,
        series: RecordSeries::new(records)?,
        row_errors,
    })
}

fn push_pair(out: &mut String, value: Option<f64>, qc: u8) {
    let _ = write!(out, " {:8.1} {}", value.unwrap_or(MISSING_OUT), qc);
}

/// Renders a series back into the daily column layout. Columns not carried
/// by [`Record`] are written as missing.
pub fn render_surfrad_day(header: &StationHeader, series: &RecordSeries) -> String {
    let mut out = String::new();
    let _ = writeln!(out, " {}", header.name);
    let _ = writeln!(
        out,
        "{:8.2} {:8.2} {:5} m version 1",
        header.latitude, header.longitude, header.elevation_m
    );
    for rec in series.iter() {
        let t: DateTime<Utc> = rec.timestamp;
        let dt = t.hour() as f64 + t.minute() as f64 / 60.0;
        let _ = write!(
            out,
            "{} {:3} {:2} {:2} {:2} {:2} {:6.3} {:6.2}",
            t.year(),
            t.ordinal(),
            t.month(),
            t.day(),
            t.hour(),
            t.minute(),
            dt,
            rec.zenith_deg
        );
        for name in PAIR_NAMES {
            let (value, qc) = match name {
                "dw_solar" => (rec.ghi, rec.qc.ghi),
                "temp" => (rec.temp_c, rec.qc.temp),
                "rh" => (rec.rh_pct, rec.qc.rh),
                "windspd" => (rec.wind_speed, rec.qc.wind_speed),
                "winddir" => (rec.wind_dir_deg, rec.qc.wind_dir),
                "pressure" => (rec.pressure_mb, rec.qc.pressure),
                _ => (None, 1),
            };
            push_pair(&mut out, value, qc);
        }
        out.push('\n');
    }
    out
}
