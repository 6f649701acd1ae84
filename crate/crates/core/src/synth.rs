//! Synthetic station data in the SURFRAD daily layout.
//!
//! Sky conditions follow a three-regime Markov chain (clear, broken,
//! overcast) with an AR(1) clearness index inside each regime; GHI is that
//! index times the extraterrestrial irradiance. Temperature, humidity, wind
//! and pressure are smooth fields loosely coupled to cloudiness, so the
//! meteorological features carry some signal.

use crate::ingest::{
    compute_extraterrestrial, render_surfrad_day, QcFlags, Record, RecordSeries, StationHeader, SOLAR_CONSTANT,
};
use chrono::{DateTime, Datelike, Duration, NaiveDate, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr_lite::standard_normal;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// The seven SURFRAD stations: id, name, latitude, longitude, elevation (m).
pub const STATIONS: [(&str, &str, f64, f64, f64); 7] = [
    ("bon", "Bondville", 40.05, -88.37, 213.0),
    ("tbl", "Boulder", 40.13, -105.24, 1689.0),
    ("dra", "Desert Rock", 36.62, -116.02, 1007.0),
    ("fpk", "Fort Peck", 48.31, -105.10, 634.0),
    ("gwn", "Goodwin Creek", 34.25, -89.87, 98.0),
    ("psu", "Penn State", 40.72, -77.93, 376.0),
    ("sxf", "Sioux Falls", 43.73, -96.62, 473.0),
];

pub fn station_header(id: &str) -> Option<StationHeader> {
    STATIONS.iter().find(|s| s.0 == id).map(|s| StationHeader {
        name: s.1.to_string(),
        latitude: s.2,
        longitude: s.3,
        elevation_m: s.4,
    })
}

/// Solar zenith angle in degrees from the NOAA fractional-year
/// approximation (about 0.1 degree accuracy). Longitude is east-positive.
pub fn solar_zenith_deg(t: DateTime<Utc>, latitude: f64, longitude: f64) -> f64 {
    let hour = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let days_in_year = if NaiveDate::from_ymd_opt(t.year(), 12, 31).unwrap().ordinal() == 366 {
        366.0
    } else {
        365.0
    };
    let g = 2.0 * PI / days_in_year * (t.ordinal() as f64 - 1.0 + (hour - 12.0) / 24.0);
    let eqtime = 229.18
        * (0.000075 + 0.001868 * g.cos() - 0.032077 * g.sin() - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();
    let true_solar_minutes = hour * 60.0 + eqtime + 4.0 * longitude;
    let hour_angle = (true_solar_minutes / 4.0 - 180.0).to_radians();
    let lat = latitude.to_radians();
    let cos_zen = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    cos_zen.clamp(-1.0, 1.0).acos().to_degrees()
}

// rand 0.8 without rand_distr: Box-Muller is all we need.
mod rand_distr_lite {
    use rand::Rng;

    pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regime {
    Clear,
    Broken,
    Overcast,
}

impl Regime {
    fn mean_k(self) -> f64 {
        match self {
            Regime::Clear => 0.74,
            Regime::Broken => 0.48,
            Regime::Overcast => 0.22,
        }
    }

    fn volatility(self) -> f64 {
        match self {
            Regime::Clear => 0.012,
            Regime::Broken => 0.07,
            Regime::Overcast => 0.03,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub station_id: String,
    pub header: StationHeader,
    pub start: NaiveDate,
    pub days: u32,
    pub seed: u64,
    /// Probability that a day starts clear; the rest splits evenly.
    pub clear_bias: f64,
}

impl SynthConfig {
    pub fn for_station(id: &str, start: NaiveDate, days: u32, seed: u64) -> Option<Self> {
        let header = station_header(id)?;
        // drier sites see more clear days
        let clear_bias = match id {
            "dra" => 0.7,
            "tbl" | "fpk" => 0.5,
            _ => 0.4,
        };
        Some(Self {
            station_id: id.to_string(),
            header,
            start,
            days,
            seed,
            clear_bias,
        })
    }
}

fn draw_regime(rng: &mut ChaCha8Rng, clear_bias: f64) -> Regime {
    let u: f64 = rng.gen();
    if u < clear_bias {
        Regime::Clear
    } else if u < clear_bias + (1.0 - clear_bias) / 2.0 {
        Regime::Broken
    } else {
        Regime::Overcast
    }
}

/// One series per day at 5-minute cadence, 288 rows each.
pub fn generate(config: &SynthConfig) -> Vec<RecordSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h = &config.header;
    let mut regime = draw_regime(&mut rng, config.clear_bias);
    let mut k = regime.mean_k();
    let mut wind_dir: f64 = rng.gen_range(0.0..360.0);
    let mut pressure_anomaly = 0.0;
    let base_pressure = 1013.25 * (-h.elevation_m / 8434.0).exp();
    let mut out = Vec::with_capacity(config.days as usize);
    for d in 0..config.days {
        let date = config.start + Duration::days(d as i64);
        // day-to-day persistence of the weather regime
        if rng.gen::<f64>() < 0.45 {
            regime = draw_regime(&mut rng, config.clear_bias);
        }
        let season = (2.0 * PI * (date.ordinal() as f64 - 200.0) / 365.0).cos();
        let mut records = Vec::with_capacity(288);
        for step in 0..288 {
            let t = date.and_hms_opt(0, 0, 0).unwrap().and_utc() + Duration::minutes(5 * step);
            if rng.gen::<f64>() < 0.004 {
                regime = draw_regime(&mut rng, config.clear_bias);
            }
            let m = regime.mean_k();
            k = m + 0.96 * (k - m) + regime.volatility() * standard_normal(&mut rng);
            k = k.clamp(0.03, 1.05);

            let zenith = solar_zenith_deg(t, h.latitude, h.longitude);
            let e = compute_extraterrestrial(t, zenith, SOLAR_CONSTANT);
            let ghi = if e > 0.0 {
                k * e
            } else {
                // night-time sensor offset
                -1.5 + 0.5 * standard_normal(&mut rng)
            };
            let local_hour = (t.hour() as f64 + t.minute() as f64 / 60.0 + h.longitude / 15.0).rem_euclid(24.0);
            let diurnal = (2.0 * PI * (local_hour - 15.0) / 24.0).cos();
            let cloud = 1.0 - k;
            let temp = 12.0 + 12.0 * season + 6.0 * diurnal * (1.0 - 0.6 * cloud) + 0.3 * standard_normal(&mut rng);
            let rh = (55.0 - 15.0 * diurnal + 30.0 * cloud + 2.0 * standard_normal(&mut rng)).clamp(5.0, 100.0);
            let wind_speed = (2.5 + 2.0 * cloud + 1.0 * diurnal.max(0.0) + 0.5 * standard_normal(&mut rng)).max(0.0);
            wind_dir = (wind_dir + 4.0 * standard_normal(&mut rng)).rem_euclid(360.0);
            pressure_anomaly = 0.995 * pressure_anomaly + 0.08 * standard_normal(&mut rng) - 0.002 * cloud;
            let round1 = |v: f64| (v * 10.0).round() / 10.0;
            records.push(Record {
                timestamp: t,
                zenith_deg: (zenith * 100.0).round() / 100.0,
                ghi: Some(round1(ghi)),
                temp_c: Some(round1(temp)),
                rh_pct: Some(round1(rh)),
                wind_speed: Some(round1(wind_speed)),
                wind_dir_deg: Some(round1(wind_dir) % 360.0),
                pressure_mb: Some(round1(base_pressure + pressure_anomaly)),
                qc: QcFlags::default(),
            });
        }
        out.push(RecordSeries::new(records).expect("timestamps increase"));
    }
    out
}

/// `<dir>/<id>/<year>/<id><yy><jday>.dat`
pub fn day_file_path(dir: &Path, station_id: &str, date: NaiveDate) -> PathBuf {
    dir.join(station_id).join(format!("{}", date.year())).join(format!(
        "{}{:02}{:03}.dat",
        station_id,
        date.year() % 100,
        date.ordinal()
    ))
}

/// Generates and writes one file per day; returns the paths written.
pub fn write_station(dir: &Path, config: &SynthConfig) -> std::io::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for series in generate(config) {
        let date = series.records()[0].timestamp.date_naive();
        let path = day_file_path(dir, &config.station_id, date);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, render_surfrad_day(&config.header, &series))?;
        paths.push(path);
    }
    Ok(paths)
}
