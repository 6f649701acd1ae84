//! Fan charts and calibration curves as standalone SVG.
//!
//! Each chart has a numeric stage (bands, projected points) that tests can
//! inspect, and a rendering stage that only formats those numbers.

use super::config::{CalibratorKind, ModelKind};
use super::report::{ForecastRow, ReportRow, FORECAST_LEVELS};
use crate::dist::{Predictive, PredictiveDistribution};
use chrono::{DateTime, Utc};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot in the requested window")]
    EmptyWindow,
    #[error("no calibration curves given")]
    NoCurves,
    #[error("curve {label:?} has value {value} outside [0, 1]")]
    OutOfRange { label: String, value: f64 },
    #[error("{times} times, {predictions} predictions, {observations} observations")]
    LengthMismatch {
        times: usize,
        predictions: usize,
        observations: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PlotError>;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Forecast quantiles at [`FORECAST_LEVELS`] over a time window.
#[derive(Debug, Clone, PartialEq)]
pub struct FanSeries {
    pub times: Vec<DateTime<Utc>>,
    pub quantiles: Vec<[f64; 9]>,
    pub observed: Vec<f64>,
}

impl FanSeries {
    pub fn from_predictions(
        times: &[DateTime<Utc>],
        predictions: &[PredictiveDistribution],
        observed: &[f64],
    ) -> Result<Self> {
        if times.len() != predictions.len() || times.len() != observed.len() {
            return Err(PlotError::LengthMismatch {
                times: times.len(),
                predictions: predictions.len(),
                observations: observed.len(),
            });
        }
        let quantiles = predictions
            .iter()
            .map(|d| {
                let mut q = [0.0; 9];
                for (v, &p) in q.iter_mut().zip(FORECAST_LEVELS.iter()) {
                    *v = d.quantile_unchecked(p);
                }
                q
            })
            .collect();
        Ok(Self {
            times: times.to_vec(),
            quantiles,
            observed: observed.to_vec(),
        })
    }

    /// Rows for one station, model and calibrator, in time order.
    pub fn from_forecast_rows(
        rows: &[ForecastRow],
        station: &str,
        model: ModelKind,
        calibrator: CalibratorKind,
    ) -> Self {
        let mut picked: Vec<&ForecastRow> = rows
            .iter()
            .filter(|r| r.station == station && r.model == model && r.calibrator == calibrator)
            .collect();
        picked.sort_by_key(|r| r.target_time);
        Self {
            times: picked.iter().map(|r| r.target_time).collect(),
            quantiles: picked.iter().map(|r| r.quantiles).collect(),
            observed: picked.iter().map(|r| r.observed_ghi).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Central interval between two quantile levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FanBand {
    pub lower_level: f64,
    pub upper_level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Nested bands 10-90, 20-80, 30-70, 40-60, widest first.
pub fn fan_bands(series: &FanSeries) -> Vec<FanBand> {
    (0..4)
        .map(|j| FanBand {
            lower_level: FORECAST_LEVELS[j],
            upper_level: FORECAST_LEVELS[8 - j],
            lower: series.quantiles.iter().map(|q| q[j]).collect(),
            upper: series.quantiles.iter().map(|q| q[8 - j]).collect(),
        })
        .collect()
}

pub fn fan_median(series: &FanSeries) -> Vec<f64> {
    series.quantiles.iter().map(|q| q[4]).collect()
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + if self.x1 > self.x0 { (v - self.x0) / (self.x1 - self.x0) * w } else { w / 2.0 }
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        HEIGHT - MARGIN_BOTTOM - if self.y1 > self.y0 { (v - self.y0) / (self.y1 - self.y0) * h } else { h / 2.0 }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str, y_ticks: &[f64], x_ticks: &[(f64, String)]) {
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" fill="none" stroke="black"/>"#
    );
    for &t in y_ticks {
        let y = frame.y(t);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            left - 4.0,
            left - 7.0,
            y + 4.0,
            trim_num(t)
        );
    }
    for (t, label) in x_ticks {
        let x = frame.x(*t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            bottom + 4.0,
            bottom + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    );
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn nice_step(range: f64, target_ticks: f64) -> f64 {
    let raw = (range / target_ticks).max(f64::MIN_POSITIVE);
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let f = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    f * mag
}

/// Splits the series wherever consecutive times are further apart than
/// twice the typical spacing (overnight gaps), so bands are not bridged.
fn segments(times: &[f64]) -> Vec<std::ops::Range<usize>> {
    if times.len() < 2 {
        return vec![0..times.len()];
    }
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let typical = gaps[gaps.len() / 2];
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..times.len() {
        if times[i] - times[i - 1] > 2.0 * typical {
            out.push(start..i);
            start = i;
        }
    }
    out.push(start..times.len());
    out
}

pub fn render_fan_svg(series: &FanSeries, title: &str) -> Result<String> {
    if series.is_empty() {
        return Err(PlotError::EmptyWindow);
    }
    let xs: Vec<f64> = series.times.iter().map(|t| t.timestamp() as f64).collect();
    let bands = fan_bands(series);
    let median = fan_median(series);
    let lo = bands[0]
        .lower
        .iter()
        .chain(&series.observed)
        .fold(f64::INFINITY, |a, &b| a.min(b))
        .min(0.0);
    let hi = bands[0]
        .upper
        .iter()
        .chain(&series.observed)
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let step = nice_step(hi - lo, 6.0);
    let frame = Frame {
        x0: xs[0],
        x1: *xs.last().unwrap(),
        y0: (lo / step).floor() * step,
        y1: ((hi / step).ceil() * step).max((lo / step).floor() * step + step),
    };

    let mut out = String::new();
    svg_open(&mut out, title);
    let y_ticks: Vec<f64> = {
        let mut v = Vec::new();
        let mut t = frame.y0;
        while t <= frame.y1 + 1e-9 * step {
            v.push(t);
            t += step;
        }
        v
    };
    let day = 86_400.0;
    let mut x_ticks = Vec::new();
    let mut t = (frame.x0 / day).ceil() * day;
    while t <= frame.x1 {
        let label = DateTime::<Utc>::from_timestamp(t as i64, 0)
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_default();
        x_ticks.push((t, label));
        t += day;
    }
    axes(&mut out, &frame, "time (UTC)", "GHI (W/m²)", &y_ticks, &x_ticks);

    let opacity = [0.18, 0.3, 0.42, 0.55];
    for seg in segments(&xs) {
        for (band, alpha) in bands.iter().zip(opacity) {
            let mut pts = String::new();
            for i in seg.clone() {
                let _ = write!(pts, "{:.2},{:.2} ", frame.x(xs[i]), frame.y(band.upper[i]));
            }
            for i in seg.clone().rev() {
                let _ = write!(pts, "{:.2},{:.2} ", frame.x(xs[i]), frame.y(band.lower[i]));
            }
            let _ = writeln!(
                out,
                r##"<polygon class="band" data-levels="{}-{}" points="{}" fill="#1f5fa8" fill-opacity="{alpha}" stroke="none"/>"##,
                band.lower_level,
                band.upper_level,
                pts.trim_end()
            );
        }
        let line = |values: &[f64]| -> String {
            seg.clone()
                .map(|i| format!("{:.2},{:.2}", frame.x(xs[i]), frame.y(values[i])))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(
            out,
            r##"<polyline class="median" points="{}" fill="none" stroke="#0b2f5b" stroke-width="1.2"/>"##,
            line(&median)
        );
        let _ = writeln!(
            out,
            r##"<polyline class="observed" points="{}" fill="none" stroke="#d0401b" stroke-width="1.4"/>"##,
            line(&series.observed)
        );
    }
    let _ = writeln!(
        out,
        r##"<g transform="translate({},{})"><rect width="12" height="12" fill="#1f5fa8" fill-opacity="0.5"/><text x="18" y="10">10–90% forecast bands</text><line x1="170" y1="6" x2="190" y2="6" stroke="#d0401b" stroke-width="1.4"/><text x="196" y="10">observed</text></g>"##,
        MARGIN_LEFT + 10.0,
        MARGIN_TOP + 6.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| PlotError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_fan_chart(series: &FanSeries, title: &str, path: &Path) -> Result<()> {
    write_file(path, &render_fan_svg(series, title)?)
}

/// Nominal level vs. observed frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Average coverage curve per (model, calibrator) over all rows.
pub fn curves_from_rows(rows: &[ReportRow]) -> Vec<CalibrationCurve> {
    let mut groups: BTreeMap<(ModelKind, CalibratorKind), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.model, r.calibrator)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((m, c), rs)| {
            let n = rs.len() as f64;
            let points = rs[0]
                .record
                .level_curve
                .iter()
                .enumerate()
                .map(|(j, &(p, _))| (p, rs.iter().map(|r| r.record.level_curve[j].1).sum::<f64>() / n))
                .collect();
            CalibrationCurve {
                label: format!("{} / {}", m.label(), c.label()),
                points,
            }
        })
        .collect()
}

fn calibration_frame() -> Frame {
    Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    }
}

/// Pixel coordinates of a curve as drawn by [`render_calibration_svg`].
pub fn project_curve(curve: &CalibrationCurve) -> Vec<(f64, f64)> {
    let f = calibration_frame();
    curve.points.iter().map(|&(p, q)| (f.x(p), f.y(q))).collect()
}

pub fn validate_curves(curves: &[CalibrationCurve]) -> Result<()> {
    if curves.is_empty() {
        return Err(PlotError::NoCurves);
    }
    for c in curves {
        if let Some(&(p, q)) = c.points.iter().find(|(p, q)| !(0.0..=1.0).contains(p) || !(0.0..=1.0).contains(q)) {
            let value = if (0.0..=1.0).contains(&p) { q } else { p };
            return Err(PlotError::OutOfRange {
                label: c.label.clone(),
                value,
            });
        }
    }
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub fn render_calibration_svg(curves: &[CalibrationCurve], title: &str) -> Result<String> {
    validate_curves(curves)?;
    let frame = calibration_frame();
    let mut out = String::new();
    svg_open(&mut out, title);
    let ticks: Vec<f64> = (0..=5).map(|i| i as f64 / 5.0).collect();
    let x_ticks: Vec<(f64, String)> = ticks.iter().map(|&t| (t, trim_num(t))).collect();
    axes(&mut out, &frame, "nominal level", "observed frequency", &ticks, &x_ticks);
    let _ = writeln!(
        out,
        r##"<polyline class="diagonal" points="{:.2},{:.2} {:.2},{:.2}" fill="none" stroke="#888" stroke-dasharray="4 3"/>"##,
        frame.x(0.0),
        frame.y(0.0),
        frame.x(1.0),
        frame.y(1.0)
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = project_curve(c).iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="curve" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            escape(&c.label),
            pts.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 16.0 * i as f64;
        let lx = MARGIN_LEFT + 14.0;
        let _ = writeln!(
            out,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&c.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_calibration_curves(curves: &[CalibrationCurve], title: &str, path: &Path) -> Result<()> {
    write_file(path, &render_calibration_svg(curves, title)?)
}
