//! Benchmark runner: train on one year, calibrate on the next, evaluate on
//! the third, repeated per station, horizon and model; writes report tables,
//! a manifest and SVG charts.

mod config;
pub mod plot;
mod report;
mod run;

pub use config::{CalibratorKind, ClearSkySpec, ExperimentConfig, ModelKind, DATA_DIR_ENV};
pub use report::{
    emit_report, read_forecasts_csv, read_rows_csv, summarize, ForecastRow, InputFile,
    ReportRow, SummaryCell, ALL_STATIONS, FORECAST_LEVELS,
};
pub use run::{
    load_station, rng_for, run_experiment, sample_indices, solar_days, validate_data_dir, DataDirSummary,
    EvaluationReport, StationData, StationFileSummary,
};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("missing data for station {station}: {detail}")]
    MissingData { station: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{station}: {source}")]
    Ingest {
        station: String,
        #[source]
        source: crate::ingest::IngestError,
    },
    #[error(transparent)]
    Ngboost(#[from] crate::ngboost::NgboostError),
    #[error(transparent)]
    Baseline(#[from] crate::baselines::BaselineError),
    #[error(transparent)]
    Calibration(#[from] crate::calibrate::CalibrationError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Dist(#[from] crate::dist::DistError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report is empty")]
    EmptyReport,
    #[error("malformed report file: {0}")]
    MalformedReport(String),
    #[error(transparent)]
    Plot(#[from] plot::PlotError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
