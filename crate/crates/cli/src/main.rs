use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use solarcast::harness::plot::{self, CalibrationCurve, FanSeries};
use solarcast::harness::{
    emit_report, read_forecasts_csv, read_rows_csv, run_experiment, validate_data_dir, CalibratorKind,
    EvaluationReport, ExperimentConfig, ModelKind, DATA_DIR_ENV,
};
use solarcast::synth;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "solarcast", version, about = "Probabilistic solar irradiance forecasting benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, calibrate and evaluate every configured model; write report files.
    Run(RunArgs),
    /// Draw an SVG chart from a finished run.
    Plot {
        kind: PlotKind,
        #[command(flatten)]
        args: PlotArgs,
    },
    /// Parse every daily file under a data directory and report what was found.
    ValidateData {
        #[arg(long, env = DATA_DIR_ENV)]
        data_dir: PathBuf,
    },
    /// Write synthetic SURFRAD-format daily files.
    SynthData(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated station ids.
    #[arg(long)]
    stations: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Skip the SVG charts.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Fan,
    Calibration,
}

#[derive(Args)]
struct PlotArgs {
    /// rows.csv, forecasts.csv or a run output directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fan chart only; defaults to the first station in the file.
    #[arg(long)]
    station: Option<String>,
    #[arg(long, default_value = "ngboost")]
    model: String,
    #[arg(long, default_value = "none")]
    calibrator: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "bon")]
    stations: String,
    /// First day of each year's block, as MM-DD.
    #[arg(long, default_value = "06-01")]
    start: String,
    #[arg(long, default_value_t = 7)]
    days: u32,
    #[arg(long, value_delimiter = ',', default_value = "2016,2017,2018")]
    years: Vec<i32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = real_main() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Plot { kind, args } => plot_cmd(kind, &args),
        Command::ValidateData { data_dir } => validate(&data_dir),
        Command::SynthData(args) => synth_data(&args),
    }
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    let flags: [(&str, Option<String>); 5] = [
        ("stations", args.stations.clone()),
        ("resolution", args.resolution.clone()),
        ("seed", args.seed.map(|v| v.to_string())),
        ("jobs", args.jobs.map(|v| v.to_string())),
        ("data_dir", args.data_dir.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    let report = run_experiment(&cfg)?;
    let files = emit_report(&report, &args.out)?;
    for f in &files {
        log::info!("wrote {}", f.display());
    }
    if !args.no_plots {
        write_run_plots(&report, &args.out)?;
    }
    Ok(())
}

fn write_run_plots(report: &EvaluationReport, out: &Path) -> Result<()> {
    let curves = plot::curves_from_rows(&report.rows);
    let path = out.join("calibration.svg");
    plot::emit_calibration_curves(&curves, "Calibration curves", &path)?;
    log::info!("wrote {}", path.display());
    for station in &report.config.stations {
        for &model in &report.config.models {
            let series = FanSeries::from_forecast_rows(&report.forecasts, station, model, CalibratorKind::None);
            if series.is_empty() {
                continue;
            }
            let path = out.join(format!("fan_{station}_{}.svg", model.key()));
            plot::emit_fan_chart(&series, &fan_title(station, model), &path)?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn fan_title(station: &str, model: ModelKind) -> String {
    format!("{} forecasts, {station}", model.label())
}

fn sibling(input: &Path, name: &str) -> PathBuf {
    if input.is_dir() {
        input.join(name)
    } else if input.file_name().is_some_and(|f| f == name) {
        input.to_path_buf()
    } else {
        input.with_file_name(name)
    }
}

fn plot_cmd(kind: PlotKind, args: &PlotArgs) -> Result<()> {
    match kind {
        PlotKind::Calibration => {
            let rows = read_rows_csv(&sibling(&args.input, "rows.csv"))?;
            let curves: Vec<CalibrationCurve> = plot::curves_from_rows(&rows);
            plot::emit_calibration_curves(&curves, "Calibration curves", &args.out)?;
        }
        PlotKind::Fan => {
            let path = sibling(&args.input, "forecasts.csv");
            let rows = read_forecasts_csv(&path)?;
            let model: ModelKind = args.model.parse().map_err(anyhow::Error::msg)?;
            let calibrator: CalibratorKind = args.calibrator.parse().map_err(anyhow::Error::msg)?;
            let station = match &args.station {
                Some(s) => s.clone(),
                None => match rows.first() {
                    Some(r) => r.station.clone(),
                    None => bail!("{} has no forecasts", path.display()),
                },
            };
            let series = FanSeries::from_forecast_rows(&rows, &station, model, calibrator);
            plot::emit_fan_chart(&series, &fan_title(&station, model), &args.out)?;
        }
    }
    log::info!("wrote {}", args.out.display());
    Ok(())
}

fn validate(dir: &Path) -> Result<()> {
    let summary = validate_data_dir(dir)?;
    if summary.stations.is_empty() {
        bail!("no station directories under {}", dir.display());
    }
    for s in &summary.stations {
        let span = match (s.first, s.last) {
            (Some(a), Some(b)) => format!("{a} .. {b}"),
            _ => "no records".to_string(),
        };
        println!("{}: {} files, {} records, {span}", s.station, s.files, s.records);
        for (year, n) in &s.records_per_year {
            println!("  {year}: {n} records");
        }
        for (file, problem) in &s.problems {
            println!("  problem: {file}: {problem}");
        }
    }
    if !summary.is_clean() {
        bail!("data directory has problems");
    }
    Ok(())
}

fn synth_data(args: &SynthArgs) -> Result<()> {
    for station in args.stations.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        for &year in &args.years {
            let start = NaiveDate::parse_from_str(&format!("{year}-{}", args.start), "%Y-%m-%d")
                .with_context(|| format!("bad --start {:?}", args.start))?;
            // distinct weather per station and year
            let idx = synth::STATIONS.iter().position(|s| s.0 == station).unwrap_or(0) as u64;
            let seed = args.seed ^ ((year as u64) << 8) ^ idx;
            let cfg = synth::SynthConfig::for_station(station, start, args.days, seed)
                .with_context(|| format!("unknown station {station:?}"))?;
            let files = synth::write_station(&args.out, &cfg)
                .with_context(|| format!("writing {station} {year}"))?;
            log::info!("{station} {year}: {} files", files.len());
        }
    }
    Ok(())
}
