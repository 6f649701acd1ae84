use super::config::{CalibratorKind, ClearSkySpec, ExperimentConfig, ModelKind};
use super::report::{ForecastRow, InputFile, ReportRow, FORECAST_LEVELS};
use super::{HarnessError, Result};
use crate::baselines::{peen_forecast, BaselineError, ChpModel, McmModel};
use crate::calibrate::{apply_calibrator, crude_fit, kuleshov_fit, mle_fit, Calibrator, DEFAULT_CRUDE_GRID, DEFAULT_KULESHOV_GRID};
use crate::dist::{GaussianPrediction, Predictive, PredictiveDistribution};
use crate::ingest::{
    build_grid, dataset_from_grid, parse_surfrad_day, resample_five_minute, ClearSkySeries, DatasetConfig,
    IngestError, RecordSeries, ResolutionGrid, RowError, StationHeader, SupervisedDataset,
};
use crate::metrics::{default_levels, verify, CalibrationErrorKind};
use crate::ngboost::ngboost_fit_dataset;
use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use walkdir::WalkDir;

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Independent RNG stream for one (station, horizon, stream, repeat) cell.
pub fn rng_for(seed: u64, station: &str, horizon: usize, stream: &str, repeat: usize) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("{seed}|{station}|{horizon}|{stream}|{repeat}").as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// `min(size, n)` distinct indices in ascending order.
pub fn sample_indices(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Vec<usize> {
    let mut idx = index::sample(rng, n, size.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone)]
pub struct StationData {
    pub id: String,
    pub header: StationHeader,
    /// One grid per configured year.
    pub grids: BTreeMap<i32, ResolutionGrid>,
    pub inputs: Vec<InputFile>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn day_files(dir: &Path) -> Vec<PathBuf> {
    WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("dat")))
        .collect()
}

fn relative_name(base: &Path, path: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Parses every daily file of one station and builds the per-year grids.
pub fn load_station(config: &ExperimentConfig, id: &str) -> Result<StationData> {
    let dir = config.data_dir.join(id);
    let missing = |detail: String| HarnessError::MissingData {
        station: id.to_string(),
        detail,
    };
    if !dir.is_dir() {
        return Err(missing(format!("no directory {}", dir.display())));
    }
    let mut header = None;
    let mut parts = Vec::new();
    let mut inputs = Vec::new();
    for path in day_files(&dir) {
        let raw = std::fs::read(&path).map_err(io_err(&path))?;
        inputs.push(InputFile {
            path: relative_name(&config.data_dir, &path),
            sha256: sha256_hex(&raw),
        });
        let day = parse_surfrad_day(&raw).map_err(|source| HarnessError::Ingest {
            station: format!("{id} ({})", path.display()),
            source,
        })?;
        if !day.row_errors.is_empty() {
            log::warn!("{}: skipped {} malformed rows", path.display(), day.row_errors.len());
        }
        header.get_or_insert(day.header);
        parts.push(day.series);
    }
    let Some(header) = header else {
        return Err(missing(format!("no .dat files under {}", dir.display())));
    };
    let merged = RecordSeries::merge(&parts);

    let clearsky_csv = match &config.clearsky {
        ClearSkySpec::Computed => None,
        ClearSkySpec::CsvDir(csv_dir) => {
            let path = csv_dir.join(format!("{id}.csv"));
            let file = std::fs::File::open(&path).map_err(io_err(&path))?;
            let raw = std::fs::read(&path).map_err(io_err(&path))?;
            inputs.push(InputFile {
                path: format!("clearsky/{id}.csv"),
                sha256: sha256_hex(&raw),
            });
            Some(ClearSkySeries::from_csv(file).map_err(|source| HarnessError::Ingest {
                station: id.to_string(),
                source,
            })?)
        }
    };

    let dcfg = dataset_config(config);
    let mut grids = BTreeMap::new();
    for year in [config.train_year, config.cal_year, config.test_year] {
        let series = resample_five_minute(&merged.year(year));
        if series.is_empty() {
            return Err(missing(format!("no records in {year}")));
        }
        let computed;
        let clearsky = match &clearsky_csv {
            Some(cs) => cs,
            None => {
                computed = ClearSkySeries::computed(&series, config.solar_constant);
                &computed
            }
        };
        let grid = build_grid(&series, clearsky, config.resolution, &dcfg).map_err(|source| {
            HarnessError::Ingest {
                station: id.to_string(),
                source,
            }
        })?;
        grids.insert(year, grid);
    }
    Ok(StationData {
        id: id.to_string(),
        header,
        grids,
        inputs,
    })
}

fn dataset_config(config: &ExperimentConfig) -> DatasetConfig {
    DatasetConfig {
        k_cap: config.k_cap,
        daytime_threshold: config.daytime_threshold,
    }
}

/// Splits a grid's clearness series into local solar days (mean solar time
/// from the station longitude), so that no day boundary falls in daylight.
pub fn solar_days(grid: &ResolutionGrid, longitude: f64) -> Vec<Vec<Option<f64>>> {
    let offset = Duration::seconds((longitude / 15.0 * 3600.0).round() as i64);
    let mut days: Vec<Vec<Option<f64>>> = Vec::new();
    let mut current: Option<NaiveDate> = None;
    for p in &grid.points {
        let date = (p.timestamp + offset).date_naive();
        if current != Some(date) {
            days.push(Vec::new());
            current = Some(date);
        }
        days.last_mut().unwrap().push(p.k);
    }
    days
}

struct YearSets {
    train: SupervisedDataset,
    cal: SupervisedDataset,
    test: SupervisedDataset,
}

fn build_sets(config: &ExperimentConfig, st: &StationData, horizon: usize) -> Result<YearSets> {
    let dcfg = dataset_config(config);
    let make = |year: i32| {
        dataset_from_grid(&st.grids[&year], &st.id, horizon, &dcfg).map_err(|e| match e {
            IngestError::EmptyDataset => HarnessError::MissingData {
                station: st.id.clone(),
                detail: format!("no usable daytime rows in {year} for horizon {horizon}"),
            },
            source => HarnessError::Ingest {
                station: st.id.clone(),
                source,
            },
        })
    };
    Ok(YearSets {
        train: make(config.train_year)?,
        cal: make(config.cal_year)?,
        test: make(config.test_year)?,
    })
}

/// A fitted baseline plus what it needs to forecast from grid history.
struct BaselineContext<'a> {
    model: ModelKind,
    chp: ChpModel,
    mcm: Option<McmModel>,
    grid: &'a ResolutionGrid,
    window: usize,
    min_members: usize,
}

impl<'a> BaselineContext<'a> {
    fn fit(
        model: ModelKind,
        config: &ExperimentConfig,
        st: &'a StationData,
        grid: &'a ResolutionGrid,
        horizon: usize,
    ) -> Result<Self> {
        let train = &st.grids[&config.train_year];
        let (times, ks): (Vec<DateTime<Utc>>, Vec<f64>) =
            train.points.iter().filter_map(|p| p.k.map(|k| (p.timestamp, k))).unzip();
        let step = config.resolution.step_minutes();
        let chp = ChpModel::fit(&times, &ks, step as u32)?;
        let mcm = if model == ModelKind::Mcm {
            Some(McmModel::fit(
                &solar_days(train, st.header.longitude),
                config.mcm_states,
                horizon,
            )?)
        } else {
            None
        };
        Ok(Self {
            model,
            chp,
            mcm,
            grid,
            window: (config.peen_window_minutes / step) as usize,
            min_members: config.peen_min_members(),
        })
    }

    /// PeEn and MCM fall back to CH-P when the issue time has no usable
    /// history (early morning); CH-P borrows the nearest filled slot.
    fn forecast(&self, issue: usize, target_time: DateTime<Utc>) -> Result<PredictiveDistribution> {
        let chp = || -> Result<PredictiveDistribution> { Ok(self.chp.forecast_nearest(target_time)?.into()) };
        match self.model {
            ModelKind::Chp => chp(),
            ModelKind::Peen => {
                let lo = (issue + 1).saturating_sub(self.window);
                let history: Vec<Option<f64>> = self.grid.points[lo..=issue].iter().map(|p| p.k).collect();
                match peen_forecast(&history, self.min_members) {
                    Ok(e) => Ok(e.into()),
                    Err(BaselineError::InsufficientHistory { .. }) => chp(),
                    Err(e) => Err(e.into()),
                }
            }
            ModelKind::Mcm => match self.grid.points[issue].k {
                Some(k) => Ok(self.mcm.as_ref().expect("fitted").forecast(k)?.into()),
                None => chp(),
            },
            ModelKind::Ngboost => unreachable!("not a baseline"),
        }
    }
}

fn fan_window(test: &SupervisedDataset, days: i64) -> Vec<usize> {
    let Some(&first) = test.target_times.first() else {
        return Vec::new();
    };
    let end = first + Duration::days(days);
    (0..test.len()).filter(|&i| test.target_times[i] < end).collect()
}

fn forecast_rows(
    station: &str,
    model: ModelKind,
    calibrator: CalibratorKind,
    horizon: usize,
    data: &SupervisedDataset,
    dists: &[PredictiveDistribution],
) -> Vec<ForecastRow> {
    dists
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let e = data.targets_e_ext[i];
            let mut quantiles = [0.0; 9];
            for (q, &p) in quantiles.iter_mut().zip(FORECAST_LEVELS.iter()) {
                *q = e * d.quantile_unchecked(p);
            }
            ForecastRow {
                station: station.to_string(),
                model,
                calibrator,
                horizon,
                target_time: data.target_times[i],
                e_ext: e,
                observed_ghi: data.target_ghi[i],
                quantiles,
            }
        })
        .collect()
}

#[derive(Default)]
struct TaskOutput {
    rows: Vec<ReportRow>,
    forecasts: Vec<ForecastRow>,
}

fn calibrated(calibrator: &Option<Arc<Calibrator>>, preds: &[GaussianPrediction]) -> Vec<PredictiveDistribution> {
    match calibrator {
        None => preds.iter().map(|&g| g.into()).collect(),
        Some(c) => apply_calibrator(c, preds),
    }
}

fn run_task(
    config: &ExperimentConfig,
    st: &StationData,
    sets: &YearSets,
    horizon: usize,
    model: ModelKind,
    repeat: usize,
) -> Result<TaskOutput> {
    let mut srng = rng_for(config.seed, &st.id, horizon, "sample", repeat);
    let cal_idx = sample_indices(&mut srng, sets.cal.len(), config.sample_size);
    let test_idx = sample_indices(&mut srng, sets.test.len(), config.sample_size);
    let test = sets.test.subset(&test_idx);
    let fan = if repeat == 0 && horizon == config.fan_horizon() {
        Some(sets.test.subset(&fan_window(&sets.test, config.fan_window_days)))
    } else {
        None
    };
    let levels = default_levels();
    let mut out = TaskOutput::default();
    let mut push = |calibrator: CalibratorKind, dists: &[PredictiveDistribution]| -> Result<()> {
        let record = verify(
            dists,
            &test.targets_k,
            &test.targets_e_ext,
            &test.target_ghi,
            &levels,
            CalibrationErrorKind::Absolute,
        )?;
        out.rows.push(ReportRow {
            station: st.id.clone(),
            resolution: config.resolution,
            horizon,
            model,
            calibrator,
            repeat,
            record,
        });
        Ok(())
    };

    let mut calibrators = vec![CalibratorKind::None];
    calibrators.extend(config.calibrators.iter().filter(|&&c| c != CalibratorKind::None));

    if model == ModelKind::Ngboost {
        let seed = {
            use rand::RngCore;
            rng_for(config.seed, &st.id, horizon, model.key(), repeat).next_u64()
        };
        let fitted = ngboost_fit_dataset(&sets.train, &config.ngboost_config(seed))?;
        let cal = sets.cal.subset(&cal_idx);
        let cal_pred = fitted.predict(cal.features.view())?;
        let test_pred = fitted.predict(test.features.view())?;
        let fan_pred = match &fan {
            Some(f) => Some(fitted.predict(f.features.view())?),
            None => None,
        };
        let mut fan_rows = Vec::new();
        for c in calibrators {
            let calibrator = match c {
                CalibratorKind::None => None,
                CalibratorKind::Mle => Some(Calibrator::Mle(mle_fit(&cal_pred, &cal.targets_k)?)),
                CalibratorKind::Crude => Some(Calibrator::Crude(crude_fit(&cal_pred, &cal.targets_k, DEFAULT_CRUDE_GRID)?)),
                CalibratorKind::Kuleshov => Some(Calibrator::Kuleshov(kuleshov_fit(
                    &cal_pred,
                    &cal.targets_k,
                    DEFAULT_KULESHOV_GRID,
                )?)),
            }
            .map(Arc::new);
            push(c, &calibrated(&calibrator, &test_pred))?;
            if let (Some(f), Some(fp)) = (&fan, &fan_pred) {
                fan_rows.extend(forecast_rows(&st.id, model, c, horizon, f, &calibrated(&calibrator, fp)));
            }
        }
        out.forecasts = fan_rows;
    } else {
        let grid = &st.grids[&config.test_year];
        let ctx = BaselineContext::fit(model, config, st, grid, horizon)?;
        let forecast_all = |data: &SupervisedDataset| -> Result<Vec<PredictiveDistribution>> {
            (0..data.len())
                .map(|i| ctx.forecast(data.issue_index[i], data.target_times[i]))
                .collect()
        };
        let dists = forecast_all(&test)?;
        push(CalibratorKind::None, &dists)?;
        if let Some(f) = &fan {
            let fd = forecast_all(f)?;
            out.forecasts = forecast_rows(&st.id, model, CalibratorKind::None, horizon, f, &fd);
        }
    }
    Ok(out)
}

/// Every row of one run plus what is needed to write it out.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub forecasts: Vec<ForecastRow>,
    pub inputs: Vec<InputFile>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<EvaluationReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ExperimentConfig) -> Result<EvaluationReport> {
    let stations: Vec<StationData> = config
        .stations
        .par_iter()
        .map(|id| load_station(config, id))
        .collect::<Result<_>>()?;
    let horizons = config.horizons();
    let cells: Vec<(usize, usize)> = (0..stations.len())
        .flat_map(|s| horizons.iter().map(move |&h| (s, h)))
        .collect();
    let sets: Vec<YearSets> = cells
        .par_iter()
        .map(|&(s, h)| build_sets(config, &stations[s], h))
        .collect::<Result<_>>()?;

    let mut tasks = Vec::new();
    for (c, &(s, h)) in cells.iter().enumerate() {
        for &m in &config.models {
            for r in 0..config.repeats {
                tasks.push((c, s, h, m, r));
            }
        }
    }
    log::info!("{} tasks over {} stations", tasks.len(), stations.len());
    let outputs: Vec<TaskOutput> = tasks
        .par_iter()
        .map(|&(c, s, h, m, r)| {
            log::debug!("{} h={h} {m} repeat {r}", stations[s].id);
            run_task(config, &stations[s], &sets[c], h, m, r)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut forecasts = Vec::new();
    for o in outputs {
        rows.extend(o.rows);
        forecasts.extend(o.forecasts);
    }
    rows.sort_by(|a, b| {
        (&a.station, a.horizon, a.model, a.calibrator, a.repeat).cmp(&(&b.station, b.horizon, b.model, b.calibrator, b.repeat))
    });
    forecasts.sort_by(|a, b| {
        (&a.station, a.model, a.calibrator, a.horizon, a.target_time).cmp(&(&b.station, b.model, b.calibrator, b.horizon, b.target_time))
    });
    let mut inputs: Vec<InputFile> = stations.into_iter().flat_map(|s| s.inputs).collect();
    inputs.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(EvaluationReport {
        config: config.clone(),
        rows,
        forecasts,
        inputs,
    })
}

#[derive(Debug, Clone, Default)]
pub struct StationFileSummary {
    pub station: String,
    pub files: usize,
    pub records: usize,
    pub records_per_year: BTreeMap<i32, usize>,
    pub first: Option<DateTime<Utc>>,
    pub last: Option<DateTime<Utc>>,
    /// Per-file problems: unreadable files and skipped rows.
    pub problems: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct DataDirSummary {
    pub stations: Vec<StationFileSummary>,
}

impl DataDirSummary {
    pub fn is_clean(&self) -> bool {
        self.stations.iter().all(|s| s.problems.is_empty())
    }
}

/// Parses every daily file below `dir/<station>/` and tallies what it finds.
pub fn validate_data_dir(dir: &Path) -> Result<DataDirSummary> {
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut station_dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    station_dirs.sort();
    let mut summary = DataDirSummary::default();
    for sdir in station_dirs {
        let mut s = StationFileSummary {
            station: sdir.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            ..Default::default()
        };
        for path in day_files(&sdir) {
            s.files += 1;
            let name = relative_name(dir, &path);
            let raw = match std::fs::read(&path) {
                Ok(r) => r,
                Err(e) => {
                    s.problems.push((name, e.to_string()));
                    continue;
                }
            };
            match parse_surfrad_day(&raw) {
                Ok(day) => {
                    for RowError { line, message } in &day.row_errors {
                        s.problems.push((name.clone(), format!("line {line}: {message}")));
                    }
                    for r in day.series.iter() {
                        *s.records_per_year.entry(r.timestamp.year()).or_default() += 1;
                    }
                    s.records += day.series.len();
                    if let (Some(a), Some(b)) = (day.series.records().first(), day.series.records().last()) {
                        s.first = Some(s.first.map_or(a.timestamp, |f| f.min(a.timestamp)));
                        s.last = Some(s.last.map_or(b.timestamp, |l| l.max(b.timestamp)));
                    }
                }
                Err(e) => s.problems.push((name, e.to_string())),
            }
        }
        if s.files > 0 {
            summary.stations.push(s);
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_distinct_and_bounded() {
        let mut rng = rng_for(1, "bon", 3, "sample", 0);
        let idx = sample_indices(&mut rng, 50, 20);
        assert_eq!(idx.len(), 20);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(idx.iter().all(|&i| i < 50));
        let all = sample_indices(&mut rng, 10, 2000);
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn streams_differ_by_every_key() {
        use rand::RngCore;
        let draw = |s, st, h, m, r| rng_for(s, st, h, m, r).next_u64();
        let base = draw(0, "bon", 1, "chp", 0);
        assert_eq!(base, draw(0, "bon", 1, "chp", 0));
        assert_ne!(base, draw(1, "bon", 1, "chp", 0));
        assert_ne!(base, draw(0, "dra", 1, "chp", 0));
        assert_ne!(base, draw(0, "bon", 2, "chp", 0));
        assert_ne!(base, draw(0, "bon", 1, "mcm", 0));
        assert_ne!(base, draw(0, "bon", 1, "chp", 1));
    }
}
