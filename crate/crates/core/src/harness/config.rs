//! Experiment configuration: a flat `key = value` file, `#` comments, list
//! values separated by commas. Command-line flags go through [`ExperimentConfig::set`]
//! with the same keys.

use super::HarnessError;
use crate::ingest::{Resolution, DEFAULT_DAYTIME_THRESHOLD, DEFAULT_K_CAP, SOLAR_CONSTANT};
use crate::ngboost::NGBoostConfig;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const DATA_DIR_ENV: &str = "SOLARCAST_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Chp,
    Peen,
    Mcm,
    Ngboost,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Chp, ModelKind::Peen, ModelKind::Mcm, ModelKind::Ngboost];

    pub fn key(self) -> &'static str {
        match self {
            ModelKind::Chp => "chp",
            ModelKind::Peen => "peen",
            ModelKind::Mcm => "mcm",
            ModelKind::Ngboost => "ngboost",
        }
    }

    /// Column label used in the report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Chp => "CH-P",
            ModelKind::Peen => "PeEn",
            ModelKind::Mcm => "MCM",
            ModelKind::Ngboost => "NGB",
        }
    }

    pub fn is_gaussian(self) -> bool {
        self == ModelKind::Ngboost
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chp" | "ch-p" => Ok(ModelKind::Chp),
            "peen" => Ok(ModelKind::Peen),
            "mcm" => Ok(ModelKind::Mcm),
            "ngboost" | "ngb" => Ok(ModelKind::Ngboost),
            other => Err(format!("unknown model {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CalibratorKind {
    None,
    Mle,
    Crude,
    Kuleshov,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 4] = [
        CalibratorKind::None,
        CalibratorKind::Mle,
        CalibratorKind::Crude,
        CalibratorKind::Kuleshov,
    ];

    pub fn key(self) -> &'static str {
        match self {
            CalibratorKind::None => "none",
            CalibratorKind::Mle => "mle",
            CalibratorKind::Crude => "crude",
            CalibratorKind::Kuleshov => "kuleshov",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CalibratorKind::None => "None",
            CalibratorKind::Mle => "MLE",
            CalibratorKind::Crude => "C",
            CalibratorKind::Kuleshov => "Kul.",
        }
    }
}

impl fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for CalibratorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(CalibratorKind::None),
            "mle" => Ok(CalibratorKind::Mle),
            "crude" | "c" => Ok(CalibratorKind::Crude),
            "kuleshov" | "kul" | "kul." => Ok(CalibratorKind::Kuleshov),
            other => Err(format!("unknown calibrator {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClearSkySpec {
    Computed,
    /// Directory holding `<station>.csv` files.
    CsvDir(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub stations: Vec<String>,
    pub data_dir: PathBuf,
    pub clearsky: ClearSkySpec,
    pub resolution: Resolution,
    /// Steps of `resolution`; empty means the resolution's default set.
    pub horizons: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub calibrators: Vec<CalibratorKind>,
    pub train_year: i32,
    pub cal_year: i32,
    pub test_year: i32,
    pub repeats: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub jobs: usize,
    pub k_cap: f64,
    pub daytime_threshold: f64,
    pub solar_constant: f64,
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// `None`: 1.0 intra-hourly, 0.5 hourly.
    pub minibatch_frac: Option<f64>,
    pub mcm_states: usize,
    pub peen_window_minutes: i64,
    /// `None`: 6 intra-hourly, 1 hourly.
    pub peen_min_members: Option<usize>,
    /// `None`: 30 minutes intra-hourly, 1 hour hourly.
    pub fan_horizon: Option<usize>,
    pub fan_window_days: i64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ng = NGBoostConfig::default();
        Self {
            stations: Vec::new(),
            data_dir: std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
            clearsky: ClearSkySpec::Computed,
            resolution: Resolution::IntraHourly,
            horizons: Vec::new(),
            models: ModelKind::ALL.to_vec(),
            calibrators: CalibratorKind::ALL.to_vec(),
            train_year: 2016,
            cal_year: 2017,
            test_year: 2018,
            repeats: 10,
            sample_size: 2000,
            seed: 0,
            jobs: 1,
            k_cap: DEFAULT_K_CAP,
            daytime_threshold: DEFAULT_DAYTIME_THRESHOLD,
            solar_constant: SOLAR_CONSTANT,
            n_estimators: ng.n_estimators,
            learning_rate: ng.learning_rate,
            max_depth: ng.max_depth,
            min_samples_leaf: ng.min_samples_leaf,
            minibatch_frac: None,
            mcm_states: crate::baselines::DEFAULT_MCM_STATES,
            peen_window_minutes: crate::baselines::PEEN_WINDOW_MINUTES,
            peen_min_members: None,
            fan_horizon: None,
            fan_window_days: 3,
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid(msg.into())
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr<Err = String>>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| invalid(format!("{key}: {e}"))))
        .collect()
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, HarnessError> {
    if value.trim().eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn auto<T: fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(|| "auto".to_string(), |v| v.to_string())
}

impl ExperimentConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let v = value.trim();
        match key.trim() {
            "stations" => {
                self.stations = v
                    .split(',')
                    .map(|s| s.trim().to_ascii_lowercase())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "data_dir" => self.data_dir = PathBuf::from(v),
            "clearsky" => {
                self.clearsky = if v.eq_ignore_ascii_case("computed") {
                    ClearSkySpec::Computed
                } else if let Some(dir) = v.strip_prefix("csv:") {
                    ClearSkySpec::CsvDir(PathBuf::from(dir.trim()))
                } else {
                    return Err(invalid(format!("clearsky: expected computed or csv:<dir>, got {v:?}")));
                }
            }
            "resolution" => self.resolution = v.parse().map_err(|e: String| invalid(e))?,
            "horizons" => {
                self.horizons = if v.eq_ignore_ascii_case("default") {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_num("horizons", s))
                        .collect::<Result<_, _>>()?
                }
            }
            "models" => self.models = parse_list("models", v)?,
            "calibrators" => self.calibrators = parse_list("calibrators", v)?,
            "train_year" => self.train_year = parse_num(key, v)?,
            "cal_year" => self.cal_year = parse_num(key, v)?,
            "test_year" => self.test_year = parse_num(key, v)?,
            "repeats" => self.repeats = parse_num(key, v)?,
            "sample_size" => self.sample_size = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "jobs" => self.jobs = parse_num(key, v)?,
            "k_cap" => self.k_cap = parse_num(key, v)?,
            "daytime_threshold" => self.daytime_threshold = parse_num(key, v)?,
            "solar_constant" => self.solar_constant = parse_num(key, v)?,
            "n_estimators" => self.n_estimators = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "max_depth" => self.max_depth = parse_num(key, v)?,
            "min_samples_leaf" => self.min_samples_leaf = parse_num(key, v)?,
            "minibatch_frac" => self.minibatch_frac = parse_auto(key, v)?,
            "mcm_states" => self.mcm_states = parse_num(key, v)?,
            "peen_window_minutes" => self.peen_window_minutes = parse_num(key, v)?,
            "peen_min_members" => self.peen_min_members = parse_auto(key, v)?,
            "fan_horizon" => self.fan_horizon = parse_auto(key, v)?,
            "fan_window_days" => self.fan_window_days = parse_num(key, v)?,
            other => return Err(invalid(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Reads a config file. Relative `data_dir` and clear-sky paths are taken
    /// relative to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let file_sets_data_dir = text
            .lines()
            .any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("data_dir"));
        if file_sets_data_dir && cfg.data_dir.is_relative() {
            cfg.data_dir = base.join(&cfg.data_dir);
        }
        if let ClearSkySpec::CsvDir(dir) = &cfg.clearsky {
            if dir.is_relative() {
                cfg.clearsky = ClearSkySpec::CsvDir(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn horizons(&self) -> Vec<usize> {
        if self.horizons.is_empty() {
            self.resolution.default_horizons()
        } else {
            self.horizons.clone()
        }
    }

    pub fn ngboost_config(&self, seed: u64) -> NGBoostConfig {
        NGBoostConfig {
            n_estimators: self.n_estimators,
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            minibatch_frac: self.minibatch_frac.unwrap_or(match self.resolution {
                Resolution::IntraHourly => 1.0,
                Resolution::Hourly => 0.5,
            }),
            seed,
        }
    }

    pub fn peen_min_members(&self) -> usize {
        self.peen_min_members.unwrap_or(match self.resolution {
            Resolution::IntraHourly => 6,
            Resolution::Hourly => 1,
        })
    }

    pub fn fan_horizon(&self) -> usize {
        let wanted = self.fan_horizon.unwrap_or(match self.resolution {
            Resolution::IntraHourly => 6,
            Resolution::Hourly => 1,
        });
        let hs = self.horizons();
        if hs.contains(&wanted) {
            wanted
        } else {
            hs[0]
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.stations.is_empty() {
            return Err(invalid("no stations"));
        }
        let years = [self.train_year, self.cal_year, self.test_year];
        if years[0] == years[1] || years[0] == years[2] || years[1] == years[2] {
            return Err(invalid("train, calibration and test years must be distinct"));
        }
        let hs = self.horizons();
        let max = self.resolution.max_horizon();
        if let Some(h) = hs.iter().find(|&&h| h == 0 || h > max) {
            return Err(invalid(format!(
                "horizon {h} is outside 1..={max} for {} resolution",
                self.resolution
            )));
        }
        if self.models.is_empty() {
            return Err(invalid("no models"));
        }
        if self.calibrators.is_empty() {
            return Err(invalid("no calibrators"));
        }
        if self.repeats == 0 {
            return Err(invalid("repeats must be at least 1"));
        }
        if self.sample_size == 0 {
            return Err(invalid("sample_size must be positive"));
        }
        if self.jobs == 0 {
            return Err(invalid("jobs must be at least 1"));
        }
        if !(self.k_cap > 0.0) || !(self.daytime_threshold >= 0.0) || !(self.solar_constant > 0.0) {
            return Err(invalid("k_cap and solar_constant must be positive, daytime_threshold nonnegative"));
        }
        if self.mcm_states < 2 {
            return Err(invalid("mcm_states must be at least 2"));
        }
        let step = self.resolution.step_minutes();
        if self.peen_window_minutes < step {
            return Err(invalid("peen_window_minutes is shorter than one step"));
        }
        if self.fan_window_days < 1 {
            return Err(invalid("fan_window_days must be at least 1"));
        }
        self.ngboost_config(0)
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// Every setting that affects results, as sorted `key = value` pairs.
    /// Paths and the worker count are left out: inputs are identified by
    /// content hash and results do not depend on parallelism.
    pub fn canonical(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("stations".into(), self.stations.join(",")),
            (
                "clearsky".into(),
                match &self.clearsky {
                    ClearSkySpec::Computed => "computed".into(),
                    ClearSkySpec::CsvDir(_) => "csv".into(),
                },
            ),
            ("resolution".into(), self.resolution.to_string()),
            ("horizons".into(), join(&self.horizons())),
            ("models".into(), join(&self.models)),
            ("calibrators".into(), join(&self.calibrators)),
            ("train_year".into(), self.train_year.to_string()),
            ("cal_year".into(), self.cal_year.to_string()),
            ("test_year".into(), self.test_year.to_string()),
            ("repeats".into(), self.repeats.to_string()),
            ("sample_size".into(), self.sample_size.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("k_cap".into(), self.k_cap.to_string()),
            ("daytime_threshold".into(), self.daytime_threshold.to_string()),
            ("solar_constant".into(), self.solar_constant.to_string()),
            ("n_estimators".into(), self.n_estimators.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("max_depth".into(), self.max_depth.to_string()),
            ("min_samples_leaf".into(), self.min_samples_leaf.to_string()),
            ("minibatch_frac".into(), auto(&self.minibatch_frac)),
            ("mcm_states".into(), self.mcm_states.to_string()),
            ("peen_window_minutes".into(), self.peen_window_minutes.to_string()),
            ("peen_min_members".into(), auto(&self.peen_min_members)),
            ("fan_horizon".into(), auto(&self.fan_horizon)),
            ("fan_window_days".into(), self.fan_window_days.to_string()),
        ];
        kv.sort();
        kv
    }

    pub fn canonical_text(&self) -> String {
        self.canonical()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_text() {
        let cfg = ExperimentConfig::parse(
            "# sample\nstations = bon, dra\nresolution = hourly\nhorizons = 1,2\nmodels = chp,ngboost\n\
             calibrators = none\nrepeats = 2 # trailing comment\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.stations, vec!["bon", "dra"]);
        assert_eq!(cfg.resolution, Resolution::Hourly);
        assert_eq!(cfg.horizons(), vec![1, 2]);
        assert_eq!(cfg.models, vec![ModelKind::Chp, ModelKind::Ngboost]);
        assert_eq!(cfg.calibrators, vec![CalibratorKind::None]);
        assert_eq!(cfg.repeats, 2);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.ngboost_config(0).minibatch_frac, 0.5);
        assert_eq!(cfg.peen_min_members(), 1);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "stations = bon\n";
        for bad in [
            "test_year = 2016\n",
            "horizons = 13\n",
            "repeats = 0\n",
            "models = gp\n",
            "colour = blue\n",
            "resolution = daily\n",
            "just text\n",
        ] {
            let r = ExperimentConfig::parse(&format!("{base}{bad}")).and_then(|c| c.validate());
            assert!(matches!(r, Err(HarnessError::ConfigInvalid(_))), "{bad}");
        }
        assert!(ExperimentConfig::parse("").unwrap().validate().is_err());
    }

    #[test]
    fn canonical_ignores_jobs() {
        let mut a = ExperimentConfig::parse("stations = bon\n").unwrap();
        let mut b = a.clone();
        a.jobs = 1;
        b.jobs = 8;
        b.data_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.canonical_text(), b.canonical_text());
        b.set("seed", "9").unwrap();
        assert_ne!(a.canonical_text(), b.canonical_text());
    }
}
