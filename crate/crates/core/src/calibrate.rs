//! Post-hoc calibrators wrapping Gaussian forecasts: CRUDE residual
//! quantiles, Kuleshov isotonic recalibration and MLE shift/scale.
//!
//! All three are fitted on a held-out calibration set of
//! (prediction, observation) pairs in clearness-index space.

use crate::dist::{
    check_probability, type7_quantile, DistError, GaussianPrediction, Predictive,
    PredictiveDistribution, SIGMA_FLOOR,
};
use crate::metrics::{self, CalibrationErrorKind, MetricsError};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("{predictions} predictions but {observations} observations")]
    LengthMismatch {
        predictions: usize,
        observations: usize,
    },
    #[error("grid size must be at least {min}, got {got}")]
    InvalidGrid { min: usize, got: usize },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

/// Level clamp applied to Kuleshov's recalibrated level.
pub const KULESHOV_LEVEL_EPS: f64 = 1e-4;
pub const DEFAULT_CRUDE_GRID: usize = 101;
pub const DEFAULT_KULESHOV_GRID: usize = 101;
/// Levels used by the quantile-decomposition CRPS of calibrated forecasts.
pub const CRPS_QUANTILE_LEVELS: usize = 199;

fn check_pairs(predictions: usize, observations: usize) -> Result<()> {
    if predictions != observations {
        return Err(CalibrationError::LengthMismatch {
            predictions,
            observations,
        });
    }
    if predictions == 0 {
        return Err(CalibrationError::EmptyCalibrationSet);
    }
    Ok(())
}

/// Probability integral transform of each observation under its forecast.
pub fn pit_values(predictions: &[GaussianPrediction], observations: &[f64]) -> Result<Vec<f64>> {
    if predictions.len() != observations.len() {
        return Err(CalibrationError::LengthMismatch {
            predictions: predictions.len(),
            observations: observations.len(),
        });
    }
    Ok(predictions
        .iter()
        .zip(observations)
        .map(|(pred, &y)| pred.cdf(y))
        .collect())
}

/// Empirical quantiles of standardized calibration residuals plus a learned
/// location shift.
///
/// Residuals are stored as `(y - mu) / sigma`, the negation of the z-score
/// `(mu - y) / sigma`, so the p-th calibrated quantile reads the p-th residual
/// quantile directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrudeCalibrator {
    residual_quantiles: Vec<f64>,
    shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrudeOptions {
    pub grid_size: usize,
    pub levels: Vec<f64>,
    pub kind: CalibrationErrorKind,
}

impl Default for CrudeOptions {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_CRUDE_GRID,
            levels: metrics::default_levels(),
            kind: CalibrationErrorKind::Absolute,
        }
    }
}

/// Candidate shifts on a uniform grid over [-bound, bound], ordered by
/// increasing |shift| (positive before negative on ties).
pub fn crude_shift_grid(bound: f64, grid_size: usize) -> Vec<f64> {
    if grid_size < 2 || bound == 0.0 {
        return vec![0.0];
    }
    let step = 2.0 * bound / (grid_size - 1) as f64;
    let mut grid: Vec<f64> = (0..grid_size).map(|i| -bound + step * i as f64).collect();
    if grid_size % 2 == 1 {
        grid[grid_size / 2] = 0.0;
    }
    grid.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(b.total_cmp(a)));
    grid
}

pub fn crude_fit(
    predictions: &[GaussianPrediction],
    observations: &[f64],
    grid_size: usize,
) -> Result<CrudeCalibrator> {
    crude_fit_with(
        predictions,
        observations,
        &CrudeOptions {
            grid_size,
            ..CrudeOptions::default()
        },
    )
}

pub fn crude_fit_with(
    predictions: &[GaussianPrediction],
    observations: &[f64],
    options: &CrudeOptions,
) -> Result<CrudeCalibrator> {
    check_pairs(predictions.len(), observations.len())?;
    if options.grid_size == 0 {
        return Err(CalibrationError::InvalidGrid {
            min: 1,
            got: options.grid_size,
        });
    }
    let mut residuals: Vec<f64> = predictions
        .iter()
        .zip(observations)
        .map(|(pred, &y)| pred.z_score(y))
        .collect();
    residuals.sort_by(f64::total_cmp);

    let mut sigmas: Vec<f64> = predictions.iter().map(|p| p.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    let median_sigma = type7_quantile(&sigmas, 0.5);
    let max_abs = residuals.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let bound = 2.0 * median_sigma * max_abs;

    let level_residuals: Vec<f64> = options
        .levels
        .iter()
        .map(|&p| type7_quantile(&residuals, p))
        .collect();
    // calibration error of the shifted calibrator on the calibration set
    let objective = |shift: f64| -> f64 {
        let mut hits = vec![0usize; options.levels.len()];
        for (pred, &y) in predictions.iter().zip(observations) {
            for (j, &e) in level_residuals.iter().enumerate() {
                if y < pred.mu + shift + pred.sigma * e {
                    hits[j] += 1;
                }
            }
        }
        let n = observations.len() as f64;
        let curve: Vec<(f64, f64)> = options
            .levels
            .iter()
            .zip(&hits)
            .map(|(&p, &h)| (p, h as f64 / n))
            .collect();
        metrics::curve_error(&curve, options.kind)
    };

    let mut best_shift = 0.0;
    let mut best_err = f64::INFINITY;
    for shift in crude_shift_grid(bound, options.grid_size) {
        let err = objective(shift);
        if err < best_err {
            best_err = err;
            best_shift = shift;
        }
    }
    Ok(CrudeCalibrator {
        residual_quantiles: residuals,
        shift: best_shift,
    })
}

impl CrudeCalibrator {
    pub fn new(mut residual_quantiles: Vec<f64>, shift: f64) -> Result<Self> {
        if residual_quantiles.is_empty() {
            return Err(CalibrationError::EmptyCalibrationSet);
        }
        if residual_quantiles.iter().any(|e| !e.is_finite()) || !shift.is_finite() {
            return Err(DistError::NonFinite.into());
        }
        residual_quantiles.sort_by(f64::total_cmp);
        Ok(Self {
            residual_quantiles,
            shift,
        })
    }

    pub fn residual_quantiles(&self) -> &[f64] {
        &self.residual_quantiles
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn quantile(&self, pred: &GaussianPrediction, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(self.quantile_unchecked(pred, p))
    }

    fn quantile_unchecked(&self, pred: &GaussianPrediction, p: f64) -> f64 {
        pred.mu + self.shift + pred.sigma * type7_quantile(&self.residual_quantiles, p)
    }
}

/// Isotonic map from model level to observed coverage, stored as knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KuleshovCalibrator {
    levels: Vec<f64>,
    coverage: Vec<f64>,
}

/// Pool-adjacent-violators with uniform weights: the nondecreasing sequence
/// closest to `values` in squared error.
pub fn isotonic_fit(values: &[f64]) -> Vec<f64> {
    // (mean, count) blocks
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let c = c1 + c2;
            *blocks.last_mut().unwrap() = ((m1 * c1 as f64 + m2 * c2 as f64) / c as f64, c);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, c)| std::iter::repeat(m).take(c))
        .collect()
}

pub fn kuleshov_fit(
    predictions: &[GaussianPrediction],
    observations: &[f64],
    grid_size: usize,
) -> Result<KuleshovCalibrator> {
    check_pairs(predictions.len(), observations.len())?;
    if grid_size < 2 {
        return Err(CalibrationError::InvalidGrid {
            min: 2,
            got: grid_size,
        });
    }
    let mut pits = pit_values(predictions, observations)?;
    pits.sort_by(f64::total_cmp);
    let n = pits.len() as f64;
    let levels: Vec<f64> = (0..grid_size)
        .map(|j| j as f64 / (grid_size - 1) as f64)
        .collect();
    let empirical: Vec<f64> = levels
        .iter()
        .map(|&level| pits.partition_point(|&u| u <= level) as f64 / n)
        .collect();
    let mut coverage = isotonic_fit(&empirical);
    coverage[0] = 0.0;
    coverage[grid_size - 1] = 1.0;
    Ok(KuleshovCalibrator { levels, coverage })
}

impl KuleshovCalibrator {
    /// Builds a calibrator from explicit knots. Levels must be strictly
    /// increasing from 0 to 1; coverage is made monotone and pinned.
    pub fn from_knots(levels: Vec<f64>, coverage: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 || levels.len() != coverage.len() {
            return Err(CalibrationError::InvalidGrid {
                min: 2,
                got: levels.len().min(coverage.len()),
            });
        }
        if levels[0] != 0.0
            || *levels.last().unwrap() != 1.0
            || levels.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(DistError::InvalidEdges.into());
        }
        let mut coverage = isotonic_fit(&coverage);
        let last = coverage.len() - 1;
        coverage[0] = 0.0;
        coverage[last] = 1.0;
        for c in coverage.iter_mut() {
            *c = c.clamp(0.0, 1.0);
        }
        Ok(Self { levels, coverage })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn coverage(&self) -> &[f64] {
        &self.coverage
    }

    /// Smallest model level whose fitted coverage reaches `p`, interpolating
    /// linearly between knots, clamped to [eps, 1 - eps].
    pub fn recalibrated_level(&self, p: f64) -> f64 {
        let j = self.coverage.partition_point(|&c| c < p);
        let level = if j == 0 {
            self.levels[0]
        } else if j >= self.coverage.len() {
            *self.levels.last().unwrap()
        } else {
            let (c0, c1) = (self.coverage[j - 1], self.coverage[j]);
            let (l0, l1) = (self.levels[j - 1], self.levels[j]);
            l0 + (p - c0) / (c1 - c0) * (l1 - l0)
        };
        level.clamp(KULESHOV_LEVEL_EPS, 1.0 - KULESHOV_LEVEL_EPS)
    }

    pub fn quantile(&self, pred: &GaussianPrediction, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(self.quantile_unchecked(pred, p))
    }

    fn quantile_unchecked(&self, pred: &GaussianPrediction, p: f64) -> f64 {
        pred.quantile_unchecked(self.recalibrated_level(p))
    }
}

/// Constant shift `a` and scale `s`: the calibrated forecast is
/// Gaussian(mu + a, s * sigma).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleCalibrator {
    pub shift: f64,
    pub scale: f64,
}

/// Closed-form maximum-likelihood shift and scale.
pub fn mle_fit(predictions: &[GaussianPrediction], observations: &[f64]) -> Result<MleCalibrator> {
    check_pairs(predictions.len(), observations.len())?;
    let mut weight_sum = 0.0;
    let mut weighted = 0.0;
    for (pred, &y) in predictions.iter().zip(observations) {
        let w = 1.0 / (pred.sigma * pred.sigma);
        weight_sum += w;
        weighted += w * (y - pred.mu);
    }
    let shift = weighted / weight_sum;
    let ss: f64 = predictions
        .iter()
        .zip(observations)
        .map(|(pred, &y)| {
            let e = (y - pred.mu - shift) / pred.sigma;
            e * e
        })
        .sum();
    let scale = (ss / predictions.len() as f64).sqrt().max(SIGMA_FLOOR);
    Ok(MleCalibrator { shift, scale })
}

impl MleCalibrator {
    pub fn apply(&self, pred: &GaussianPrediction) -> GaussianPrediction {
        GaussianPrediction::new(pred.mu + self.shift, self.scale * pred.sigma)
    }

    /// Mean Gaussian negative log-likelihood of the calibrated forecasts.
    pub fn nll(&self, predictions: &[GaussianPrediction], observations: &[f64]) -> f64 {
        let total: f64 = predictions
            .iter()
            .zip(observations)
            .map(|(pred, &y)| self.apply(pred).nll(y))
            .sum();
        total / predictions.len() as f64
    }
}

/// Any fitted calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Calibrator {
    Crude(CrudeCalibrator),
    Kuleshov(KuleshovCalibrator),
    Mle(MleCalibrator),
}

impl Calibrator {
    pub fn quantile(&self, pred: &GaussianPrediction, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(self.quantile_unchecked(pred, p))
    }

    fn quantile_unchecked(&self, pred: &GaussianPrediction, p: f64) -> f64 {
        match self {
            Self::Crude(c) => c.quantile_unchecked(pred, p),
            Self::Kuleshov(c) => c.quantile_unchecked(pred, p),
            Self::Mle(c) => c.apply(pred).quantile_unchecked(p),
        }
    }
}

/// Wraps each forecast with the calibrator. MLE stays Gaussian; CRUDE and
/// Kuleshov produce [`CalibratedPrediction`]s.
pub fn apply_calibrator(
    calibrator: &Arc<Calibrator>,
    predictions: &[GaussianPrediction],
) -> Vec<PredictiveDistribution> {
    predictions
        .iter()
        .map(|pred| match calibrator.as_ref() {
            Calibrator::Mle(m) => m.apply(pred).into(),
            _ => CalibratedPrediction::new(*pred, Arc::clone(calibrator)).into(),
        })
        .collect()
}

/// A Gaussian forecast seen through a calibrator's quantile function, then
/// mapped by `scale * X + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPrediction {
    base: GaussianPrediction,
    calibrator: Arc<Calibrator>,
    scale: f64,
    shift: f64,
}

const CDF_BISECTION_TOL: f64 = 1e-9;

impl CalibratedPrediction {
    pub fn new(base: GaussianPrediction, calibrator: Arc<Calibrator>) -> Self {
        Self {
            base,
            calibrator,
            scale: 1.0,
            shift: 0.0,
        }
    }

    pub fn base(&self) -> &GaussianPrediction {
        &self.base
    }

    pub fn calibrator(&self) -> &Calibrator {
        &self.calibrator
    }

    pub(crate) fn affine(&self, scale: f64, shift: f64) -> Self {
        Self {
            base: self.base,
            calibrator: Arc::clone(&self.calibrator),
            scale: scale * self.scale,
            shift: scale * self.shift + shift,
        }
    }
}

impl Predictive for CalibratedPrediction {
    /// Bisection on the quantile function.
    fn cdf(&self, x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > CDF_BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.quantile_unchecked(mid) <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo == 0.0 {
            0.0
        } else if hi == 1.0 {
            1.0
        } else {
            0.5 * (lo + hi)
        }
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        self.scale * self.calibrator.quantile_unchecked(&self.base, p) + self.shift
    }

    /// Twice the mean pinball loss over 199 equally spaced levels.
    fn crps(&self, y: f64) -> f64 {
        let m = CRPS_QUANTILE_LEVELS;
        let total: f64 = (1..=m)
            .map(|k| {
                let p = k as f64 / (m + 1) as f64;
                let u = y - self.quantile_unchecked(p);
                if u >= 0.0 {
                    p * u
                } else {
                    (p - 1.0) * u
                }
            })
            .sum();
        2.0 * total / m as f64
    }
}
