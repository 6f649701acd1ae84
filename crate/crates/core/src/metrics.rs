//! Forecast verification: mean CRPS, calibration error, sharpness and
//! calibration curves.

use crate::dist::{normal, DistError, Predictive, PredictiveDistribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{predictions} predictions but {observations} observations")]
    LengthMismatch {
        predictions: usize,
        observations: usize,
    },
    #[error("probability levels must be nonempty, strictly increasing and inside (0, 1)")]
    InvalidLevels,
    #[error("no predictions to evaluate")]
    Empty,
    #[error("normalizer at index {0} is not positive")]
    NonPositiveNormalizer(usize),
    #[error(transparent)]
    Dist(#[from] DistError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// How level deviations are aggregated into a calibration error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationErrorKind {
    /// mean |P(p) - p|
    #[default]
    Absolute,
    /// mean (P(p) - p)^2
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpnessKind {
    /// Central 90% interval width divided by 2 * z(0.95); equals sigma for Gaussians.
    #[default]
    ImpliedSigma,
    /// Plain central 90% interval width.
    IntervalWidth,
}

/// The 19 levels 0.05, 0.10, ..., 0.95.
pub fn default_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Summary of one evaluated forecast set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub mean_crps: f64,
    pub calibration_error: f64,
    pub sharpness: f64,
    pub n: usize,
    pub level_curve: Vec<(f64, f64)>,
}

fn check_lengths(predictions: usize, observations: usize) -> Result<()> {
    if predictions != observations {
        return Err(MetricsError::LengthMismatch {
            predictions,
            observations,
        });
    }
    if predictions == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn check_levels(levels: &[f64]) -> Result<()> {
    let inside = levels.iter().all(|&p| p > 0.0 && p < 1.0);
    let increasing = levels.windows(2).all(|w| w[0] < w[1]);
    if levels.is_empty() || !inside || !increasing {
        return Err(MetricsError::InvalidLevels);
    }
    Ok(())
}

/// Mean CRPS. With `normalizers`, each prediction is scaled by its normalizer
/// (clearness index to W/m^2) and scored against the observation in that space.
pub fn mean_crps(
    predictions: &[PredictiveDistribution],
    observations: &[f64],
    normalizers: Option<&[f64]>,
) -> Result<f64> {
    check_lengths(predictions.len(), observations.len())?;
    let mut total = 0.0;
    match normalizers {
        Some(scale) => {
            check_lengths(predictions.len(), scale.len())?;
            for (i, ((pred, &y), &e)) in predictions.iter().zip(observations).zip(scale).enumerate() {
                if !(e > 0.0) {
                    return Err(MetricsError::NonPositiveNormalizer(i));
                }
                total += pred.affine(e, 0.0)?.crps(y);
            }
        }
        None => {
            for (pred, &y) in predictions.iter().zip(observations) {
                total += pred.crps(y);
            }
        }
    }
    Ok(total / predictions.len() as f64)
}

/// Empirical coverage curve for any quantile provider: for each level p, the
/// fraction of observations strictly below the predicted p-quantile.
pub fn coverage_curve_by<F>(observations: &[f64], levels: &[f64], quantile_at: F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(usize, f64) -> f64,
{
    check_levels(levels)?;
    if observations.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = observations.len() as f64;
    Ok(levels
        .iter()
        .map(|&p| {
            let below = observations
                .iter()
                .enumerate()
                .filter(|(i, &y)| y < quantile_at(*i, p))
                .count();
            (p, below as f64 / n)
        })
        .collect())
}

pub fn curve_error(curve: &[(f64, f64)], kind: CalibrationErrorKind) -> f64 {
    let total: f64 = curve
        .iter()
        .map(|(p, hit)| match kind {
            CalibrationErrorKind::Absolute => (hit - p).abs(),
            CalibrationErrorKind::Squared => (hit - p) * (hit - p),
        })
        .sum();
    total / curve.len() as f64
}

pub fn calibration_curve(
    predictions: &[PredictiveDistribution],
    observations: &[f64],
    levels: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_lengths(predictions.len(), observations.len())?;
    coverage_curve_by(observations, levels, |i, p| predictions[i].quantile_unchecked(p))
}

/// Mean absolute deviation between nominal and empirical coverage.
pub fn calibration_error(
    predictions: &[PredictiveDistribution],
    observations: &[f64],
    levels: &[f64],
) -> Result<f64> {
    calibration_error_with(predictions, observations, levels, CalibrationErrorKind::Absolute)
}

pub fn calibration_error_with(
    predictions: &[PredictiveDistribution],
    observations: &[f64],
    levels: &[f64],
    kind: CalibrationErrorKind,
) -> Result<f64> {
    let curve = calibration_curve(predictions, observations, levels)?;
    Ok(curve_error(&curve, kind))
}

pub fn sharpness(predictions: &[PredictiveDistribution]) -> f64 {
    sharpness_with(predictions, SharpnessKind::ImpliedSigma)
}

pub fn sharpness_with(predictions: &[PredictiveDistribution], kind: SharpnessKind) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let z95 = normal::quantile(0.95);
    let total: f64 = predictions
        .iter()
        .map(|pred| match (kind, pred) {
            (SharpnessKind::ImpliedSigma, PredictiveDistribution::Gaussian(g)) => g.sigma,
            _ => {
                let width = pred.quantile_unchecked(0.95) - pred.quantile_unchecked(0.05);
                match kind {
                    SharpnessKind::ImpliedSigma => width / (2.0 * z95),
                    SharpnessKind::IntervalWidth => width,
                }
            }
        })
        .sum();
    total / predictions.len() as f64
}

/// CRPS in irradiance space, calibration and sharpness in clearness-index space.
pub fn verify(
    predictions: &[PredictiveDistribution],
    observed_k: &[f64],
    normalizers: &[f64],
    observed_ghi: &[f64],
    levels: &[f64],
    kind: CalibrationErrorKind,
) -> Result<VerificationRecord> {
    let mean_crps = mean_crps(predictions, observed_ghi, Some(normalizers))?;
    let level_curve = calibration_curve(predictions, observed_k, levels)?;
    Ok(VerificationRecord {
        mean_crps,
        calibration_error: curve_error(&level_curve, kind),
        sharpness: sharpness(predictions),
        n: predictions.len(),
        level_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{EnsemblePrediction, GaussianPrediction};

    fn gaussians(mu: &[f64], sigma: f64) -> Vec<PredictiveDistribution> {
        mu.iter().map(|&m| GaussianPrediction::new(m, sigma).into()).collect()
    }

    #[test]
    fn point_masses_score_zero() {
        let obs = [0.1, 0.5, 0.9];
        let preds: Vec<PredictiveDistribution> = obs
            .iter()
            .map(|&y| EnsemblePrediction::point_mass(y).unwrap().into())
            .collect();
        assert_eq!(mean_crps(&preds, &obs, None).unwrap(), 0.0);
        assert_eq!(sharpness(&preds), 0.0);
    }

    #[test]
    fn standard_normal_mean_crps() {
        let preds = gaussians(&[0.0; 5], 1.0);
        let crps = mean_crps(&preds, &[0.0; 5], None).unwrap();
        assert!((crps - 0.233_694_977_255_109_07).abs() < 1e-12);
    }

    #[test]
    fn constant_normalizer_scales_crps() {
        let preds = gaussians(&[0.3, 0.5, 0.7], 0.1);
        let obs_k = [0.35, 0.4, 0.9];
        let ghi: Vec<f64> = obs_k.iter().map(|k| k * 800.0).collect();
        let k_space = mean_crps(&preds, &obs_k, None).unwrap();
        let w_space = mean_crps(&preds, &ghi, Some(&[800.0; 3])).unwrap();
        assert!((w_space - 800.0 * k_space).abs() <= 1e-9 * w_space);
    }

    #[test]
    fn all_below_gives_half() {
        let preds = gaussians(&[10.0; 4], 1.0);
        let err = calibration_error(&preds, &[0.0; 4], &default_levels()).unwrap();
        assert!((err - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_levels_and_lengths() {
        let preds = gaussians(&[0.0], 1.0);
        assert_eq!(
            calibration_error(&preds, &[0.0], &[]),
            Err(MetricsError::InvalidLevels)
        );
        assert_eq!(
            calibration_curve(&preds, &[0.0], &[0.5, 0.5]),
            Err(MetricsError::InvalidLevels)
        );
        assert!(matches!(
            mean_crps(&preds, &[0.0, 1.0], None),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            mean_crps(&preds, &[0.0], Some(&[0.0])),
            Err(MetricsError::NonPositiveNormalizer(0))
        );
    }

    #[test]
    fn gaussian_sharpness_is_sigma() {
        let preds = gaussians(&[0.1, 0.2, 0.3], 0.2);
        assert!((sharpness(&preds) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ensemble_sharpness_uses_order_statistics() {
        let preds: Vec<PredictiveDistribution> =
            vec![EnsemblePrediction::new(vec![0.0, 1.0]).unwrap().into()];
        // type-7 on [0, 1]: q(p) = p
        let expect = (0.95 - 0.05) / (2.0 * normal::quantile(0.95));
        assert!((sharpness(&preds) - expect).abs() < 1e-15);
        assert!((sharpness_with(&preds, SharpnessKind::IntervalWidth) - 0.9).abs() < 1e-15);
    }
}
