mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solarcast::dist::{EnsemblePrediction, GaussianPrediction, Predictive, PredictiveDistribution};
use solarcast::metrics::{
    calibration_curve, calibration_error, calibration_error_with, default_levels, mean_crps, sharpness,
    sharpness_with, verify, CalibrationErrorKind, MetricsError, SharpnessKind,
};

fn as_dists(preds: &[GaussianPrediction]) -> Vec<PredictiveDistribution> {
    preds.iter().map(|&g| g.into()).collect()
}

#[test]
fn standard_normal_at_zero() {
    let preds = vec![PredictiveDistribution::from(GaussianPrediction::new(0.0, 1.0)); 10];
    let crps = mean_crps(&preds, &[0.0; 10], None).unwrap();
    assert!((crps - gaussian_crps_numeric(0.0, 1.0, 0.0)).abs() < 1e-9);
}

#[test]
fn mean_crps_is_average_of_numeric_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut preds = Vec::new();
    let mut ys = Vec::new();
    let mut oracle = 0.0;
    for _ in 0..50 {
        let (mu, sigma, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.1..3.0), rng.gen_range(-4.0..4.0));
        oracle += gaussian_crps_numeric(mu, sigma, y);
        preds.push(PredictiveDistribution::from(GaussianPrediction::new(mu, sigma)));
        ys.push(y);
    }
    let crps = mean_crps(&preds, &ys, None).unwrap();
    assert!((crps - oracle / 50.0).abs() < 1e-8);
}

#[test]
fn calibrated_draws_score_near_zero() {
    let (preds, ys) = gaussian_forecasts(100_000, 1.0, 5);
    let err = calibration_error(&as_dists(&preds), &ys, &default_levels()).unwrap();
    assert!(err < 0.01, "{err}");
    // same number from the test-side counter
    let z: Vec<f64> = (1..=19).map(|i| normal_quantile_oracle(i as f64 / 20.0)).collect();
    let oracle = coverage_error(&ys, |i, p| preds[i].mu + preds[i].sigma * z[(p * 20.0).round() as usize - 1]);
    assert!((err - oracle).abs() < 1e-3, "{err} vs {oracle}");
}

#[test]
fn observations_below_every_quantile() {
    let preds = vec![PredictiveDistribution::from(GaussianPrediction::new(100.0, 1.0)); 20];
    let err = calibration_error(&preds, &[0.0; 20], &default_levels()).unwrap();
    // coverage is 1 everywhere: mean of 1 - p over 0.05..0.95
    assert!((err - 0.5).abs() < 1e-12);
    let sq = calibration_error_with(&preds, &[0.0; 20], &default_levels(), CalibrationErrorKind::Squared).unwrap();
    let oracle: f64 = (1..=19).map(|i| (1.0 - i as f64 / 20.0).powi(2)).sum::<f64>() / 19.0;
    assert!((sq - oracle).abs() < 1e-12);
}

#[test]
fn overconfident_curve_sits_below_diagonal_above_median() {
    let (preds, ys) = gaussian_forecasts(20_000, 0.5, 9);
    let curve = calibration_curve(&as_dists(&preds), &ys, &default_levels()).unwrap();
    for (p, hit) in curve {
        if p > 0.5 {
            assert!(hit < p, "level {p}: {hit}");
        } else if p < 0.5 {
            assert!(hit > p, "level {p}: {hit}");
        }
    }
}

#[test]
fn coverage_stays_in_binomial_band() {
    let n = 2_000;
    for seed in 0..5 {
        let (preds, ys) = gaussian_forecasts(n, 1.0, 100 + seed);
        let curve = calibration_curve(&as_dists(&preds), &ys, &default_levels()).unwrap();
        for (p, hit) in curve {
            let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((hit - p).abs() < band, "seed {seed} level {p}: {hit}");
        }
    }
}

#[test]
fn ensemble_sharpness_from_type7_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut preds = Vec::new();
    let mut oracle = 0.0;
    for _ in 0..30 {
        let n = rng.gen_range(2..60);
        let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.2)).collect();
        xs.sort_by(f64::total_cmp);
        oracle += type7(&xs, 0.95) - type7(&xs, 0.05);
        preds.push(PredictiveDistribution::from(EnsemblePrediction::new(xs).unwrap()));
    }
    let width = sharpness_with(&preds, SharpnessKind::IntervalWidth);
    assert!((width - oracle / 30.0).abs() < 1e-12);
    let sigma_like = sharpness(&preds);
    assert!((sigma_like - oracle / 30.0 / (2.0 * normal_quantile_oracle(0.95))).abs() < 1e-9);
}

#[test]
fn gaussian_sharpness_is_mean_sigma() {
    let preds: Vec<PredictiveDistribution> = [0.1, 0.2, 0.6]
        .iter()
        .map(|&s| GaussianPrediction::new(0.5, s).into())
        .collect();
    assert!((sharpness(&preds) - 0.3).abs() < 1e-15);
    // through the interval route the answer agrees
    let width = sharpness_with(&preds, SharpnessKind::IntervalWidth);
    assert!((width - 0.3 * 2.0 * normal_quantile_oracle(0.95)).abs() < 1e-9);
}

#[test]
fn verify_splits_spaces() {
    let (preds, ks) = gaussian_forecasts(60, 1.0, 4);
    let dists = as_dists(&preds);
    let e: Vec<f64> = (0..60).map(|i| 300.0 + 10.0 * i as f64).collect();
    let ghi: Vec<f64> = ks.iter().zip(&e).map(|(k, e)| k * e).collect();
    let rec = verify(&dists, &ks, &e, &ghi, &default_levels(), CalibrationErrorKind::Absolute).unwrap();
    let oracle: f64 = preds
        .iter()
        .zip(&ghi)
        .zip(&e)
        .map(|((g, y), e)| gaussian_crps_numeric(g.mu * e, g.sigma * e, *y))
        .sum::<f64>()
        / 60.0;
    assert!((rec.mean_crps - oracle).abs() < 1e-6 * oracle);
    assert_eq!(rec.n, 60);
    assert_eq!(rec.calibration_error, calibration_error(&dists, &ks, &default_levels()).unwrap());
    assert_eq!(rec.sharpness, sharpness(&dists));
}

#[test]
fn metric_errors() {
    let preds = vec![PredictiveDistribution::from(GaussianPrediction::new(0.0, 1.0)); 2];
    assert!(matches!(
        mean_crps(&preds, &[0.0], None),
        Err(MetricsError::LengthMismatch { predictions: 2, observations: 1 })
    ));
    assert_eq!(mean_crps(&[], &[], None), Err(MetricsError::Empty));
    assert_eq!(
        mean_crps(&preds, &[0.0, 0.0], Some(&[1.0, 0.0])),
        Err(MetricsError::NonPositiveNormalizer(1))
    );
    for bad in [vec![], vec![0.0, 0.5], vec![0.5, 0.5], vec![0.5, 1.0], vec![0.6, 0.4]] {
        assert_eq!(calibration_error(&preds, &[0.0, 0.0], &bad), Err(MetricsError::InvalidLevels));
    }
}

proptest! {
    #[test]
    fn pit_curve_invariant_under_affine_maps(
        seed in 0u64..1000,
        scale in 0.1f64..50.0,
        shift in -100.0f64..100.0,
    ) {
        let (preds, ys) = gaussian_forecasts(300, 0.8, seed);
        let dists = as_dists(&preds);
        let moved: Vec<PredictiveDistribution> = dists.iter().map(|d| d.affine(scale, shift).unwrap()).collect();
        let ys2: Vec<f64> = ys.iter().map(|y| scale * y + shift).collect();
        let a = calibration_curve(&dists, &ys, &default_levels()).unwrap();
        let b = calibration_curve(&moved, &ys2, &default_levels()).unwrap();
        // a rounding flip can move at most one observation per level
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1.0 / 300.0 + 1e-12);
        }
    }

    #[test]
    fn crps_homogeneous_in_normalizer(
        mu in 0.0f64..1.2,
        sigma in 0.01f64..0.5,
        k in 0.0f64..1.2,
        e in 1.0f64..1400.0,
    ) {
        let pred = vec![PredictiveDistribution::from(GaussianPrediction::new(mu, sigma))];
        let unit = mean_crps(&pred, &[k], None).unwrap();
        let scaled = mean_crps(&pred, &[k * e], Some(&[e])).unwrap();
        prop_assert!((scaled - e * unit).abs() <= 1e-9 * (1.0 + scaled));
    }

    #[test]
    fn ensemble_crps_nonnegative_and_zero_at_point_mass(xs in prop::collection::vec(-5.0f64..5.0, 1..40), y in -6.0f64..6.0) {
        let e = EnsemblePrediction::new(xs.clone()).unwrap();
        prop_assert!(e.crps(y) >= -1e-12);
        prop_assert!((e.crps(y) - ensemble_crps_brute(&xs, y)).abs() < 1e-9);
    }
}
