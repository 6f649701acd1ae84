mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solarcast::dist::{
    normal, DistError, EnsemblePrediction, GaussianPrediction, PiecewiseUniformPrediction, Predictive,
    PredictiveDistribution,
};

// 40-digit values from an arbitrary-precision library
const CDF_TABLE: [(f64, f64); 25] = [
    (-37.0, 5.7255712225245768e-300),
    (-30.0, 4.9067139271481871e-198),
    (-20.0, 2.7536241186062337e-89),
    (-10.0, 7.6198530241605261e-24),
    (-8.0, 6.2209605742717841e-16),
    (-6.0, 9.8658764503769814e-10),
    (-5.0, 2.8665157187919391e-7),
    (-4.21, 1.2768534413734954e-5),
    (-3.0, 0.0013498980316300945),
    (-2.0, 0.022750131948179207),
    (-1.5, 0.066807201268858066),
    (-1.0, 0.15865525393145705),
    (-0.5, 0.3085375387259869),
    (-0.1, 0.46017216272297102),
    (0.0, 0.5),
    (0.1, 0.53982783727702898),
    (0.5, 0.6914624612740131),
    (1.0, 0.84134474606854295),
    (1.5, 0.93319279873114193),
    (2.0, 0.97724986805182079),
    (3.0, 0.99865010196836991),
    (4.0, 0.99996832875816688),
    (5.0, 0.99999971334842812),
    (6.0, 0.99999999901341235),
    (8.0, 0.99999999999999938),
];

const QUANTILE_TABLE: [(f64, f64); 12] = [
    (1e-12, -7.0344838253011319),
    (1e-6, -4.7534243088228989),
    (0.001, -3.0902323061678135),
    (0.025, -1.9599639845400542),
    (0.1, -1.2815515655446005),
    (0.3, -0.52440051270804078),
    (0.5, 0.0),
    (0.7, 0.52440051270804078),
    (0.9, 1.2815515655446005),
    (0.975, 1.9599639845400542),
    (0.999, 3.0902323061678135),
    (0.999999, 4.7534243088228989),
];

#[test]
fn normal_cdf_reference_table() {
    for (z, want) in CDF_TABLE {
        let got = normal::cdf(z);
        assert!((got - want).abs() <= 1e-12 * want, "z={z}: {got} vs {want}");
    }
}

#[test]
fn normal_quantile_reference_table() {
    for (p, want) in QUANTILE_TABLE {
        let got = normal::quantile(p);
        // p itself is rounded to f64; in the tails dq/dp = 1/pdf magnifies that
        assert!((got - want).abs() <= 1e-11 * want.abs().max(1.0), "p={p}: {got} vs {want}");
    }
}

#[test]
fn normal_cdf_close_to_statrs() {
    let mut z = -30.0;
    while z < 9.0 {
        let want = phi(z);
        assert!((normal::cdf(z) - want).abs() <= 1e-300 + 1e-9 * want, "z={z}");
        z += 0.01;
    }
}

#[test]
fn normal_quantile_against_bisection() {
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        // bisection on the reference CDF
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) < p {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((normal::quantile(p) - 0.5 * (lo + hi)).abs() < 1e-9, "p={p}");
    }
    assert!((normal::quantile(0.975) - 1.959964).abs() < 1e-6);
}

#[test]
fn standard_gaussian_crps_at_zero() {
    let g = GaussianPrediction::new(0.0, 1.0);
    let numeric = gaussian_crps_numeric(0.0, 1.0, 0.0);
    assert!((g.crps(0.0) - numeric).abs() < 1e-9);
    // closed form 2*phi(0) - 1/sqrt(pi), to 8 digits
    assert!((g.crps(0.0) - 0.23369498).abs() < 1e-8);
    // the commonly quoted 7-digit value is off by 3.8e-7 in its last place
    assert!((g.crps(0.0) - 0.2336946).abs() < 1e-6);
}

#[test]
fn gaussian_crps_random_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let mu: f64 = rng.gen_range(-3.0..3.0);
        let sigma: f64 = rng.gen_range(0.05..4.0);
        let y: f64 = rng.gen_range(-8.0..8.0);
        let got = GaussianPrediction::new(mu, sigma).crps(y);
        let want = gaussian_crps_numeric(mu, sigma, y);
        assert!((got - want).abs() < 1e-6, "{mu} {sigma} {y}: {got} vs {want}");
    }
}

#[test]
fn ensemble_crps_matches_pairwise_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..=200 {
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = rng.gen_range(-3.0..3.0);
        let got = EnsemblePrediction::new(xs.clone()).unwrap().crps(y);
        assert!((got - ensemble_crps_brute(&xs, y)).abs() < 1e-10, "n={n}");
    }
    let two = EnsemblePrediction::new(vec![0.0, 2.0]).unwrap();
    assert!((two.crps(1.0) - 0.5).abs() < 1e-15);
}

#[test]
fn ensemble_crps_matches_integral() {
    let xs = vec![0.3, -0.4, 1.7, 0.3, 2.2];
    let e = EnsemblePrediction::new(xs.clone()).unwrap();
    for y in [-1.0, 0.3, 0.9, 3.0] {
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let cdf = |x: f64| sorted.iter().filter(|&&v| v <= x).count() as f64 / sorted.len() as f64;
        // step CDF: integrate exactly piece by piece
        let mut pts = sorted.clone();
        pts.push(y);
        pts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let step = if mid >= y { 1.0 } else { 0.0 };
            total += (cdf(mid) - step).powi(2) * (w[1] - w[0]);
        }
        assert!((e.crps(y) - total).abs() < 1e-12);
    }
}

#[test]
fn ensemble_quantile_is_type7() {
    let xs = vec![5.0, 1.0, 3.0, 2.0, 4.0, 10.0];
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let e = EnsemblePrediction::new(xs).unwrap();
    for i in 1..100 {
        let p = i as f64 / 100.0;
        assert!((e.quantile(p).unwrap() - type7(&sorted, p)).abs() < 1e-12);
    }
}

#[test]
fn piecewise_crps_matches_trapezoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.gen_range(1..12);
        let mut edges = vec![rng.gen_range(-0.2..0.2)];
        for _ in 0..n {
            let last = *edges.last().unwrap();
            edges.push(last + rng.gen_range(0.01..0.3));
        }
        let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        if n > 1 && rng.gen_bool(0.3) {
            weights[0] = 0.0;
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        let d = PiecewiseUniformPrediction::new(edges.clone(), weights.clone()).unwrap();
        let y = rng.gen_range(-0.5..2.5);
        let want = piecewise_crps_trapezoid(&edges, &weights, y, 2000);
        assert!((d.crps(y) - want).abs() < 1e-6, "{} vs {want}", d.crps(y));
    }
}

#[test]
fn invalid_probabilities_rejected() {
    let g = GaussianPrediction::new(0.0, 1.0);
    for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(matches!(g.quantile(p), Err(DistError::InvalidProbability(_))));
    }
    assert_eq!(EnsemblePrediction::new(vec![]).unwrap_err(), DistError::EmptyEnsemble);
}

#[test]
fn affine_crps_scales() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let d: PredictiveDistribution = match rng.gen_range(0..3) {
            0 => GaussianPrediction::new(rng.gen_range(0.0..1.0), rng.gen_range(0.01..0.5)).into(),
            1 => EnsemblePrediction::new((0..24).map(|_| rng.gen_range(0.0..1.2)).collect())
                .unwrap()
                .into(),
            _ => PiecewiseUniformPrediction::new(vec![0.0, 0.4, 0.8, 1.2], vec![0.2, 0.5, 0.3])
                .unwrap()
                .into(),
        };
        let y = rng.gen_range(0.0..1.2);
        let got = d.affine(3.0, 0.0).unwrap().crps(3.0 * y);
        assert!((got - 3.0 * d.crps(y)).abs() <= 1e-9 * (1.0 + got.abs()));
    }
}

fn any_dist() -> impl Strategy<Value = PredictiveDistribution> {
    prop_oneof![
        (-5.0..5.0f64, 0.01..3.0f64).prop_map(|(m, s)| GaussianPrediction::new(m, s).into()),
        prop::collection::vec(-5.0..5.0f64, 1..50)
            .prop_map(|xs| EnsemblePrediction::new(xs).unwrap().into()),
        (prop::collection::vec(0.01..1.0f64, 1..10), prop::collection::vec(0.0..1.0f64, 1..10), -2.0..2.0f64)
            .prop_filter_map("needs weight", |(widths, raw, start)| {
                let n = widths.len().min(raw.len());
                let total: f64 = raw[..n].iter().sum();
                if total <= 0.0 {
                    return None;
                }
                let mut edges = vec![start];
                for w in &widths[..n] {
                    edges.push(edges.last().unwrap() + w);
                }
                let weights = raw[..n].iter().map(|w| w / total).collect();
                PiecewiseUniformPrediction::new(edges, weights).ok().map(Into::into)
            }),
    ]
}

proptest! {
    #[test]
    fn crps_nonnegative(d in any_dist(), y in -10.0..10.0f64) {
        prop_assert!(d.crps(y) >= -1e-12);
    }

    #[test]
    fn crps_positive_homogeneity(d in any_dist(), y in -5.0..5.0f64, a in 0.1..20.0f64, b in -5.0..5.0f64) {
        let lhs = d.affine(a, b).unwrap().crps(a * y + b);
        let rhs = a * d.crps(y);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn gaussian_quantile_cdf_inverse(m in -5.0..5.0f64, s in 0.01..3.0f64, p in 0.001..0.999f64) {
        let g = GaussianPrediction::new(m, s);
        prop_assert!((g.cdf(g.quantile(p).unwrap()) - p).abs() < 1e-9);
    }

    #[test]
    fn piecewise_quantile_cdf_inverse(d in any_dist(), p in 0.001..0.999f64) {
        if let PredictiveDistribution::PiecewiseUniform(pw) = &d {
            let q = pw.quantile(p).unwrap();
            // strictly increasing wherever the containing bin has mass
            let i = pw.edges().partition_point(|&e| e <= q).saturating_sub(1).min(pw.weights().len() - 1);
            if pw.weights()[i] > 1e-9 {
                prop_assert!((pw.cdf(q) - p).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cdf_nondecreasing(d in any_dist(), a in -6.0..6.0f64, step in 0.0..3.0f64) {
        prop_assert!(d.cdf(a) <= d.cdf(a + step) + 1e-15);
    }

    #[test]
    fn point_mass_crps_is_absolute_error(x in -5.0..5.0f64, y in -5.0..5.0f64) {
        let e = EnsemblePrediction::point_mass(x).unwrap();
        prop_assert!((e.crps(y) - (x - y).abs()).abs() < 1e-12);
    }
}
