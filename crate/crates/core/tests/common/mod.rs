//! Reference implementations used only by tests. Nothing here calls into the
//! library's own numerics.
#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

pub fn phi(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Inverse of `phi` by bisection.
pub fn normal_quantile_oracle(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid
        } else {
            hi = mid
        }
    }
    0.5 * (lo + hi)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// CRPS as the integral of (F(x) - 1{x >= y})^2 over [lo, hi], split at y.
pub fn crps_by_integration(cdf: impl Fn(f64) -> f64, y: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let below = simpson(|x| cdf(x).powi(2), lo, y.min(hi), n);
    let above = simpson(|x| (1.0 - cdf(x)).powi(2), y.max(lo), hi, n);
    below + above
}

pub fn gaussian_crps_numeric(mu: f64, sigma: f64, y: f64) -> f64 {
    let lo = mu.min(y) - 12.0 * sigma;
    let hi = mu.max(y) + 12.0 * sigma;
    crps_by_integration(|x| phi((x - mu) / sigma), y, lo, hi, 40_000)
}

/// E|X - y| - E|X - X'| / 2 over the empirical measure.
pub fn ensemble_crps_brute(xs: &[f64], y: f64) -> f64 {
    let n = xs.len() as f64;
    let a: f64 = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
    let mut b = 0.0;
    for xi in xs {
        for xj in xs {
            b += (xi - xj).abs();
        }
    }
    a - b / (2.0 * n * n)
}

pub fn piecewise_cdf(edges: &[f64], weights: &[f64], x: f64) -> f64 {
    let mut c = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let (a, b) = (edges[i], edges[i + 1]);
        if x >= b {
            c += w;
        } else if x > a {
            c += w * (x - a) / (b - a);
        }
    }
    c
}

/// Trapezoid integration of the squared CDF difference, with every edge and
/// the observation as a breakpoint so each piece is smooth.
pub fn piecewise_crps_trapezoid(edges: &[f64], weights: &[f64], y: f64, per_piece: usize) -> f64 {
    let mut pts: Vec<f64> = edges.to_vec();
    pts.push(y);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let step = if a >= y { 1.0 } else { 0.0 };
        total += trapezoid(|x| (piecewise_cdf(edges, weights, x) - step).powi(2), a, b, per_piece);
    }
    // outside [min(y, lo), max(y, hi)] the integrand is zero
    total
}

pub fn gaussian_nll(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    0.5 * z * z + sigma.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Golden-section minimizer of a unimodal function on [a, b].
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimizes mean Gaussian NLL of `(mu + a, s * sigma)` over (a, s) by
/// nested golden-section searches.
pub fn mle_numeric(mus: &[f64], sigmas: &[f64], ys: &[f64]) -> (f64, f64) {
    let nll = |a: f64, s: f64| -> f64 {
        mus.iter()
            .zip(sigmas)
            .zip(ys)
            .map(|((m, sg), y)| gaussian_nll(m + a, s * sg, *y))
            .sum::<f64>()
            / ys.len() as f64
    };
    let best_s = |a: f64| golden_min(|ls| nll(a, ls.exp()), -8.0, 8.0, 1e-12).exp();
    let spread = ys.iter().map(|y| y.abs()).fold(0.0, f64::max) + mus.iter().map(|m| m.abs()).fold(0.0, f64::max);
    let a = golden_min(|a| nll(a, best_s(a)), -spread - 1.0, spread + 1.0, 1e-11);
    (a, best_s(a))
}

/// Sample quantile of sorted data with linear interpolation (type 7).
pub fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn standard_normal(rng: &mut impl rand::Rng) -> f64 {
    // Box-Muller; u1 kept away from 0
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// y = sin(x) + eps * (0.1 + 0.2|x|), x uniform on [-3, 3]. Returns the
/// design matrix, targets and the true noise scale per row.
pub fn heteroscedastic(n: usize, seed: u64) -> (ndarray::Array2<f64>, Vec<f64>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let scale: Vec<f64> = xs.iter().map(|x| 0.1 + 0.2 * x.abs()).collect();
    let y: Vec<f64> = xs
        .iter()
        .zip(&scale)
        .map(|(x, s)| x.sin() + s * standard_normal(&mut rng))
        .collect();
    (ndarray::Array2::from_shape_vec((n, 1), xs).unwrap(), y, scale)
}

/// Gaussian data with known per-row scale; forecasts report `sigma_factor`
/// times the true scale.
pub fn gaussian_forecasts(
    n: usize,
    sigma_factor: f64,
    seed: u64,
) -> (Vec<solarcast::dist::GaussianPrediction>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut preds = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let mu = rng.gen_range(0.2..0.9);
        let sigma = rng.gen_range(0.03..0.15);
        ys.push(mu + sigma * standard_normal(&mut rng));
        preds.push(solarcast::dist::GaussianPrediction::new(mu, sigma_factor * sigma));
    }
    (preds, ys)
}

/// Mean |coverage - p| over levels 0.05..0.95, counting y strictly below
/// the quantile returned by `q(i, p)`.
pub fn coverage_error(ys: &[f64], q: impl Fn(usize, f64) -> f64) -> f64 {
    let levels: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
    let n = ys.len() as f64;
    levels
        .iter()
        .map(|&p| {
            let hits = ys.iter().enumerate().filter(|(i, &y)| y < q(*i, p)).count() as f64;
            (hits / n - p).abs()
        })
        .sum::<f64>()
        / levels.len() as f64
}
