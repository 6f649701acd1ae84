//! Natural-gradient boosting with a Gaussian output distribution.
//!
//! Parameters are (mu, log sigma). Each stage fits one tree per parameter to
//! the Fisher-preconditioned gradient of the negative log-likelihood, picks a
//! step scale by line search on the full training set and moves every
//! example's parameters against the tree outputs.

mod tree;

pub use tree::{fit_tree, Node, RegressionTree, TreeBuilder};

use crate::dist::{GaussianPrediction, SIGMA_FLOOR};
use crate::ingest::SupervisedDataset;
use crate::persist::{self, PersistError};
use ndarray::ArrayView2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NgboostError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{rows} feature rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite training target at row {0}")]
    NonFiniteTarget(usize),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

pub type Result<T> = std::result::Result<T, NgboostError>;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Step scales tried by the per-stage line search: 2^0 down to 2^-8.
pub const LINE_SEARCH_STEPS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGBoostConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub minibatch_frac: f64,
    pub seed: u64,
}

impl Default for NGBoostConfig {
    fn default() -> Self {
        Self {
            n_estimators: 500,
            learning_rate: 0.01,
            max_depth: 3,
            min_samples_leaf: 1,
            minibatch_frac: 1.0,
            seed: 0,
        }
    }
}

impl NGBoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NgboostError::InvalidConfig(m.to_string()));
        if self.n_estimators == 0 {
            return bad("n_estimators must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        if !(self.minibatch_frac > 0.0 && self.minibatch_frac <= 1.0) {
            return bad("minibatch_frac must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub tree_mu: RegressionTree,
    pub tree_log_sigma: RegressionTree,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Ran all `n_estimators` stages.
    Completed,
    /// A stage's line search found no step that lowered the training NLL.
    NoImprovement,
    /// Targets have zero variance; the model is the initial constant.
    DegenerateTargets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGBoostModel {
    pub config: NGBoostConfig,
    pub n_features: usize,
    pub init_mu: f64,
    pub init_log_sigma: f64,
    pub stages: Vec<Stage>,
    /// Mean training NLL before the first stage and after each accepted one.
    pub nll_trace: Vec<f64>,
    pub termination: Termination,
}

/// Fisher-preconditioned NLL gradient of a Gaussian in (mu, log sigma).
/// The Fisher information is diag(1/sigma^2, 2).
pub fn natural_gradient(mu: f64, log_sigma: f64, y: f64) -> (f64, f64) {
    let z = (y - mu) / log_sigma.exp();
    (mu - y, 0.5 * (1.0 - z * z))
}

/// Gaussian negative log-likelihood parameterized by log sigma.
pub fn gaussian_nll(mu: f64, log_sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / log_sigma.exp();
    HALF_LN_2PI + log_sigma + 0.5 * z * z
}

fn mean_nll(mu: &[f64], log_sigma: &[f64], y: &[f64]) -> f64 {
    let s: f64 = mu
        .iter()
        .zip(log_sigma)
        .zip(y)
        .map(|((&m, &l), &t)| gaussian_nll(m, l, t))
        .sum();
    s / y.len() as f64
}

fn stepped_nll(mu: &[f64], ls: &[f64], dmu: &[f64], dls: &[f64], step: f64, y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += gaussian_nll(mu[i] - step * dmu[i], ls[i] - step * dls[i], y[i]);
    }
    s / y.len() as f64
}

pub fn ngboost_fit_dataset(dataset: &SupervisedDataset, config: &NGBoostConfig) -> Result<NGBoostModel> {
    ngboost_fit(dataset.features.view(), &dataset.targets_k, config)
}

pub fn ngboost_fit(x: ArrayView2<'_, f64>, y: &[f64], config: &NGBoostConfig) -> Result<NGBoostModel> {
    config.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(NgboostError::EmptyDataset);
    }
    if x.nrows() != n {
        return Err(NgboostError::LengthMismatch {
            rows: x.nrows(),
            targets: n,
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(NgboostError::NonFiniteTarget(i));
    }

    // a constant sample can average to a neighbouring float; keep it exact
    let init_mu = if y.iter().all(|&v| v == y[0]) {
        y[0]
    } else {
        y.iter().sum::<f64>() / n as f64
    };
    let var = y.iter().map(|v| (v - init_mu).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let mut model = NGBoostModel {
        config: config.clone(),
        n_features: x.ncols(),
        init_mu,
        init_log_sigma: std.max(SIGMA_FLOOR).ln(),
        stages: Vec::new(),
        nll_trace: Vec::new(),
        termination: Termination::Completed,
    };
    if !(std > SIGMA_FLOOR) {
        model.termination = Termination::DegenerateTargets;
        return Ok(model);
    }

    let mut mu = vec![init_mu; n];
    let mut ls = vec![model.init_log_sigma; n];
    let mut current = mean_nll(&mu, &ls, y);
    model.nll_trace.push(current);

    let builder = TreeBuilder::new(x);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let batch_size = ((config.minibatch_frac * n as f64).round() as usize).clamp(1, n);
    let mut mask = vec![false; n];
    let (mut g_mu, mut g_ls) = (vec![0.0; n], vec![0.0; n]);
    let eta = config.learning_rate;

    for _ in 0..config.n_estimators {
        let use_mask = batch_size < n;
        if use_mask {
            mask.iter_mut().for_each(|m| *m = false);
            for i in index::sample(&mut rng, n, batch_size) {
                mask[i] = true;
            }
        }
        for i in 0..n {
            if !use_mask || mask[i] {
                (g_mu[i], g_ls[i]) = natural_gradient(mu[i], ls[i], y[i]);
            }
        }
        let m = use_mask.then_some(mask.as_slice());
        let (tree_mu, tree_log_sigma) = rayon::join(
            || builder.fit(&g_mu, m, config.max_depth, config.min_samples_leaf),
            || builder.fit(&g_ls, m, config.max_depth, config.min_samples_leaf),
        );
        let dmu = tree_mu.predict(x);
        let dls = tree_log_sigma.predict(x);

        let mut best: Option<(f64, f64)> = None;
        for k in 0..LINE_SEARCH_STEPS {
            let rho = 0.5f64.powi(k as i32);
            let v = stepped_nll(&mu, &ls, &dmu, &dls, rho, y);
            if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
                best = Some((rho, v));
            }
        }
        let Some((rho, searched)) = best else {
            model.termination = Termination::NoImprovement;
            break;
        };
        let next = stepped_nll(&mu, &ls, &dmu, &dls, eta * rho, y);
        if !(searched < current) || !(next < current) {
            model.termination = Termination::NoImprovement;
            break;
        }
        for i in 0..n {
            mu[i] -= eta * rho * dmu[i];
            ls[i] -= eta * rho * dls[i];
        }
        current = next;
        model.nll_trace.push(current);
        model.stages.push(Stage {
            tree_mu,
            tree_log_sigma,
            rho,
        });
    }
    Ok(model)
}

impl NGBoostModel {
    fn raw_params(&self, row: &[f64]) -> (f64, f64) {
        let eta = self.config.learning_rate;
        let (mut mu, mut ls) = (self.init_mu, self.init_log_sigma);
        for s in &self.stages {
            mu -= eta * s.rho * s.tree_mu.predict_row(row);
            ls -= eta * s.rho * s.tree_log_sigma.predict_row(row);
        }
        (mu, ls)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<GaussianPrediction>> {
        if x.ncols() != self.n_features {
            return Err(NgboostError::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let mut buf = vec![0.0; x.ncols()];
        Ok(x
            .rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                let (mu, ls) = self.raw_params(&buf);
                GaussianPrediction::new(mu, ls.exp())
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(persist::to_json(persist::NGBOOST_MODEL, self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(persist::from_json(persist::NGBOOST_MODEL, text)?)
    }
}
