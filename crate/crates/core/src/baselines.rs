//! Reference forecasters: complete-history persistence ensemble (CH-P),
//! trailing-window persistence ensemble (PeEn) and the Markov-chain mixture
//! (MCM).

use crate::dist::{DistError, EnsemblePrediction, PiecewiseUniformPrediction};
use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("no training values in time-of-day slot {0}")]
    EmptyBucket(u32),
    #[error("persistence window holds {have} valid values, need {need}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("training values span a zero-width range")]
    DegenerateRange,
    #[error("no training values")]
    EmptyTraining,
    #[error("need at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("slot width must divide a day into whole minutes, got {0}")]
    InvalidSlot(u32),
    #[error("{times} timestamps but {values} values")]
    LengthMismatch { times: usize, values: usize },
    #[error(transparent)]
    Dist(#[from] DistError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

pub const DEFAULT_MCM_STATES: usize = 30;
pub const PEEN_WINDOW_MINUTES: i64 = 120;

/// Historical clearness values grouped by time-of-day slot (UTC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChpModel {
    pub slot_minutes: u32,
    /// Slot index -> values, ascending.
    pub buckets: BTreeMap<u32, Vec<f64>>,
}

impl ChpModel {
    pub fn slot_of(&self, t: DateTime<Utc>) -> u32 {
        (t.hour() * 60 + t.minute()) / self.slot_minutes
    }

    pub fn n_slots(&self) -> u32 {
        24 * 60 / self.slot_minutes
    }

    /// Every `(time, k)` pair lands in the slot of its time of day.
    pub fn fit(times: &[DateTime<Utc>], values: &[f64], slot_minutes: u32) -> Result<Self> {
        if slot_minutes == 0 || (24 * 60) % slot_minutes != 0 {
            return Err(BaselineError::InvalidSlot(slot_minutes));
        }
        if times.len() != values.len() {
            return Err(BaselineError::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if values.is_empty() {
            return Err(BaselineError::EmptyTraining);
        }
        let mut model = Self {
            slot_minutes,
            buckets: BTreeMap::new(),
        };
        for (&t, &k) in times.iter().zip(values) {
            let slot = model.slot_of(t);
            model.buckets.entry(slot).or_default().push(k);
        }
        for b in model.buckets.values_mut() {
            b.sort_by(f64::total_cmp);
        }
        Ok(model)
    }

    pub fn forecast(&self, target_time: DateTime<Utc>) -> Result<EnsemblePrediction> {
        let slot = self.slot_of(target_time);
        let bucket = self.buckets.get(&slot).ok_or(BaselineError::EmptyBucket(slot))?;
        Ok(EnsemblePrediction::new(bucket.clone())?)
    }

    /// Like [`forecast`](Self::forecast) but an empty slot borrows the
    /// nearest filled slot on the daily circle; the earlier slot wins a tie.
    pub fn forecast_nearest(&self, target_time: DateTime<Utc>) -> Result<EnsemblePrediction> {
        let slot = self.slot_of(target_time);
        if self.buckets.contains_key(&slot) {
            return self.forecast(target_time);
        }
        let n = self.n_slots();
        for d in 1..=n / 2 {
            for s in [(slot + n - d) % n, (slot + d) % n] {
                if let Some(b) = self.buckets.get(&s) {
                    return Ok(EnsemblePrediction::new(b.clone())?);
                }
            }
        }
        Err(BaselineError::EmptyBucket(slot))
    }
}

/// Ensemble of the valid values in a trailing window.
pub fn peen_forecast(history: &[Option<f64>], min_members: usize) -> Result<EnsemblePrediction> {
    let members: Vec<f64> = history.iter().flatten().copied().collect();
    if members.len() < min_members.max(1) {
        return Err(BaselineError::InsufficientHistory {
            have: members.len(),
            need: min_members.max(1),
        });
    }
    Ok(EnsemblePrediction::new(members)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmModel {
    pub edges: Vec<f64>,
    /// Row-stochastic; row `i` is the distribution of the state `horizon`
    /// steps after a visit to state `i`.
    pub transition: Vec<Vec<f64>>,
    pub n_states: usize,
    pub horizon: usize,
}

impl McmModel {
    /// Counts state pairs `horizon` steps apart inside each day. Missing
    /// values break no chain beyond their own pairs; days never link.
    pub fn fit(days: &[Vec<Option<f64>>], n_states: usize, horizon: usize) -> Result<Self> {
        if n_states < 2 {
            return Err(BaselineError::TooFewStates(n_states));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in days.iter().flatten().flatten() {
            lo = lo.min(*k);
            hi = hi.max(*k);
        }
        if !lo.is_finite() {
            return Err(BaselineError::EmptyTraining);
        }
        if !(hi > lo) {
            return Err(BaselineError::DegenerateRange);
        }
        let width = (hi - lo) / n_states as f64;
        let mut edges: Vec<f64> = (0..=n_states).map(|i| lo + width * i as f64).collect();
        edges[n_states] = hi;
        let mut model = Self {
            edges,
            transition: vec![vec![0.0; n_states]; n_states],
            n_states,
            horizon,
        };
        let mut counts = vec![vec![0u64; n_states]; n_states];
        for day in days {
            for t in 0..day.len().saturating_sub(horizon) {
                if let (Some(a), Some(b)) = (day[t], day[t + horizon]) {
                    counts[model.state_of(a)][model.state_of(b)] += 1;
                }
            }
        }
        for (row, c) in model.transition.iter_mut().zip(&counts) {
            let total: u64 = c.iter().sum();
            if total == 0 {
                row.iter_mut().for_each(|w| *w = 1.0 / n_states as f64);
            } else {
                for (w, &n) in row.iter_mut().zip(c) {
                    *w = n as f64 / total as f64;
                }
            }
        }
        Ok(model)
    }

    /// State of `k`, clamping values outside the training range.
    pub fn state_of(&self, k: f64) -> usize {
        let lo = self.edges[0];
        let width = (self.edges[self.n_states] - lo) / self.n_states as f64;
        let s = ((k - lo) / width).floor();
        if !(s > 0.0) {
            0
        } else {
            (s as usize).min(self.n_states - 1)
        }
    }

    pub fn forecast(&self, current_k: f64) -> Result<PiecewiseUniformPrediction> {
        let row = &self.transition[self.state_of(current_k)];
        Ok(PiecewiseUniformPrediction::new(self.edges.clone(), row.clone())?)
    }
}
