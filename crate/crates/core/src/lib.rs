//! Probabilistic solar irradiance forecasting.
//!
//! Models are trained on the clearness index (GHI over an extraterrestrial or
//! clear-sky normalizer) and verified on irradiance with the CRPS.

pub mod baselines;
pub mod calibrate;
pub mod ingest;
pub mod dist;
pub mod harness;
pub mod metrics;
pub mod ngboost;
pub mod persist;
pub mod synth;
