//! Channel-wise deep-learning prediction of next-year patient healthcare
//! cost from administrative-claims time series.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`claims`] — ingest medical/pharmacy claim files and build per-patient
//!    day-level event sequences (optionally re-aggregated to week/month).
//! 2. [`embedding`] — train PV-DBOW event embeddings per code channel
//!    (each claim day is a document, its codes are the words).
//! 3. [`predictor`] — assemble and train the channel-wise BiGRU + attention
//!    cost model, or its single-channel ablation baseline.
//! 4. [`strata`] — multi-channel entropy index, quintile bucketing, and the
//!    six-category need-severity codifier.
//! 5. [`metrics`] — MAPE/MAE/underpay/overpay/netpay, Wilcoxon signed-rank
//!    significance, repeated random sub-sampling, stratified reports.
//!
//! [`synth`] generates seeded synthetic cohorts with controllable severity
//! tiers and a planted cross-channel cost signal so the whole pipeline is
//! verifiable without real data. [`nn`] is the minimal numeric layer as the
//! layer library underneath the predictor.

pub mod claims;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod predictor;
pub mod strata;
pub mod synth;

pub use error::{Error, Result};

/// Dollar amounts are plain f64 throughout; files carry them with two
/// decimal places.
pub type Dollars = f64;
