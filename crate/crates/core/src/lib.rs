//! Predictive process monitoring under concept drift: event logs, outcome
//! labelling, prefix encoding, random forests (batch and incremental),
//! hyperparameter search, metrics, the strategy harness and a synthetic
//! drift generator.

// Negated comparisons are how NaN gets rejected in validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod driftgen;
pub mod encoding;
pub mod eventlog;
pub mod forest;
pub mod harness;
pub mod hyperopt;
pub mod metrics;
pub mod outcome;
pub mod par;
