//! Burst analysis for keyword frequency time series.
//!
//! The crate turns raw `(timestamp, user, keyword)` observations into
//! smoothed per-keyword frequency series, segments each series into
//! alternating baseline and burst periods with a Kleinberg-style state
//! automaton, and then characterises every burst:
//!
//! * [`features`] measures the preceding baseline fluctuation and the
//!   burst's size and peak,
//! * [`classify`] fits the peak-ratio / scaled-size relation and splits
//!   bursts into endogenous and exogenous with a slope −1 separator,
//! * [`fluct_response`] relates baseline fluctuation to the endo/exo
//!   split through ROC analysis and a critical threshold,
//! * [`size_dist`] fits power laws to per-class burst size CCDFs.
//!
//! [`synth`] and [`oracle`] provide a seeded ground-truth generator and
//! brute-force reference computations; [`pipeline`] wires everything into
//! a file-based batch run.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod detect;
pub mod error;
pub mod features;
pub mod fluct_response;
pub mod ingest;
pub mod io;
pub mod oracle;
pub mod pipeline;
pub mod size_dist;
mod stats;
pub mod synth;

pub use error::{Error, Result};
