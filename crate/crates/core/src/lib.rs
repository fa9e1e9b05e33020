//! Fairness preprocessing through Shapley attribution of discriminative risk.
//!
//! The crate is `no_std` with `alloc`. Everything here is pure computation over
//! in-memory matrices: tabular encoding, predictors, cross-group matching,
//! Shapley estimators, fairness metrics, the FairSHAP editing procedure, and the
//! comparison baselines. File formats, configuration, and the CLI live in the
//! `fairshap` companion crate.
//!
//! The `std` feature (on by default) parallelises per-row attribution with
//! rayon. Results are identical with or without it.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod fairness;
pub mod fairshap;
pub mod matching;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod shapley;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::Matrix;
