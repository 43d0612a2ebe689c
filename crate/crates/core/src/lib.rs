//! Finite mixtures of linear regressions fitted by maximum likelihood, ridge
//! and Liu-type shrinkage under EM, classification EM and stochastic EM,
//! with a Monte-Carlo harness for estimation and prediction error.

pub mod engine;
pub mod evaluation;
pub mod error;
pub mod mixture;
pub mod numerics;
pub mod seed;
pub mod shrinkage;

pub use engine::{fit, fit_start, Engine, FitConfig, FitResult, Init, Method, StopReason};
pub use error::{Error, Result};
pub use mixture::{Dataset, MixtureParams, Responsibilities};
