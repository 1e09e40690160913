//! Additive discrete time-to-event models fitted by batchwise backfitting.
//!
//! Person-level records are expanded into person-period rows
//! ([`data::augment`]), each model term gets a penalized basis
//! ([`basis::Design`]), and the hazard `λ(t | x) = logit⁻¹(η)` with
//! `η = Σ_j X_j β_j` is estimated on random individual-level batches by
//! [`engine::fit`]: a boosting pass that selects terms and smoothing
//! parameters on out-of-batch data, followed by a resampling refit of the
//! selected terms.
//!
//! The numerical core is generic over [`Scalar`] (`f32`, `f64`); the
//! aliases below fix it to `f64`.

pub mod basis;
pub mod data;
pub mod engine;
mod error;
pub mod linalg;
pub mod model;
pub mod predict;
mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Design = basis::Design<f64>;
pub type DesignBlock = basis::DesignBlock<f64>;
pub type ModelState = model::ModelState<f64>;
pub type Frame<'a> = model::Frame<'a, f64>;
pub type FitReport = engine::FitReport<f64>;
pub use engine::EngineConfig;
pub type FittedModel = predict::FittedModel<f64>;

pub type Design32 = basis::Design<f32>;
pub type ModelState32 = model::ModelState<f32>;
pub type FitReport32 = engine::FitReport<f32>;
