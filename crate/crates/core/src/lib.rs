//! Targeted estimation of the treatment-specific mean.
//!
//! Four estimators over a shared highly-adaptive-lasso initial fit: the HAL
//! plug-in, the relaxed-HAL plug-in, vanilla TMLE, and score-preserving
//! TMLE (a multi-dimensional targeting step that keeps the relaxed fit's
//! score equations solved while solving the efficient influence function).
//! A seeded Monte Carlo harness reproduces the bias/variance/MSE/coverage
//! comparison across three treatment mechanisms.
//!
//! Core math is generic over the scalar type via [`num::Scalar`]; the
//! aliases below pin the `f64` instantiations the CLI and harness use.

pub mod basis;
pub mod cli;
pub mod data;
pub mod dgp;
pub mod glm;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod num;
pub mod svg;
pub mod targeting;

pub use num::{expit, logit, Scalar};

/// `f64` instantiations of the core types.
pub type Dataset = data::Dataset<f64>;
pub type EstimateReport = data::EstimateReport<f64>;
pub type BasisExpansion = basis::BasisExpansion<f64>;
pub type OutcomeModel = glm::OutcomeModel<f64>;
pub type PropensityModel = glm::PropensityModel<f64>;
pub type FitConfig = glm::FitConfig<f64>;
pub type TargetingConfig = targeting::TargetingConfig<f64>;
pub type TargetingState = targeting::TargetingState<f64>;
pub type SweepConfig = harness::SweepConfig<f64>;
pub type CellSummary = harness::CellSummary<f64>;
