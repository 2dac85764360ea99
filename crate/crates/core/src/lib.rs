//! Population average causal effects under propensity-score non-overlap.
//!
//! A sum-of-trees model imputes missing potential outcomes where both exposure
//! groups are well represented; a restricted-cubic-spline model fit to those
//! individual effects extrapolates into the tails, with predictive variance
//! that grows with distance from the supported region.

pub mod bart;
pub mod bootstrap;
pub mod data;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod overlap;
pub mod propensity;
pub mod rng;
pub mod simulation;
pub mod spline;
pub mod stats;

pub use data::{
    validate_dataset, ColumnKind, Estimand, EstimateSummary, ObservationalDataset, OutcomeType,
    PosteriorDraws, RawTable, ValidateOptions,
};
pub use error::{Error, Result};
