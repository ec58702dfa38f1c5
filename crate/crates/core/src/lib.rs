//! Scalable Gaussian-process estimation of heterogeneous treatment effects.
//!
//! The estimator partitions samples by estimated propensity score, fits
//! independent partially-linear GP models per region, and restores
//! continuity of the effect surface across region boundaries by
//! conditioning the difference of neighboring local models to zero at
//! pseudo inputs pinned to each boundary's propensity value. Baselines
//! (one global GP, and unconstrained per-region GPs), synthetic data
//! generators, and the supporting covariance/precision algebra live here;
//! the Monte-Carlo harness and CLI are in the companion `ppk-harness`
//! crate.
//!
//! All numeric code is generic over the scalar type through [`num::Real`];
//! the `*64` aliases below fix the common double-precision choice.

pub mod baseline;
pub mod data;
pub mod dgp;
pub mod engine;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod num;
pub mod propensity;
pub mod pseudo;

pub use error::{Error, Result};

/// Double-precision aliases for the main public types.
pub type Dataset64 = data::Dataset<f64>;
pub type Partition64 = data::Partition<f64>;
pub type RegionHyperParams64 = data::RegionHyperParams<f64>;
pub type PropensityModel64 = propensity::PropensityModel<f64>;
pub type TuningGrid64 = kernel::TuningGrid<f64>;
pub type PseudoSet64 = pseudo::PseudoSet<f64>;
pub type PosteriorHte64 = engine::PosteriorHte<f64>;
pub type DgpSpec64 = dgp::DgpSpec<f64>;

/// Single-precision aliases.
pub type Dataset32 = data::Dataset<f32>;
pub type PosteriorHte32 = engine::PosteriorHte<f32>;
