//! Monte-Carlo evaluation harness for the treatment-effect estimators in
//! `ppk-core`: replicated simulations, accuracy/uncertainty metrics,
//! CSV/JSON serialization, and the pipeline behind the `ppk` binary.

pub mod error;
pub mod fit;
pub mod io;
pub mod metrics;
pub mod sim;

pub use error::{HarnessError, Result};
