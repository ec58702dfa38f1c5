//! Block-structured Gaussian posterior machinery: prior assembly over
//! per-region effect/baseline processes and boundary-difference constraints,
//! precision-space Schur algebra, and the constrained posterior of the
//! treatment effect at test points.

mod blocks;
mod covariance;
mod posterior;
mod precision;

pub use blocks::{
    build_prior, delta_cross_cov, delta_delta_cov, BlockPriorCovariance, RegionLayout,
};
pub use covariance::{joint_covariance, CovarianceMode, JointCovariance};
pub use posterior::{
    dense_oracle_posterior, posterior_given_prior, posterior_hte, posterior_hte_traced,
    posterior_hte_with_assignment, PosteriorHte, DEFAULT_ORACLE_CAP,
};
pub use precision::{joint_precision, prior_precision, JointPrecision, PrecisionBlocks};
