//! Error type shared by all estimation routines.

/// Errors produced by data validation, fitting, and the posterior solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Region count outside `1..=n`.
    #[error("region count K={k} invalid for {n} samples (need 1 <= K <= n)")]
    InvalidK { k: usize, n: usize },

    /// Quantile cutoffs collided (tied scores).
    #[error("cutoff {index} is not strictly greater than its predecessor")]
    DuplicateCutoff { index: usize },

    /// A region received no samples during assignment.
    #[error("region {region} received no samples")]
    EmptyRegion { region: usize },

    /// A region fell below the configured minimum size.
    #[error("region {region} has {size} samples, below the minimum of {min}")]
    RegionTooSmall { region: usize, size: usize, min: usize },

    /// Treatment vector contains only one class.
    #[error("treatment vector is constant; logistic fit needs both classes")]
    SingleClass,

    /// Logistic coefficients diverged.
    #[error("logistic fit diverged: coefficient norm {norm:.3e} exceeds cap {cap:.3e}")]
    Separation { norm: f64, cap: f64 },

    /// IRLS ran out of iterations.
    #[error("logistic fit did not converge within {max_iter} iterations")]
    NoConvergence { max_iter: usize },

    /// Requested coordinate has a (near-)zero propensity coefficient.
    #[error("propensity coefficient {index} is below epsilon; coordinate solve is ill-posed")]
    ZeroCoefficient { index: usize },

    /// Every coefficient is below the adjustability threshold.
    #[error("no covariate dimension has a propensity coefficient above epsilon")]
    NoAdjustableDimension,

    /// Shape disagreement between inputs.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Cholesky failed even after jitter escalation.
    #[error("matrix is not positive definite after jitter escalation")]
    NotPositiveDefinite,

    /// Moments need at least two samples.
    #[error("need at least 2 samples to compute region moments, got {m}")]
    TooFewSamples { m: usize },

    /// Dense oracle refused an instance above its size cap.
    #[error("dense oracle dimension {dim} exceeds the cap of {cap}")]
    CapExceeded { dim: usize, cap: usize },

    /// Invalid input outside the other categories.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A per-region task failed; carries the region index.
    #[error("region {region}: {source}")]
    Region {
        region: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the region it occurred in.
    pub fn in_region(self, region: usize) -> Self {
        Error::Region { region, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
