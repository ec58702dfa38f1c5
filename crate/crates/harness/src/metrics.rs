//! Point-estimate metrics: mean squared error, central credible intervals,
//! empirical coverage, and signed bias near partition boundaries.

use nalgebra::DVector;
use statrs::distribution::{ContinuousCDF, Normal};

use ppk_core::engine::PosteriorHte;

use crate::error::{HarnessError, Result};

/// Default credible level for intervals.
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Two-sided standard-normal quantile for a central interval at `level`.
pub fn z_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Aggregate accuracy and uncertainty metrics for one posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics {
    pub mse: f64,
    pub ci_length: f64,
    pub coverage: f64,
}

/// MSE of the posterior mean, mean central-interval width, and the fraction
/// of truths covered by their interval.
pub fn compute_metrics(
    post: &PosteriorHte<f64>,
    truth: &DVector<f64>,
    level: f64,
) -> Result<PointMetrics> {
    let m = post.len();
    if truth.len() != m {
        return Err(HarnessError::Config(format!(
            "posterior covers {m} points, truth has {}",
            truth.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(HarnessError::Config(format!("level must be in (0,1), got {level}")));
    }
    let z = z_quantile(level);
    let sd = post.sd();
    let mut mse = 0.0;
    let mut width = 0.0;
    let mut covered = 0usize;
    for i in 0..m {
        let err = post.mean[i] - truth[i];
        mse += err * err;
        let half = z * sd[i];
        width += 2.0 * half;
        if (truth[i] - post.mean[i]).abs() <= half {
            covered += 1;
        }
    }
    let mf = m as f64;
    Ok(PointMetrics { mse: mse / mf, ci_length: width / mf, coverage: covered as f64 / mf })
}

/// Signed bias of the estimates near one cutoff; `bias` is absent when no
/// point fell inside the margin.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundaryBiasCell {
    pub cutoff: f64,
    pub bias: Option<f64>,
    pub n_points: usize,
}

/// Mean `estimate - truth` over the test points whose score lies within
/// `margin` of each cutoff. Empty cells are reported, never errored.
pub fn boundary_bias(
    estimates: &DVector<f64>,
    truths: &DVector<f64>,
    scores: &DVector<f64>,
    cutoffs: &[f64],
    margin: f64,
) -> Vec<BoundaryBiasCell> {
    debug_assert_eq!(estimates.len(), truths.len());
    debug_assert_eq!(estimates.len(), scores.len());
    cutoffs
        .iter()
        .map(|&cutoff| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in 0..estimates.len() {
                if (scores[i] - cutoff).abs() <= margin {
                    sum += estimates[i] - truths[i];
                    count += 1;
                }
            }
            BoundaryBiasCell {
                cutoff,
                bias: (count > 0).then(|| sum / count as f64),
                n_points: count,
            }
        })
        .collect()
}
