//! Core data containers and propensity-score partitioning.
//!
//! A [`Partition`] splits samples into `K` ordered regions by propensity
//! score. Intervals are left-closed, right-open, except the last region
//! which is closed on the right; a score exactly at a cutoff therefore
//! lands in the upper region.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::Real;

/// Default minimum number of samples a region must hold; tiny regions make
/// the local Gram matrices degenerate.
pub const DEFAULT_MIN_REGION_SIZE: usize = 5;

/// Observational dataset: covariates, outcome, binary treatment, and an
/// optional ground-truth effect column carried by synthetic data.
#[derive(Debug, Clone)]
pub struct Dataset<R: Real> {
    pub x: DMatrix<R>,
    pub y: DVector<R>,
    pub t: Vec<u8>,
    pub true_theta: Option<DVector<R>>,
}

impl<R: Real> Dataset<R> {
    /// Validate and build a dataset.
    pub fn new(
        x: DMatrix<R>,
        y: DVector<R>,
        t: Vec<u8>,
        true_theta: Option<DVector<R>>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Invalid("dataset must contain at least one row".into()));
        }
        if y.len() != n || t.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "X has {n} rows but y has {} and t has {}",
                y.len(),
                t.len()
            )));
        }
        if let Some(tt) = &true_theta {
            if tt.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "true_theta has {} entries for {n} rows",
                    tt.len()
                )));
            }
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("X and y must be finite".into()));
        }
        if t.iter().any(|&v| v > 1) {
            return Err(Error::Invalid("treatment entries must be 0 or 1".into()));
        }
        Ok(Self { x, y, t, true_theta })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Copy out the rows listed in `idx`.
    pub fn subset(&self, idx: &[usize]) -> RegionSlice<R> {
        RegionSlice {
            x: self.x.select_rows(idx.iter()),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            t: idx.iter().map(|&i| self.t[i]).collect(),
        }
    }

    /// View the whole dataset as a single slice.
    pub fn full_slice(&self) -> RegionSlice<R> {
        RegionSlice { x: self.x.clone(), y: self.y.clone(), t: self.t.clone() }
    }
}

/// Owned copy of one region's rows.
#[derive(Debug, Clone)]
pub struct RegionSlice<R: Real> {
    pub x: DMatrix<R>,
    pub y: DVector<R>,
    pub t: Vec<u8>,
}

/// Per-region kernel smoothness and noise-precision hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionHyperParams<R: Real> {
    pub gamma_theta: R,
    pub gamma_f: R,
    pub s_eps: R,
}

impl<R: Real> RegionHyperParams<R> {
    pub fn new(gamma_theta: R, gamma_f: R, s_eps: R) -> Result<Self> {
        for (name, v) in [("gamma_theta", gamma_theta), ("gamma_f", gamma_f), ("s_eps", s_eps)] {
            if !(v.is_finite() && v > R::zero()) {
                return Err(Error::Invalid(format!("{name} must be finite and positive")));
            }
        }
        Ok(Self { gamma_theta, gamma_f, s_eps })
    }
}

/// `K` ordered regions over the unit interval, defined by `K-1` strictly
/// increasing cutoffs, plus the 0-based region index of every sample.
#[derive(Debug, Clone)]
pub struct Partition<R: Real> {
    k: usize,
    cutoffs: Vec<R>,
    assignment: Vec<usize>,
    region_indices: Vec<Vec<usize>>,
}

impl<R: Real> Partition<R> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cutoffs(&self) -> &[R] {
        &self.cutoffs
    }

    /// 0-based region index per sample.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Sample indices belonging to region `k`, in dataset order.
    pub fn region(&self, k: usize) -> &[usize] {
        &self.region_indices[k]
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        self.region_indices.iter().map(Vec::len).collect()
    }

    /// Enforce a minimum region size on an existing partition.
    pub fn require_min_size(&self, min: usize) -> Result<()> {
        for (k, idx) in self.region_indices.iter().enumerate() {
            if idx.len() < min {
                return Err(Error::RegionTooSmall { region: k, size: idx.len(), min });
            }
        }
        Ok(())
    }
}

/// 0-based region index of a score under the left-closed/right-open rule.
pub fn region_of<R: Real>(score: R, cutoffs: &[R]) -> usize {
    cutoffs.iter().take_while(|&&c| score >= c).count()
}

fn validate_cutoffs<R: Real>(cutoffs: &[R]) -> Result<()> {
    for (i, &c) in cutoffs.iter().enumerate() {
        if !(c > R::zero() && c < R::one()) {
            return Err(Error::Invalid(format!("cutoff {i} must lie in (0, 1)")));
        }
        if i > 0 && c <= cutoffs[i - 1] {
            return Err(Error::DuplicateCutoff { index: i });
        }
    }
    Ok(())
}

/// Evenly spaced quantiles of `scores`: the `j/K` quantiles for `j = 1..K-1`,
/// using linear interpolation between order statistics.
pub fn quantile_cutoffs<R: Real>(scores: &[R], k: usize) -> Result<Vec<R>> {
    let n = scores.len();
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores must not be NaN"));

    let mut cutoffs = Vec::with_capacity(k - 1);
    for j in 1..k {
        let pos = R::from_usize(j).unwrap() / R::from_usize(k).unwrap()
            * R::from_usize(n - 1).unwrap();
        let lo = pos.floor().to_usize().unwrap();
        let hi = (lo + 1).min(n - 1);
        let frac = pos - pos.floor();
        cutoffs.push(sorted[lo] + frac * (sorted[hi] - sorted[lo]));
    }
    validate_cutoffs(&cutoffs)?;
    Ok(cutoffs)
}

/// Assign every score to a region; fails if any region ends up empty.
pub fn assign_regions<R: Real>(scores: &[R], cutoffs: &[R]) -> Result<Partition<R>> {
    validate_cutoffs(cutoffs)?;
    for (i, &s) in scores.iter().enumerate() {
        if !(s > R::zero() && s < R::one()) {
            return Err(Error::Invalid(format!("score {i} must lie in (0, 1)")));
        }
    }
    let k = cutoffs.len() + 1;
    let assignment: Vec<usize> = scores.iter().map(|&s| region_of(s, cutoffs)).collect();
    let mut region_indices = vec![Vec::new(); k];
    for (i, &r) in assignment.iter().enumerate() {
        region_indices[r].push(i);
    }
    if let Some(region) = region_indices.iter().position(Vec::is_empty) {
        return Err(Error::EmptyRegion { region });
    }
    Ok(Partition { k, cutoffs: cutoffs.to_vec(), assignment, region_indices })
}
