//! RBF kernel evaluation, Gram construction, the partially linear model's
//! marginal log-likelihood, and per-region grid-search tuning.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{Dataset, Partition, RegionHyperParams, RegionSlice};
use crate::error::{Error, Result};
use crate::linalg::{add_diagonal, cholesky_jittered, log_det, BASE_JITTER};
use crate::num::Real;

/// Improvements below this are treated as ties (lexicographic winner kept).
const TIE_EPS: f64 = 1e-15;

/// `exp(-gamma * ||x - z||^2)`.
pub fn rbf<R: Real>(x: &DVector<R>, z: &DVector<R>, gamma: R) -> R {
    debug_assert_eq!(x.len(), z.len());
    let mut sq = R::zero();
    for (a, b) in x.iter().zip(z.iter()) {
        let d = *a - *b;
        sq += d * d;
    }
    (-gamma * sq).exp()
}

/// Pairwise squared Euclidean distances between the rows of `a` and `b`.
pub fn squared_distances<R: Real>(a: &DMatrix<R>, b: &DMatrix<R>) -> Result<DMatrix<R>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "gram inputs have {} and {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    let mut out = DMatrix::zeros(a.nrows(), b.nrows());
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            let mut sq = R::zero();
            for c in 0..a.ncols() {
                let d = a[(i, c)] - b[(j, c)];
                sq += d * d;
            }
            out[(i, j)] = sq;
        }
    }
    Ok(out)
}

/// RBF Gram matrix between the rows of `a` and `b`.
pub fn gram<R: Real>(a: &DMatrix<R>, b: &DMatrix<R>, gamma: R) -> Result<DMatrix<R>> {
    Ok(squared_distances(a, b)?.map(|sq| (-gamma * sq).exp()))
}

/// Self-Gram with the base jitter added to the diagonal.
pub fn gram_jittered<R: Real>(a: &DMatrix<R>, gamma: R) -> Result<DMatrix<R>> {
    let mut g = gram(a, a, gamma)?;
    add_diagonal(&mut g, R::of(BASE_JITTER));
    Ok(g)
}

/// Treatment-effect and baseline Gram matrices for one region.
#[derive(Debug, Clone)]
pub struct GramPair<R: Real> {
    pub c_theta: DMatrix<R>,
    pub c_f: DMatrix<R>,
}

impl<R: Real> GramPair<R> {
    /// Build both jittered self-Grams for a region's covariates.
    pub fn new(x: &DMatrix<R>, hp: &RegionHyperParams<R>) -> Result<Self> {
        let sq = squared_distances(x, x)?;
        let mut c_theta = sq.map(|d| (-hp.gamma_theta * d).exp());
        let mut c_f = sq.map(|d| (-hp.gamma_f * d).exp());
        add_diagonal(&mut c_theta, R::of(BASE_JITTER));
        add_diagonal(&mut c_f, R::of(BASE_JITTER));
        Ok(Self { c_theta, c_f })
    }
}

/// Marginal covariance of the outcomes in one region:
/// `V = diag(t) C_theta diag(t) + C_f + I / s_eps`.
pub fn outcome_covariance<R: Real>(grams: &GramPair<R>, t: &[u8], s_eps: R) -> DMatrix<R> {
    let m = grams.c_theta.nrows();
    debug_assert_eq!(t.len(), m);
    let mut v = grams.c_f.clone();
    for i in 0..m {
        if t[i] == 0 {
            continue;
        }
        for j in 0..m {
            if t[j] == 1 {
                v[(i, j)] += grams.c_theta[(i, j)];
            }
        }
    }
    add_diagonal(&mut v, R::one() / s_eps);
    v
}

/// Log density of `y` under `N(0, V)` with `V` as above; FLOPs spent on the
/// factorization are returned alongside.
pub fn marginal_loglik_traced<R: Real>(
    y: &DVector<R>,
    t: &[u8],
    x: &DMatrix<R>,
    hp: &RegionHyperParams<R>,
) -> Result<(R, u64)> {
    let m = y.len();
    if t.len() != m || x.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "loglik inputs disagree: y {m}, t {}, X {} rows",
            t.len(),
            x.nrows()
        )));
    }
    let grams = GramPair::new(x, hp)?;
    let v = outcome_covariance(&grams, t, hp.s_eps);
    let factor = cholesky_jittered(&v)?;
    let alpha = factor.chol.solve(y);
    let two = R::of(2.0);
    let ll = -(y.dot(&alpha) + log_det(&factor.chol) + R::from_usize(m).unwrap() * R::two_pi().ln())
        / two;
    Ok((ll, factor.flops))
}

/// See [`marginal_loglik_traced`].
pub fn marginal_loglik<R: Real>(
    y: &DVector<R>,
    t: &[u8],
    x: &DMatrix<R>,
    hp: &RegionHyperParams<R>,
) -> Result<R> {
    marginal_loglik_traced(y, t, x, hp).map(|(ll, _)| ll)
}

/// One-dimensional search grid: `min, min + step, ...` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningGrid<R: Real> {
    pub min: R,
    pub max: R,
    pub step: R,
}

impl<R: Real> TuningGrid<R> {
    pub fn new(min: R, max: R, step: R) -> Result<Self> {
        if !(min > R::zero() && max > min && step > R::zero()) {
            return Err(Error::Invalid(
                "tuning grid requires 0 < min < max and step > 0".into(),
            ));
        }
        Ok(Self { min, max, step })
    }

    /// Grid points, computed as `min + k * step` to avoid drift.
    pub fn values(&self) -> Vec<R> {
        let slack = R::of(1e-9);
        let mut vals = Vec::new();
        let mut k = 0usize;
        loop {
            let v = self.min + R::from_usize(k).unwrap() * self.step;
            if v > self.max + slack {
                break;
            }
            vals.push(v);
            k += 1;
        }
        vals
    }
}

/// Exhaustive search over independent per-axis grids, maximizing the
/// marginal log-likelihood on one region. Ties (improvements below 1e-15)
/// keep the lexicographically smaller `(gamma_theta, gamma_f, s_eps)`.
pub fn grid_search_region_axes_traced<R: Real>(
    region: &RegionSlice<R>,
    theta_grid: &TuningGrid<R>,
    f_grid: &TuningGrid<R>,
    noise_grid: &TuningGrid<R>,
) -> Result<(RegionHyperParams<R>, u64)> {
    let theta_values = theta_grid.values();
    let f_values = f_grid.values();
    let noise_values = noise_grid.values();
    let sq = squared_distances(&region.x, &region.x)?;
    let m = region.x.nrows();

    let mut best: Option<(RegionHyperParams<R>, R)> = None;
    let mut last_err = None;
    let mut flops = 0u64;
    let tie = R::of(TIE_EPS);

    for &g_theta in &theta_values {
        let mut c_theta = sq.map(|d| (-g_theta * d).exp());
        add_diagonal(&mut c_theta, R::of(BASE_JITTER));
        for &g_f in &f_values {
            let mut c_f = sq.map(|d| (-g_f * d).exp());
            add_diagonal(&mut c_f, R::of(BASE_JITTER));
            let grams = GramPair { c_theta: c_theta.clone(), c_f };
            for &s_eps in &noise_values {
                let v = outcome_covariance(&grams, &region.t, s_eps);
                let factor = match cholesky_jittered(&v) {
                    Ok(f) => f,
                    Err(e) => {
                        last_err = Some(e);
                        continue;
                    }
                };
                flops += factor.flops;
                let alpha = factor.chol.solve(&region.y);
                let ll = -(region.y.dot(&alpha)
                    + log_det(&factor.chol)
                    + R::from_usize(m).unwrap() * R::two_pi().ln())
                    / R::of(2.0);
                let better = match &best {
                    None => true,
                    Some((_, cur)) => ll > *cur + tie,
                };
                if better {
                    best = Some((RegionHyperParams { gamma_theta: g_theta, gamma_f: g_f, s_eps }, ll));
                }
            }
        }
    }
    match best {
        Some((hp, _)) => Ok((hp, flops)),
        None => Err(last_err.unwrap_or(Error::NotPositiveDefinite)),
    }
}

/// [`grid_search_region_axes_traced`] with one shared grid for all three
/// hyperparameters.
pub fn grid_search_region_traced<R: Real>(
    region: &RegionSlice<R>,
    grid: &TuningGrid<R>,
) -> Result<(RegionHyperParams<R>, u64)> {
    grid_search_region_axes_traced(region, grid, grid, grid)
}

/// See [`grid_search_region_traced`].
pub fn grid_search_region<R: Real>(
    region: &RegionSlice<R>,
    grid: &TuningGrid<R>,
) -> Result<RegionHyperParams<R>> {
    grid_search_region_traced(region, grid).map(|(hp, _)| hp)
}

/// Tune every region of a partition. Regions are searched on parallel
/// workers; the output order and values are independent of scheduling.
pub fn tune_all_traced<R: Real>(
    dataset: &Dataset<R>,
    partition: &Partition<R>,
    grid: &TuningGrid<R>,
) -> Result<(Vec<RegionHyperParams<R>>, u64)> {
    let per_region: Vec<Result<(RegionHyperParams<R>, u64)>> = (0..partition.k())
        .into_par_iter()
        .map(|k| {
            let slice = dataset.subset(partition.region(k));
            grid_search_region_traced(&slice, grid).map_err(|e| e.in_region(k))
        })
        .collect();

    let mut out = Vec::with_capacity(partition.k());
    let mut flops = 0u64;
    for r in per_region {
        let (hp, f) = r?;
        out.push(hp);
        flops += f;
    }
    Ok((out, flops))
}

/// See [`tune_all_traced`].
pub fn tune_all<R: Real>(
    dataset: &Dataset<R>,
    partition: &Partition<R>,
    grid: &TuningGrid<R>,
) -> Result<Vec<RegionHyperParams<R>>> {
    tune_all_traced(dataset, partition, grid).map(|(hp, _)| hp)
}
