//! Reference estimators: the global partially linear GP fitted on all data,
//! and the naive local approximation that fits each region independently
//! with no continuity constraints.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Partition, RegionHyperParams};
use crate::engine::PosteriorHte;
use crate::error::{Error, Result};
use crate::kernel::{gram, outcome_covariance, GramPair};
use crate::linalg::{add_diagonal, cholesky_jittered, symmetrize, BASE_JITTER};
use crate::num::Real;

/// Exact posterior of the effect at test points under the partially linear
/// model `y = theta(x) t + f(x) + noise` with one global hyperparameter set.
pub fn global_gp_posterior<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    hp: &RegionHyperParams<R>,
) -> Result<PosteriorHte<R>> {
    global_gp_posterior_traced(train, test_x, hp).map(|(p, _)| p)
}

/// [`global_gp_posterior`] plus the factorization FLOP count.
pub fn global_gp_posterior_traced<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    hp: &RegionHyperParams<R>,
) -> Result<(PosteriorHte<R>, u64)> {
    if test_x.ncols() != train.p() {
        return Err(Error::DimensionMismatch(format!(
            "train has {} covariates, test has {}",
            train.p(),
            test_x.ncols()
        )));
    }
    let grams = GramPair::new(&train.x, hp)?;
    let v = outcome_covariance(&grams, &train.t, hp.s_eps);
    let factor = cholesky_jittered(&v)?;

    // Cov(theta_m, y) = C_theta(test, train) diag(t)
    let mut cross = gram(test_x, &train.x, hp.gamma_theta)?;
    for (j, &tj) in train.t.iter().enumerate() {
        if tj == 0 {
            cross.column_mut(j).fill(R::zero());
        }
    }

    let mean = &cross * factor.chol.solve(&train.y);
    let mut prior_mm = gram(test_x, test_x, hp.gamma_theta)?;
    add_diagonal(&mut prior_mm, R::of(BASE_JITTER));
    let sol = factor.chol.solve(&cross.transpose());
    let mut covariance = prior_mm - &cross * sol;
    symmetrize(&mut covariance);
    Ok((PosteriorHte { mean, covariance }, factor.flops))
}

/// Independent per-region posteriors: each test point is scored by the model
/// of its own region only, and the joint covariance is block diagonal across
/// regions — no continuity is enforced at the cutoffs.
pub fn local_gp_posterior<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    test_assignment: &[usize],
    partition: &Partition<R>,
    hyperparams: &[RegionHyperParams<R>],
) -> Result<PosteriorHte<R>> {
    local_gp_posterior_traced(train, test_x, test_assignment, partition, hyperparams)
        .map(|(p, _)| p)
}

/// [`local_gp_posterior`] plus the factorization FLOP count.
pub fn local_gp_posterior_traced<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    test_assignment: &[usize],
    partition: &Partition<R>,
    hyperparams: &[RegionHyperParams<R>],
) -> Result<(PosteriorHte<R>, u64)> {
    let k = partition.k();
    if hyperparams.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} hyperparameter sets for {k} regions",
            hyperparams.len()
        )));
    }
    if test_assignment.len() != test_x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} test rows but {} assignments",
            test_x.nrows(),
            test_assignment.len()
        )));
    }
    let m = test_x.nrows();
    let mut mean = DVector::zeros(m);
    let mut covariance = DMatrix::zeros(m, m);
    let mut flops = 0u64;

    for r in 0..k {
        let test_idx: Vec<usize> =
            (0..m).filter(|&i| test_assignment[i] == r).collect();
        if test_idx.is_empty() {
            continue;
        }
        let slice = train.subset(partition.region(r));
        let region_train =
            Dataset::new(slice.x, slice.y, slice.t, None).map_err(|e| e.in_region(r))?;
        let region_test = test_x.select_rows(test_idx.iter());
        let (post, f) = global_gp_posterior_traced(&region_train, &region_test, &hyperparams[r])
            .map_err(|e| e.in_region(r))?;
        flops += f;
        for (a, &i) in test_idx.iter().enumerate() {
            mean[i] = post.mean[a];
            for (b, &j) in test_idx.iter().enumerate() {
                covariance[(i, j)] = post.covariance[(a, b)];
            }
        }
    }
    Ok((PosteriorHte { mean, covariance }, flops))
}
