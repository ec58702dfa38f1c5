//! Posterior of the treatment effect at test points, conditioned on the
//! observed outcomes and on all boundary differences being zero.
//!
//! The production path factors the outcome covariance region by region
//! (block diagonal), eliminates it, and finishes with one small dense solve
//! on the boundary block. No factorization of training-set size occurs, so
//! the dominant factorization cost falls with the number of regions.

use nalgebra::{DMatrix, DVector};

use crate::data::{region_of, Dataset, Partition, RegionHyperParams};
use crate::error::{Error, Result};
use crate::kernel::rbf;
use crate::linalg::{cholesky_jittered, symmetrize, BASE_JITTER};
use crate::num::Real;
use crate::pseudo::PseudoSet;

use super::blocks::{build_prior, BlockPriorCovariance};

/// Default dimension cap of the dense verification oracle.
pub const DEFAULT_ORACLE_CAP: usize = 500;

/// Posterior mean and covariance of the treatment effect at the test
/// points, in the original test-row order.
#[derive(Debug, Clone)]
pub struct PosteriorHte<R: Real> {
    pub mean: DVector<R>,
    pub covariance: DMatrix<R>,
}

impl<R: Real> PosteriorHte<R> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.len() == 0
    }

    /// Posterior standard deviations (diagonal square roots, floored at 0).
    pub fn sd(&self) -> DVector<R> {
        DVector::from_fn(self.len(), |i, _| self.covariance[(i, i)].max(R::zero()).sqrt())
    }
}

/// Condition the effect at test points on `(y, delta = 0)` given assembled
/// prior blocks. `y`, `t` are in original train order, `s_eps` per region.
/// Returns the posterior and the factorization FLOPs spent.
pub fn posterior_given_prior<R: Real>(
    prior: &BlockPriorCovariance<R>,
    train: &Dataset<R>,
    s_eps: &[R],
) -> Result<(PosteriorHte<R>, u64)> {
    let layout = &prior.layout;
    let n = layout.n();
    let m = layout.m();
    let d = prior.d();
    let k = layout.regions();
    if s_eps.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} noise precisions for {k} regions",
            s_eps.len()
        )));
    }
    let mut flops = 0u64;

    // region-major views of the outcomes and treatments
    let order = layout.train_order();
    let y_rm = DVector::from_iterator(n, order.iter().map(|&i| train.y[i]));
    let t_rm: Vec<u8> = order.iter().map(|&i| train.t[i]).collect();

    // per-region offsets into region-major coordinates
    let sizes: Vec<usize> = (0..k).map(|r| layout.train_indices(r).len()).collect();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0usize, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();

    // Cross covariance of outcomes with the boundary block, region-major:
    // Cov(y, delta) = T Cov(theta_n, delta).
    let mut z_td = prior.theta_n_delta.clone();
    for (i, &ti) in t_rm.iter().enumerate() {
        if ti == 0 {
            z_td.row_mut(i).fill(R::zero());
        }
    }

    // Per-region outcome covariance factorization and solves.
    let mut alpha = DVector::<R>::zeros(n); // Vy^{-1} y
    let mut g_big = DMatrix::<R>::zeros(n, d); // Vy^{-1} Cov(y, delta)
    let mut mean_rm = DVector::<R>::zeros(m);
    let mut u_big = DMatrix::<R>::zeros(m, d); // Cov(th_m, y) Vy^{-1} Cov(y, delta)
    let mut cov_rm = DMatrix::<R>::zeros(m, m);

    let mut t_off = 0usize;
    for r in 0..k {
        let sz = sizes[r];
        let tsz = layout.test_indices(r).len();
        let mut v = prior.f_nn[r].clone();
        let th = &prior.theta_nn[r];
        for i in 0..sz {
            if t_rm[offsets[r] + i] == 0 {
                continue;
            }
            for j in 0..sz {
                if t_rm[offsets[r] + j] == 1 {
                    v[(i, j)] += th[(i, j)];
                }
            }
        }
        for i in 0..sz {
            v[(i, i)] += R::one() / s_eps[r];
        }
        let factor = cholesky_jittered(&v)?;
        flops += factor.flops;

        let y_r = y_rm.rows(offsets[r], sz).into_owned();
        let a_r = factor.chol.solve(&y_r);
        alpha.rows_mut(offsets[r], sz).copy_from(&a_r);

        if d > 0 {
            let z_r = z_td.rows(offsets[r], sz).into_owned();
            let g_r = factor.chol.solve(&z_r);
            g_big.rows_mut(offsets[r], sz).copy_from(&g_r);
        }

        if tsz > 0 {
            // Cov(theta_m, y) within the region: (C_theta_nm)' T
            let mut w_r = prior.theta_nm[r].transpose(); // tsz x sz
            for j in 0..sz {
                if t_rm[offsets[r] + j] == 0 {
                    w_r.column_mut(j).fill(R::zero());
                }
            }
            mean_rm.rows_mut(t_off, tsz).copy_from(&(&w_r * &a_r));
            let vw = factor.chol.solve(&w_r.transpose()); // sz x tsz
            let block = &prior.theta_mm[r] - &w_r * &vw;
            cov_rm.view_mut((t_off, t_off), (tsz, tsz)).copy_from(&block);
            if d > 0 {
                let g_r = g_big.rows(offsets[r], sz).into_owned();
                u_big.rows_mut(t_off, tsz).copy_from(&(&w_r * &g_r));
            }
        }
        t_off += tsz;
    }

    // Eliminate the boundary block: Schur complement of the outcome block
    // inside the (delta, y) square.
    if d > 0 {
        let s_delta = &prior.delta_delta - z_td.transpose() * &g_big;
        let factor = cholesky_jittered(&s_delta)?;
        flops += factor.flops;

        let g_vec = z_td.transpose() * &alpha; // d
        let h = factor.chol.solve(&g_vec);
        let p_big = &prior.theta_m_delta - &u_big; // m x d
        mean_rm -= &p_big * &h;
        let sp = factor.chol.solve(&p_big.transpose()); // d x m
        cov_rm -= &p_big * &sp;
    }
    symmetrize(&mut cov_rm);

    // back to original test order
    let test_order = layout.test_order();
    let mut mean = DVector::zeros(m);
    let mut covariance = DMatrix::zeros(m, m);
    for (pos, &orig) in test_order.iter().enumerate() {
        mean[orig] = mean_rm[pos];
        for (pos2, &orig2) in test_order.iter().enumerate() {
            covariance[(orig, orig2)] = cov_rm[(pos, pos2)];
        }
    }
    Ok((PosteriorHte { mean, covariance }, flops))
}

/// Posterior with an explicit test-region assignment; returns the FLOPs
/// spent on factorizations alongside.
pub fn posterior_hte_with_assignment<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    test_assignment: &[usize],
    partition: &Partition<R>,
    hyperparams: &[RegionHyperParams<R>],
    pseudo: &PseudoSet<R>,
) -> Result<(PosteriorHte<R>, u64)> {
    let prior = build_prior(train, test_x, test_assignment, partition, hyperparams, pseudo)?;
    let s_eps: Vec<R> = hyperparams.iter().map(|h| h.s_eps).collect();
    posterior_given_prior(&prior, train, &s_eps)
}

/// Posterior of the effect at test points; each test point is assigned to
/// the region its propensity score falls in.
pub fn posterior_hte<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    test_scores: &DVector<R>,
    partition: &Partition<R>,
    hyperparams: &[RegionHyperParams<R>],
    pseudo: &PseudoSet<R>,
) -> Result<PosteriorHte<R>> {
    posterior_hte_traced(train, test_x, test_scores, partition, hyperparams, pseudo)
        .map(|(p, _)| p)
}

/// [`posterior_hte`] plus the factorization FLOP count.
pub fn posterior_hte_traced<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    test_scores: &DVector<R>,
    partition: &Partition<R>,
    hyperparams: &[RegionHyperParams<R>],
    pseudo: &PseudoSet<R>,
) -> Result<(PosteriorHte<R>, u64)> {
    if test_scores.len() != test_x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} test rows but {} scores",
            test_x.nrows(),
            test_scores.len()
        )));
    }
    let assignment: Vec<usize> =
        test_scores.iter().map(|&s| region_of(s, partition.cutoffs())).collect();
    posterior_hte_with_assignment(train, test_x, &assignment, partition, hyperparams, pseudo)
}

/// Verification oracle: assemble the dense joint covariance of
/// `(theta_n, theta_m, f_n, delta, y_n)` entry by entry from the kernel
/// definitions and condition on `(y, delta = 0)` with a plain LU solve.
/// Refuses instances whose joint dimension exceeds `cap`.
pub fn dense_oracle_posterior<R: Real>(
    train: &Dataset<R>,
    test_x: &DMatrix<R>,
    test_assignment: &[usize],
    partition: &Partition<R>,
    hyperparams: &[RegionHyperParams<R>],
    pseudo: &PseudoSet<R>,
    cap: usize,
) -> Result<PosteriorHte<R>> {
    let n = train.n();
    let m = test_x.nrows();
    let d = pseudo.len();
    let total = n + m + n + d;
    if total + n > cap {
        return Err(Error::CapExceeded { dim: total + n, cap });
    }
    if test_assignment.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{m} test rows but {} assignments",
            test_assignment.len()
        )));
    }
    let jitter = R::of(BASE_JITTER);
    let gth: Vec<R> = hyperparams.iter().map(|h| h.gamma_theta).collect();
    let gf: Vec<R> = hyperparams.iter().map(|h| h.gamma_f).collect();
    let train_region = partition.assignment();

    let xrow = |i: usize| train.x.row(i).transpose();
    let trow = |j: usize| test_x.row(j).transpose();
    let prow = |s: usize| pseudo.points.row(s).transpose();
    // covariance of any theta value in region `vr` with boundary entry `s`
    let delta_entry = |v: &DVector<R>, vr: usize, s: usize| -> R {
        let b = pseudo.boundary_index[s];
        if vr == b {
            rbf(v, &prow(s), gth[b])
        } else if vr == b + 1 {
            -rbf(v, &prow(s), gth[b + 1])
        } else {
            R::zero()
        }
    };

    // joint over (theta_n, theta_m, f_n, delta) in original row orders
    let mut sigma = DMatrix::<R>::zeros(total, total);
    let (o_m, o_f, o_d) = (n, n + m, n + m + n);
    for i in 0..n {
        for j in 0..n {
            if train_region[i] == train_region[j] {
                let r = train_region[i];
                sigma[(i, j)] = rbf(&xrow(i), &xrow(j), gth[r]);
                sigma[(o_f + i, o_f + j)] = rbf(&xrow(i), &xrow(j), gf[r]);
            }
        }
        for j in 0..m {
            if train_region[i] == test_assignment[j] {
                let v = rbf(&xrow(i), &trow(j), gth[train_region[i]]);
                sigma[(i, o_m + j)] = v;
                sigma[(o_m + j, i)] = v;
            }
        }
        for s in 0..d {
            let v = delta_entry(&xrow(i), train_region[i], s);
            sigma[(i, o_d + s)] = v;
            sigma[(o_d + s, i)] = v;
        }
    }
    for i in 0..m {
        for j in 0..m {
            if test_assignment[i] == test_assignment[j] {
                sigma[(o_m + i, o_m + j)] = rbf(&trow(i), &trow(j), gth[test_assignment[i]]);
            }
        }
        for s in 0..d {
            let v = delta_entry(&trow(i), test_assignment[i], s);
            sigma[(o_m + i, o_d + s)] = v;
            sigma[(o_d + s, o_m + i)] = v;
        }
    }
    for s in 0..d {
        for r in 0..d {
            let (ba, bb) = (pseudo.boundary_index[s], pseudo.boundary_index[r]);
            sigma[(o_d + s, o_d + r)] = if ba == bb {
                rbf(&prow(s), &prow(r), gth[ba]) + rbf(&prow(s), &prow(r), gth[ba + 1])
            } else if bb == ba + 1 {
                -rbf(&prow(s), &prow(r), gth[ba + 1])
            } else if ba == bb + 1 {
                -rbf(&prow(s), &prow(r), gth[ba])
            } else {
                R::zero()
            };
        }
    }
    for i in 0..total {
        sigma[(i, i)] += jitter;
    }

    // append the outcome block: Cov(v, y_i) = t_i Cov(v, theta_i) + Cov(v, f_i)
    let full_dim = total + n;
    let mut joint = DMatrix::<R>::zeros(full_dim, full_dim);
    joint.view_mut((0, 0), (total, total)).copy_from(&sigma);
    for i in 0..n {
        let ti = R::from_u8(train.t[i]).unwrap();
        for v in 0..total {
            let c = ti * sigma[(v, i)] + sigma[(v, o_f + i)];
            joint[(v, total + i)] = c;
            joint[(total + i, v)] = c;
        }
    }
    for i in 0..n {
        let ti = R::from_u8(train.t[i]).unwrap();
        for j in 0..n {
            let tj = R::from_u8(train.t[j]).unwrap();
            joint[(total + i, total + j)] =
                ti * tj * sigma[(i, j)] + sigma[(o_f + i, o_f + j)];
        }
        joint[(total + i, total + i)] += R::one() / hyperparams[train_region[i]].s_eps;
    }

    // condition theta_m on D = (delta, y): mean = Cov(tm, D) J^{-1} D,
    // cov = Cov(tm, tm) - Cov(tm, D) J^{-1} Cov(D, tm)
    let d_idx: Vec<usize> = (o_d..o_d + d).chain(total..total + n).collect();
    let mut j_dd = DMatrix::<R>::zeros(d + n, d + n);
    let mut cross = DMatrix::<R>::zeros(m, d + n);
    for (a, &ia) in d_idx.iter().enumerate() {
        for (b, &ib) in d_idx.iter().enumerate() {
            j_dd[(a, b)] = joint[(ia, ib)];
        }
        for i in 0..m {
            cross[(i, a)] = joint[(o_m + i, ia)];
        }
    }
    let mut d_vec = DVector::<R>::zeros(d + n);
    for i in 0..n {
        d_vec[d + i] = train.y[i];
    }

    let lu = j_dd.lu();
    let sol = lu.solve(&d_vec).ok_or(Error::NotPositiveDefinite)?;
    let mean = &cross * sol;
    let back = lu.solve(&cross.transpose()).ok_or(Error::NotPositiveDefinite)?;
    let mut covariance = sigma.view((o_m, o_m), (m, m)).into_owned() - &cross * back;
    symmetrize(&mut covariance);
    Ok(PosteriorHte { mean, covariance })
}
