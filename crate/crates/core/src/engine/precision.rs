//! Precision-space algebra: the prior precision via nested Schur
//! complements, and the joint precision over
//! `(theta_n, theta_m, f_n, delta, y_n)` obtained by completing the square
//! with the Gaussian outcome likelihood.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;
use crate::num::Real;

use super::blocks::BlockPriorCovariance;

/// Dense blocks of the prior precision, region-major ordering. Intended for
/// verification and small instances; the production posterior path never
/// inverts anything of training-set size.
#[derive(Debug, Clone)]
pub struct PrecisionBlocks<R: Real> {
    pub theta_n_theta_n: DMatrix<R>,
    pub theta_n_theta_m: DMatrix<R>,
    pub theta_m_theta_m: DMatrix<R>,
    pub theta_n_delta: DMatrix<R>,
    pub theta_m_delta: DMatrix<R>,
    pub f_n_f_n: DMatrix<R>,
    pub delta_delta: DMatrix<R>,
}

impl<R: Real> PrecisionBlocks<R> {
    /// Dense precision over `(theta_n, theta_m, f_n, delta)`.
    pub fn assemble_dense(&self) -> DMatrix<R> {
        let n = self.theta_n_theta_n.nrows();
        let m = self.theta_m_theta_m.nrows();
        let d = self.delta_delta.nrows();
        let total = n + m + n + d;
        let mut out = DMatrix::zeros(total, total);
        out.view_mut((0, 0), (n, n)).copy_from(&self.theta_n_theta_n);
        out.view_mut((0, n), (n, m)).copy_from(&self.theta_n_theta_m);
        out.view_mut((n, 0), (m, n)).copy_from(&self.theta_n_theta_m.transpose());
        out.view_mut((n, n), (m, m)).copy_from(&self.theta_m_theta_m);
        out.view_mut((n + m, n + m), (n, n)).copy_from(&self.f_n_f_n);
        out.view_mut((0, n + m + n), (n, d)).copy_from(&self.theta_n_delta);
        out.view_mut((n + m + n, 0), (d, n)).copy_from(&self.theta_n_delta.transpose());
        out.view_mut((n, n + m + n), (m, d)).copy_from(&self.theta_m_delta);
        out.view_mut((n + m + n, n), (d, m)).copy_from(&self.theta_m_delta.transpose());
        out.view_mut((n + m + n, n + m + n), (d, d)).copy_from(&self.delta_delta);
        out
    }
}

/// Invert the prior covariance block-wise: Schur complement on the delta
/// block first, then a nested two-by-two Schur step on the effect blocks.
/// The baseline block inverts independently (it couples with nothing).
pub fn prior_precision<R: Real>(prior: &BlockPriorCovariance<R>) -> Result<PrecisionBlocks<R>> {
    let n = prior.n();
    let m = prior.m();
    let d = prior.d();

    let s_tt = prior.theta_nn_dense();
    let s_tm = prior.theta_nm_dense();
    let s_mm = prior.theta_mm_dense();
    let s_td = &prior.theta_n_delta;
    let s_md = &prior.theta_m_delta;

    // delta elimination: W = delta-block inverse
    let w = if d > 0 {
        cholesky_jittered(&prior.delta_delta)?.chol.inverse()
    } else {
        DMatrix::zeros(0, 0)
    };
    let (m11, m12, m22) = if d > 0 {
        let wtd = &w * s_td.transpose(); // d x n
        let wmd = &w * s_md.transpose(); // d x m
        (
            &s_tt - s_td * &wtd,
            &s_tm - s_td * &wmd,
            &s_mm - s_md * &wmd,
        )
    } else {
        (s_tt.clone(), s_tm.clone(), s_mm.clone())
    };

    // nested effect-block Schur step
    let m22_inv = if m > 0 {
        cholesky_jittered(&m22)?.chol.inverse()
    } else {
        DMatrix::zeros(0, 0)
    };
    let m12_m22inv = &m12 * &m22_inv; // n x m
    let schur = &m11 - &m12_m22inv * m12.transpose();
    let theta_n_theta_n = cholesky_jittered(&schur)?.chol.inverse();
    let theta_n_theta_m = -(&theta_n_theta_n * &m12_m22inv);
    let theta_m_theta_m =
        &m22_inv + m12_m22inv.transpose() * &theta_n_theta_n * &m12_m22inv;

    // baseline block inverts region by region
    let mut f_n_f_n = DMatrix::zeros(n, n);
    let mut off = 0;
    for block in &prior.f_nn {
        let inv = cholesky_jittered(block)?.chol.inverse();
        f_n_f_n.view_mut((off, off), inv.shape()).copy_from(&inv);
        off += inv.nrows();
    }

    // delta rows and the corrected delta square
    let (theta_n_delta, theta_m_delta, delta_delta) = if d > 0 {
        let p1 = &theta_n_theta_n * s_td + &theta_n_theta_m * s_md; // n x d
        let p2 = theta_n_theta_m.transpose() * s_td + &theta_m_theta_m * s_md; // m x d
        let tnd = -(&p1 * &w);
        let tmd = -(&p2 * &w);
        let core = s_td.transpose() * &p1 + s_md.transpose() * &p2; // d x d
        let ddd = &w + &w * core * &w;
        (tnd, tmd, ddd)
    } else {
        (DMatrix::zeros(n, 0), DMatrix::zeros(m, 0), DMatrix::zeros(0, 0))
    };

    Ok(PrecisionBlocks {
        theta_n_theta_n,
        theta_n_theta_m,
        theta_m_theta_m,
        theta_n_delta,
        theta_m_delta,
        f_n_f_n,
        delta_delta,
    })
}

/// Joint precision over `(theta_n, theta_m, f_n, delta, y_n)`: the prior
/// precision plus the likelihood terms, with each sample carrying its own
/// region's noise precision.
#[derive(Debug, Clone)]
pub struct JointPrecision<R: Real> {
    pub prior_precision: PrecisionBlocks<R>,
    /// Treatment indicators, region-major.
    pub t: Vec<u8>,
    /// Per-sample noise precision, region-major.
    pub s_eps: DVector<R>,
    /// Prior covariance blocks kept for the lazy covariance route.
    pub prior: BlockPriorCovariance<R>,
}

impl<R: Real> JointPrecision<R> {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn m(&self) -> usize {
        self.prior_precision.theta_m_theta_m.nrows()
    }

    pub fn d(&self) -> usize {
        self.prior_precision.delta_delta.nrows()
    }

    /// Dense joint precision; test-scale helper.
    pub fn assemble_dense(&self) -> DMatrix<R> {
        let n = self.n();
        let m = self.m();
        let d = self.d();
        let total = n + m + n + d + n;
        let mut out = DMatrix::zeros(total, total);
        out.view_mut((0, 0), (n + m + n + d, n + m + n + d))
            .copy_from(&self.prior_precision.assemble_dense());

        let off_f = n + m;
        let off_y = n + m + n + d;
        for i in 0..n {
            let s = self.s_eps[i];
            let ti = R::from_u8(self.t[i]).unwrap();
            out[(i, i)] += s * ti * ti;
            out[(i, off_f + i)] += ti * s;
            out[(off_f + i, i)] += ti * s;
            out[(i, off_y + i)] = -s * ti;
            out[(off_y + i, i)] = -s * ti;
            out[(off_f + i, off_f + i)] += s;
            out[(off_f + i, off_y + i)] = -s;
            out[(off_y + i, off_f + i)] = -s;
            out[(off_y + i, off_y + i)] = s;
        }
        out
    }
}

/// Complete the square: add the Gaussian likelihood's contribution to the
/// prior precision. `t` and `s_eps` are region-major and aligned with the
/// precision's training rows.
pub fn joint_precision<R: Real>(
    prec: PrecisionBlocks<R>,
    prior: BlockPriorCovariance<R>,
    t: Vec<u8>,
    s_eps: DVector<R>,
) -> Result<JointPrecision<R>> {
    let n = prec.theta_n_theta_n.nrows();
    if t.len() != n || s_eps.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "precision covers {n} samples; t has {}, s_eps has {}",
            t.len(),
            s_eps.len()
        )));
    }
    Ok(JointPrecision { prior_precision: prec, t, s_eps, prior })
}
