//! Covariance of the joint distribution over
//! `(theta_n, theta_m, f_n, delta, y_n)`, obtained from the joint precision
//! by block decomposition: peel the outcome block, then the delta block,
//! then the two effect blocks.
//!
//! Peeling the outcome block reproduces the prior precision exactly, so the
//! blocks over `(theta_n, theta_m, f_n, delta)` are the prior covariance
//! and every outcome cross block is a treatment-scaled prior block. The
//! lazy mode materializes only the blocks the posterior needs — the test
//! rows and the `(delta, y_n)` square — straight from those identities,
//! with no factorization of training-set size.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::cholesky_jittered;
use crate::num::Real;

use super::precision::JointPrecision;

/// Which blocks of the joint covariance to materialize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// Every block, via the numeric Schur chain on the precision.
    Full,
    /// Only the test-row blocks and the `(delta, y_n)` square.
    Lazy,
}

/// Joint covariance blocks, region-major ordering. The test-row and
/// conditioning blocks are always present; the remaining blocks exist in
/// [`CovarianceMode::Full`] only.
#[derive(Debug, Clone)]
pub struct JointCovariance<R: Real> {
    pub theta_m_theta_n: DMatrix<R>,
    pub theta_m_theta_m: DMatrix<R>,
    pub theta_m_f_n: DMatrix<R>,
    pub theta_m_delta: DMatrix<R>,
    pub theta_m_y_n: DMatrix<R>,
    pub delta_delta: DMatrix<R>,
    pub delta_y_n: DMatrix<R>,
    pub y_n_y_n: DMatrix<R>,
    pub rest: Option<JointCovarianceRest<R>>,
}

/// Blocks outside the lazy set.
#[derive(Debug, Clone)]
pub struct JointCovarianceRest<R: Real> {
    pub theta_n_theta_n: DMatrix<R>,
    pub theta_n_f_n: DMatrix<R>,
    pub theta_n_delta: DMatrix<R>,
    pub theta_n_y_n: DMatrix<R>,
    pub f_n_f_n: DMatrix<R>,
    pub f_n_delta: DMatrix<R>,
    pub f_n_y_n: DMatrix<R>,
}

impl<R: Real> JointCovariance<R> {
    /// Dense joint covariance; requires full mode.
    pub fn assemble_dense(&self) -> DMatrix<R> {
        let rest = self.rest.as_ref().expect("assemble_dense requires CovarianceMode::Full");
        let n = rest.theta_n_theta_n.nrows();
        let m = self.theta_m_theta_m.nrows();
        let d = self.delta_delta.nrows();
        let total = n + m + n + d + n;
        let mut out = DMatrix::zeros(total, total);
        let (o_m, o_f, o_d, o_y) = (n, n + m, n + m + n, n + m + n + d);

        let mut put = |r: usize, c: usize, b: &DMatrix<R>| {
            out.view_mut((r, c), b.shape()).copy_from(b);
        };
        put(0, 0, &rest.theta_n_theta_n);
        put(0, o_m, &self.theta_m_theta_n.transpose());
        put(o_m, 0, &self.theta_m_theta_n);
        put(o_m, o_m, &self.theta_m_theta_m);
        put(0, o_f, &rest.theta_n_f_n);
        put(o_f, 0, &rest.theta_n_f_n.transpose());
        put(o_m, o_f, &self.theta_m_f_n);
        put(o_f, o_m, &self.theta_m_f_n.transpose());
        put(o_f, o_f, &rest.f_n_f_n);
        put(0, o_d, &rest.theta_n_delta);
        put(o_d, 0, &rest.theta_n_delta.transpose());
        put(o_m, o_d, &self.theta_m_delta);
        put(o_d, o_m, &self.theta_m_delta.transpose());
        put(o_f, o_d, &rest.f_n_delta);
        put(o_d, o_f, &rest.f_n_delta.transpose());
        put(o_d, o_d, &self.delta_delta);
        put(0, o_y, &rest.theta_n_y_n);
        put(o_y, 0, &rest.theta_n_y_n.transpose());
        put(o_m, o_y, &self.theta_m_y_n);
        put(o_y, o_m, &self.theta_m_y_n.transpose());
        put(o_f, o_y, &rest.f_n_y_n);
        put(o_y, o_f, &rest.f_n_y_n.transpose());
        put(o_d, o_y, &self.delta_y_n);
        put(o_y, o_d, &self.delta_y_n.transpose());
        put(o_y, o_y, &self.y_n_y_n);
        out
    }
}

/// Scale the columns of `a` by the treatment indicators.
fn scale_cols_by_t<R: Real>(a: &DMatrix<R>, t: &[u8]) -> DMatrix<R> {
    debug_assert_eq!(a.ncols(), t.len());
    let mut out = a.clone();
    for (j, &tj) in t.iter().enumerate() {
        if tj == 0 {
            out.column_mut(j).fill(R::zero());
        }
    }
    out
}

fn lazy_blocks<R: Real>(jp: &JointPrecision<R>) -> JointCovariance<R> {
    let prior = &jp.prior;
    let n = jp.n();
    let m = jp.m();

    let tnm = prior.theta_nm_dense();
    let theta_m_theta_n = tnm.transpose();
    let theta_m_theta_m = prior.theta_mm_dense();
    let theta_m_delta = prior.theta_m_delta.clone();
    let theta_m_y_n = scale_cols_by_t(&theta_m_theta_n, &jp.t);
    let delta_y_n = scale_cols_by_t(&prior.theta_n_delta.transpose(), &jp.t);

    // Cov(y, y) = T theta_nn T + f_nn + diag(1 / s_eps), block diagonal
    let mut y_n_y_n = DMatrix::zeros(n, n);
    let mut off = 0;
    for (k, tb) in prior.theta_nn.iter().enumerate() {
        let sz = tb.nrows();
        let fb = &prior.f_nn[k];
        for i in 0..sz {
            for j in 0..sz {
                let tt = R::from_u8(jp.t[off + i] * jp.t[off + j]).unwrap();
                y_n_y_n[(off + i, off + j)] = tt * tb[(i, j)] + fb[(i, j)];
            }
            y_n_y_n[(off + i, off + i)] += R::one() / jp.s_eps[off + i];
        }
        off += sz;
    }

    JointCovariance {
        theta_m_theta_n,
        theta_m_theta_m,
        theta_m_f_n: DMatrix::zeros(m, n),
        theta_m_delta,
        theta_m_y_n,
        delta_delta: prior.delta_delta.clone(),
        delta_y_n,
        y_n_y_n,
        rest: None,
    }
}

fn full_blocks<R: Real>(jp: &JointPrecision<R>) -> Result<JointCovariance<R>> {
    let n = jp.n();
    let m = jp.m();
    let d = jp.d();
    let pp = &jp.prior_precision;

    // Peel the outcome block of the joint precision. The blocks of
    // M = A - B D^{-1} B' collapse to the prior precision: the likelihood
    // rank structure cancels exactly.
    let m_tt = pp.theta_n_theta_n.clone();
    let m_tm = pp.theta_n_theta_m.clone();
    let m_mm = pp.theta_m_theta_m.clone();
    let m_td = pp.theta_n_delta.clone();
    let m_md = pp.theta_m_delta.clone();
    let m_ff = pp.f_n_f_n.clone();
    let m_dd = pp.delta_delta.clone();

    // Peel delta.
    let w = if d > 0 {
        cholesky_jittered(&m_dd)?.chol.inverse()
    } else {
        DMatrix::zeros(0, 0)
    };
    let (c_tt, c_tm, c_mm) = if d > 0 {
        let wt = &w * m_td.transpose();
        let wm = &w * m_md.transpose();
        (&m_tt - &m_td * &wt, &m_tm - &m_td * &wm, &m_mm - &m_md * &wm)
    } else {
        (m_tt.clone(), m_tm.clone(), m_mm.clone())
    };

    // The baseline block decouples: invert it region-free (dense here, the
    // full mode is a verification path).
    let f_n_f_n = cholesky_jittered(&m_ff)?.chol.inverse();

    // Final two-by-two step on the effect blocks.
    let dm_inv = if m > 0 {
        cholesky_jittered(&c_mm)?.chol.inverse()
    } else {
        DMatrix::zeros(0, 0)
    };
    let b_dminv = &c_tm * &dm_inv;
    let schur = &c_tt - &b_dminv * c_tm.transpose();
    let s_tt = cholesky_jittered(&schur)?.chol.inverse();
    let s_tm = -(&s_tt * &b_dminv);
    let s_mm = &dm_inv + b_dminv.transpose() * &s_tt * &b_dminv;

    // Delta rows from the precision cross blocks.
    let (s_td, s_md, s_dd) = if d > 0 {
        let q1 = &s_tt * &m_td + &s_tm * &m_md; // n x d
        let q2 = s_tm.transpose() * &m_td + &s_mm * &m_md; // m x d
        let s_td = -(&q1 * &w);
        let s_md = -(&q2 * &w);
        let core = m_td.transpose() * &q1 + m_md.transpose() * &q2;
        let s_dd = &w + &w * core * &w;
        (s_td, s_md, s_dd)
    } else {
        (DMatrix::zeros(n, 0), DMatrix::zeros(m, 0), DMatrix::zeros(0, 0))
    };

    // Outcome rows: Cov(v, y) = Cov(v, theta_n) T + Cov(v, f_n).
    let s_ty = scale_cols_by_t(&s_tt, &jp.t);
    let s_my = scale_cols_by_t(&s_tm.transpose(), &jp.t);
    let s_fy = f_n_f_n.clone();
    let s_dy = scale_cols_by_t(&s_td.transpose(), &jp.t);
    let mut s_yy = scale_cols_by_t(&s_ty.transpose(), &jp.t) + &f_n_f_n;
    for i in 0..n {
        s_yy[(i, i)] += R::one() / jp.s_eps[i];
    }

    Ok(JointCovariance {
        theta_m_theta_n: s_tm.transpose(),
        theta_m_theta_m: s_mm,
        theta_m_f_n: DMatrix::zeros(m, n),
        theta_m_delta: s_md,
        theta_m_y_n: s_my,
        delta_delta: s_dd,
        delta_y_n: s_dy,
        y_n_y_n: s_yy,
        rest: Some(JointCovarianceRest {
            theta_n_theta_n: s_tt,
            theta_n_f_n: DMatrix::zeros(n, n),
            theta_n_delta: s_td,
            theta_n_y_n: s_ty,
            f_n_f_n,
            f_n_delta: DMatrix::zeros(n, d),
            f_n_y_n: s_fy,
        }),
    })
}

/// Invert the joint precision block-wise.
pub fn joint_covariance<R: Real>(
    jp: &JointPrecision<R>,
    mode: CovarianceMode,
) -> Result<JointCovariance<R>> {
    match mode {
        CovarianceMode::Lazy => Ok(lazy_blocks(jp)),
        CovarianceMode::Full => full_blocks(jp),
    }
}
