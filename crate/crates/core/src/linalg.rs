//! Dense linear-algebra helpers: jittered Cholesky factorization with
//! factorization-FLOP accounting, and small matrix utilities.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::num::Real;

/// Base diagonal jitter added to every square self-covariance block.
pub const BASE_JITTER: f64 = 1e-8;
/// Largest jitter tried before a factorization is declared failed.
pub const MAX_JITTER: f64 = 1e-4;

/// Cholesky factor plus the factorization work it cost.
pub struct CholFactor<R: Real> {
    pub chol: Cholesky<R, Dyn>,
    /// Approximate FLOPs spent on factorization attempts (`n^3/3` each).
    pub flops: u64,
}

fn chol_cost(n: usize) -> u64 {
    ((n * n * n) / 3).max(1) as u64
}

/// Factor a symmetric matrix, escalating diagonal jitter on failure.
///
/// The first attempt factors the matrix as given (callers add [`BASE_JITTER`]
/// to kernel blocks at assembly time). On failure the jitter is raised from
/// [`BASE_JITTER`] by factors of 10 up to [`MAX_JITTER`]; if every attempt
/// fails the result is [`Error::NotPositiveDefinite`].
pub fn cholesky_jittered<R: Real>(mat: &DMatrix<R>) -> Result<CholFactor<R>> {
    let n = mat.nrows();
    debug_assert_eq!(n, mat.ncols());
    let mut flops = 0u64;

    flops += chol_cost(n);
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok(CholFactor { chol, flops });
    }

    let mut jitter = BASE_JITTER;
    while jitter <= MAX_JITTER {
        let mut bumped = mat.clone();
        let j = R::of(jitter);
        for i in 0..n {
            bumped[(i, i)] += j;
        }
        flops += chol_cost(n);
        if let Some(chol) = Cholesky::new(bumped) {
            return Ok(CholFactor { chol, flops });
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite)
}

/// Log-determinant from a Cholesky factor.
pub fn log_det<R: Real>(chol: &Cholesky<R, Dyn>) -> R {
    let l = chol.l_dirty();
    let mut acc = R::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    acc + acc
}

/// Add `value` to the diagonal in place.
pub fn add_diagonal<R: Real>(mat: &mut DMatrix<R>, value: R) {
    let n = mat.nrows().min(mat.ncols());
    for i in 0..n {
        mat[(i, i)] += value;
    }
}

/// Replace a matrix by its symmetric part `(A + A^T) / 2`.
pub fn symmetrize<R: Real>(mat: &mut DMatrix<R>) {
    let half = R::of(0.5);
    let t = mat.transpose();
    for (a, b) in mat.iter_mut().zip(t.iter()) {
        *a = (*a + *b) * half;
    }
}

/// Smallest eigenvalue of a symmetric matrix (diagnostics and tests).
pub fn min_symmetric_eigenvalue<R: Real>(mat: &DMatrix<R>) -> R {
    if mat.nrows() == 0 {
        return R::zero();
    }
    let eig = nalgebra::SymmetricEigen::new(mat.clone());
    let mut min = eig.eigenvalues[0];
    for &v in eig.eigenvalues.iter() {
        if v < min {
            min = v;
        }
    }
    min
}

/// `max_ij |a - b| / max(1, max_ij |b|)`: scale-aware comparison error.
pub fn rel_err<R: Real>(a: &DMatrix<R>, b: &DMatrix<R>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_err shape mismatch");
    let mut diff = 0f64;
    let mut scale = 1f64;
    for (x, y) in a.iter().zip(b.iter()) {
        diff = diff.max((x.as_f64() - y.as_f64()).abs());
        scale = scale.max(y.as_f64().abs());
    }
    diff / scale
}
