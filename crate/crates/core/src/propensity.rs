//! Logistic-regression propensity model: IRLS fitting, scoring, and the
//! exact one-coordinate solve used to pin a point's score to a target value.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;
use crate::num::Real;

/// Coefficients below this magnitude are treated as zero when solving for a
/// coordinate or choosing an adjustable dimension.
pub const DEFAULT_COEF_EPSILON: f64 = 1e-8;

/// Options for [`fit_logistic`].
#[derive(Debug, Clone, Copy)]
pub struct LogisticConfig {
    /// Convergence threshold on the max absolute coefficient change.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge added to the weighted normal equations for stability.
    pub ridge: f64,
    /// Coefficient-norm cap beyond which the fit is declared separated.
    pub norm_cap: f64,
    /// Z-score covariates before fitting (coefficients are mapped back to
    /// the raw scale, so predictions are unchanged in form).
    pub standardize: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, ridge: 1e-8, norm_cap: 1e6, standardize: false }
    }
}

/// Fitted logistic model for `P(T = 1 | x)`.
#[derive(Debug, Clone)]
pub struct PropensityModel<R: Real> {
    pub intercept: R,
    pub coefficients: DVector<R>,
}

fn sigmoid<R: Real>(eta: R) -> R {
    if eta >= R::zero() {
        R::one() / (R::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (R::one() + e)
    }
}

/// Log-odds of a probability.
pub fn logit<R: Real>(p: R) -> R {
    (p / (R::one() - p)).ln()
}

impl<R: Real> PropensityModel<R> {
    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    /// Dimensions whose coefficient magnitude is at least `eps`.
    pub fn adjustable_dimensions(&self, eps: R) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() >= eps)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Fit by iteratively reweighted least squares.
pub fn fit_logistic<R: Real>(
    x: &DMatrix<R>,
    t: &[u8],
    config: &LogisticConfig,
) -> Result<PropensityModel<R>> {
    let n = x.nrows();
    let p = x.ncols();
    if t.len() != n {
        return Err(Error::DimensionMismatch(format!("X has {n} rows, t has {}", t.len())));
    }
    if n <= p + 1 {
        return Err(Error::Invalid(format!(
            "logistic fit needs n > p + 1 (n = {n}, p = {p})"
        )));
    }
    let ones = t.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::SingleClass);
    }

    // optional column standardization; coefficients are mapped back below
    let (xs, col_mean, col_sd) = if config.standardize {
        let mut means = vec![R::zero(); p];
        let mut sds = vec![R::one(); p];
        let mut xs = x.clone();
        let rn = R::from_usize(n).unwrap();
        for j in 0..p {
            let col = x.column(j);
            let mean = col.sum() / rn;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).fold(R::zero(), |a, b| a + b)
                / rn;
            let sd = var.sqrt();
            means[j] = mean;
            if sd > R::zero() {
                sds[j] = sd;
                for i in 0..n {
                    xs[(i, j)] = (x[(i, j)] - mean) / sd;
                }
            } else {
                for i in 0..n {
                    xs[(i, j)] = R::zero();
                }
            }
        }
        (xs, means, sds)
    } else {
        (x.clone(), vec![R::zero(); p], vec![R::one(); p])
    };

    // design with a leading intercept column
    let d = p + 1;
    let mut design = DMatrix::zeros(n, d);
    for i in 0..n {
        design[(i, 0)] = R::one();
        for j in 0..p {
            design[(i, j + 1)] = xs[(i, j)];
        }
    }
    let tv = DVector::from_iterator(n, t.iter().map(|&v| R::from_u8(v).unwrap()));

    let w_floor = R::of(1e-10);
    let mut beta = DVector::<R>::zeros(d);
    for _ in 0..config.max_iter {
        let eta = &design * &beta;
        let mu = eta.map(sigmoid);
        // weighted normal equations with ridge
        let mut xtwx = DMatrix::<R>::zeros(d, d);
        let mut xtwz = DVector::<R>::zeros(d);
        for i in 0..n {
            let w = (mu[i] * (R::one() - mu[i])).max(w_floor);
            let z = eta[i] + (tv[i] - mu[i]) / w;
            for a in 0..d {
                let xa = design[(i, a)];
                xtwz[a] += xa * w * z;
                for b in a..d {
                    xtwx[(a, b)] += xa * w * design[(i, b)];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
            xtwx[(a, a)] += R::of(config.ridge);
        }
        let next = cholesky_jittered(&xtwx)?.chol.solve(&xtwz);
        let norm = next.norm().as_f64();
        if norm > config.norm_cap {
            return Err(Error::Separation { norm, cap: config.norm_cap });
        }
        let delta = (&next - &beta).amax();
        beta = next;
        if delta < R::of(config.tol) {
            let mut intercept = beta[0];
            let mut coefficients = DVector::zeros(p);
            for j in 0..p {
                let c = beta[j + 1] / col_sd[j];
                coefficients[j] = c;
                intercept -= c * col_mean[j];
            }
            return Ok(PropensityModel { intercept, coefficients });
        }
    }
    Err(Error::NoConvergence { max_iter: config.max_iter })
}

/// Estimated propensity score, clamped away from exact 0 and 1.
pub fn predict_propensity<R: Real>(model: &PropensityModel<R>, x: &DVector<R>) -> R {
    debug_assert_eq!(x.len(), model.p());
    let eta = model.intercept + model.coefficients.dot(x);
    sigmoid(eta).clamp(R::EPS, R::one() - R::EPS)
}

/// Score every row of a matrix.
pub fn score_rows<R: Real>(model: &PropensityModel<R>, x: &DMatrix<R>) -> DVector<R> {
    DVector::from_iterator(
        x.nrows(),
        x.row_iter().map(|row| {
            let eta = model.intercept + model.coefficients.dot(&row.transpose());
            sigmoid(eta).clamp(R::EPS, R::one() - R::EPS)
        }),
    )
}

/// Clamp scores into `[1e-6, 1 - 1e-6]` before any logit-space use, keeping
/// the positivity assumption numerically honest.
pub fn clamp_scores<R: Real>(scores: &mut DVector<R>) {
    let lo = R::of(1e-6);
    let hi = R::one() - lo;
    for s in scores.iter_mut() {
        *s = (*s).clamp(lo, hi);
    }
}

/// Solve for coordinate `hole` so the completed point scores `target` exactly
/// in logit space. Entry `hole` of `x` is ignored.
pub fn solve_adjusted_coordinate<R: Real>(
    model: &PropensityModel<R>,
    x: &DVector<R>,
    hole: usize,
    target: R,
    coef_eps: R,
) -> Result<R> {
    let cj = model.coefficients[hole];
    if cj.abs() < coef_eps {
        return Err(Error::ZeroCoefficient { index: hole });
    }
    let mut partial = model.intercept;
    for j in 0..model.p() {
        if j != hole {
            partial += model.coefficients[j] * x[j];
        }
    }
    Ok((logit(target) - partial) / cj)
}
