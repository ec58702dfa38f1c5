//! Pseudo-input generation: points whose propensity score equals a region
//! boundary exactly, drawn from the two neighboring regions' moments.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Partition;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::propensity::{solve_adjusted_coordinate, PropensityModel, DEFAULT_COEF_EPSILON};

/// Per-dimension sample mean and variance of one region's covariates.
#[derive(Debug, Clone)]
pub struct RegionMoments<R: Real> {
    pub mean: DVector<R>,
    pub variance: DVector<R>,
}

/// Column means and `m - 1`-denominator variances.
pub fn region_moments<R: Real>(x_region: &DMatrix<R>) -> Result<RegionMoments<R>> {
    let m = x_region.nrows();
    if m < 2 {
        return Err(Error::TooFewSamples { m });
    }
    let p = x_region.ncols();
    let rm = R::from_usize(m).unwrap();
    let mut mean = DVector::zeros(p);
    let mut variance = DVector::zeros(p);
    for j in 0..p {
        let col = x_region.column(j);
        let mu = col.sum() / rm;
        mean[j] = mu;
        let ss = col.iter().map(|&v| (v - mu) * (v - mu)).fold(R::zero(), |a, b| a + b);
        variance[j] = ss / R::from_usize(m - 1).unwrap();
    }
    Ok(RegionMoments { mean, variance })
}

/// Draw `b` pseudo points for one boundary. For every point one dimension
/// with a usable propensity coefficient is chosen uniformly at random and
/// solved so the point's score equals `cutoff`; the remaining coordinates
/// are drawn from a normal with the two regions' pooled moments.
pub fn generate_pseudo_points<R: Real>(
    model: &PropensityModel<R>,
    moments_lower: &RegionMoments<R>,
    moments_upper: &RegionMoments<R>,
    cutoff: R,
    b: usize,
    rng_seed: u64,
) -> Result<DMatrix<R>> {
    let p = model.p();
    let eps = R::of(DEFAULT_COEF_EPSILON);
    let adjustable = model.adjustable_dimensions(eps);
    if adjustable.is_empty() {
        return Err(Error::NoAdjustableDimension);
    }
    let half = R::of(0.5);
    let mix_mean: Vec<R> = (0..p)
        .map(|j| (moments_lower.mean[j] + moments_upper.mean[j]) * half)
        .collect();
    let mix_sd: Vec<R> = (0..p)
        .map(|j| ((moments_lower.variance[j] + moments_upper.variance[j]) * half).sqrt())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = DMatrix::zeros(b, p);
    for row in 0..b {
        let adjust = adjustable[rng.random_range(0..adjustable.len())];
        let mut point = DVector::zeros(p);
        for j in 0..p {
            if j == adjust {
                continue;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            point[j] = mix_mean[j] + mix_sd[j] * R::of(z);
        }
        point[adjust] = solve_adjusted_coordinate(model, &point, adjust, cutoff, eps)?;
        out.set_row(row, &point.transpose());
    }
    Ok(out)
}

/// All pseudo points of a partition, grouped by boundary.
#[derive(Debug, Clone)]
pub struct PseudoSet<R: Real> {
    /// `b * (K - 1)` rows, boundary-major.
    pub points: DMatrix<R>,
    /// 0-based boundary index of each row.
    pub boundary_index: Vec<usize>,
    /// Points per boundary.
    pub b: usize,
}

impl<R: Real> PseudoSet<R> {
    /// Generate `b` points per boundary. Boundary `i` uses the RNG stream
    /// seeded with `base_seed + i`, so results do not depend on the order
    /// boundaries are processed in.
    pub fn generate(
        model: &PropensityModel<R>,
        x: &DMatrix<R>,
        partition: &Partition<R>,
        b: usize,
        base_seed: u64,
    ) -> Result<Self> {
        if b == 0 {
            return Err(Error::Invalid("pseudo-point count B must be at least 1".into()));
        }
        let boundaries = partition.k() - 1;
        let moments: Vec<RegionMoments<R>> = (0..partition.k())
            .map(|k| {
                region_moments(&x.select_rows(partition.region(k).iter()))
                    .map_err(|e| e.in_region(k))
            })
            .collect::<Result<_>>()?;

        let mut points = DMatrix::zeros(b * boundaries, x.ncols());
        let mut boundary_index = Vec::with_capacity(b * boundaries);
        for (i, &cutoff) in partition.cutoffs().iter().enumerate() {
            let block = generate_pseudo_points(
                model,
                &moments[i],
                &moments[i + 1],
                cutoff,
                b,
                base_seed + i as u64,
            )?;
            for r in 0..b {
                points.set_row(i * b + r, &block.row(r));
                boundary_index.push(i);
            }
        }
        Ok(Self { points, boundary_index, b })
    }

    /// Total number of constrained points, `b * (K - 1)`.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Rows belonging to boundary `i`.
    pub fn boundary_rows(&self, i: usize) -> DMatrix<R> {
        let start = i * self.b;
        self.points.rows(start, self.b).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::assign_regions;
    use crate::propensity::predict_propensity;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn two_point_moments() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]);
        let m = region_moments(&x).unwrap();
        assert_eq!(m.mean, DVector::from_row_slice(&[1.0, 1.0]));
        assert_eq!(m.variance, DVector::from_row_slice(&[2.0, 2.0]));
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let x = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);
        let m = region_moments(&x).unwrap();
        assert!(m.variance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_is_too_few() {
        let x = DMatrix::<f64>::zeros(1, 3);
        assert!(matches!(region_moments(&x), Err(Error::TooFewSamples { m: 1 })));
    }

    #[test]
    fn moments_match_two_pass_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(50, 4, |_, _| rng.random::<f64>() * 10.0 - 5.0);
        let m = region_moments(&x).unwrap();
        for j in 0..4 {
            let vals: Vec<f64> = x.column(j).iter().copied().collect();
            let mean = vals.iter().sum::<f64>() / 50.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0;
            assert!((m.mean[j] - mean).abs() < 1e-12);
            assert!((m.variance[j] - var).abs() < 1e-12);
        }
    }

    fn unit_moments(p: usize) -> RegionMoments<f64> {
        RegionMoments { mean: DVector::zeros(p), variance: DVector::from_element(p, 1.0) }
    }

    #[test]
    fn one_dimensional_model_pins_every_point() {
        let model = PropensityModel {
            intercept: 0.0,
            coefficients: DVector::from_row_slice(&[1.0]),
        };
        let pts =
            generate_pseudo_points(&model, &unit_moments(1), &unit_moments(1), 0.5, 8, 4).unwrap();
        for r in 0..8 {
            assert_eq!(pts[(r, 0)], 0.0); // logit(0.5) / 1
        }
    }

    #[test]
    fn same_seed_reproduces_points() {
        let model = PropensityModel {
            intercept: 0.3,
            coefficients: DVector::from_row_slice(&[1.0, -2.0, 0.5]),
        };
        let a = generate_pseudo_points(&model, &unit_moments(3), &unit_moments(3), 0.7, 16, 99)
            .unwrap();
        let b = generate_pseudo_points(&model, &unit_moments(3), &unit_moments(3), 0.7, 16, 99)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_coefficient_dimension_is_never_adjusted() {
        let model = PropensityModel {
            intercept: 0.0,
            coefficients: DVector::from_row_slice(&[0.0, 1.5]),
        };
        let pts = generate_pseudo_points(&model, &unit_moments(2), &unit_moments(2), 0.4, 64, 5)
            .unwrap();
        for r in 0..64 {
            let x = pts.row(r).transpose();
            let score = predict_propensity(&model, &x);
            assert!((score - 0.4).abs() < 1e-10);
        }
    }

    #[test]
    fn all_zero_coefficients_error() {
        let model = PropensityModel {
            intercept: 0.1,
            coefficients: DVector::from_row_slice(&[0.0, 0.0]),
        };
        assert!(matches!(
            generate_pseudo_points(&model, &unit_moments(2), &unit_moments(2), 0.4, 4, 5),
            Err(Error::NoAdjustableDimension)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn generated_scores_match_cutoff(
            seed in 0u64..1_000_000,
            cutoff in 0.05f64..0.95,
            c0 in prop::sample::select(vec![-2.0f64, -0.5, 0.8, 1.7]),
            c1 in -1.5f64..1.5,
        ) {
            let model = PropensityModel {
                intercept: 0.2,
                coefficients: DVector::from_row_slice(&[c0, c1, 0.0]),
            };
            let pts = generate_pseudo_points(
                &model, &unit_moments(3), &unit_moments(3), cutoff, 8, seed,
            ).unwrap();
            for r in 0..8 {
                let score = predict_propensity(&model, &pts.row(r).transpose());
                prop_assert!((score - cutoff).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn non_adjusted_coordinates_follow_pooled_moments() {
        // Dimensions 2 and 3 carry no propensity signal, so they are never
        // the adjusted coordinate: their empirical mean must sit within four
        // standard errors of the pooled region mean.
        let model = PropensityModel {
            intercept: 0.0,
            coefficients: DVector::from_row_slice(&[2.0, 1.0, 0.0, 0.0]),
        };
        let lower = RegionMoments {
            mean: DVector::from_row_slice(&[1.0, -1.0, 0.5, -4.0]),
            variance: DVector::from_row_slice(&[1.0, 0.5, 2.0, 0.25]),
        };
        let upper = RegionMoments {
            mean: DVector::from_row_slice(&[3.0, 1.0, 1.5, -2.0]),
            variance: DVector::from_row_slice(&[1.0, 1.5, 2.0, 0.75]),
        };
        let b = 10_000;
        let pts = generate_pseudo_points(&model, &lower, &upper, 0.5, b, 123).unwrap();
        for (j, (mix_mean, mix_var)) in [(2usize, (1.0, 2.0)), (3, (-3.0, 0.5))] {
            let mean = pts.column(j).sum() / b as f64;
            let se = (mix_var / b as f64).sqrt();
            assert!(
                (mean - mix_mean).abs() < 4.0 * se,
                "dim {j}: mean {mean} vs {mix_mean} (se {se})"
            );
        }
    }

    #[test]
    fn pseudo_set_covers_all_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 60;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let model = PropensityModel {
            intercept: 0.0,
            coefficients: DVector::from_row_slice(&[1.0, 0.7]),
        };
        let scores: Vec<f64> =
            (0..n).map(|i| predict_propensity(&model, &x.row(i).transpose())).collect();
        let cuts = crate::data::quantile_cutoffs(&scores, 3).unwrap();
        let part = assign_regions(&scores, &cuts).unwrap();
        let set = PseudoSet::generate(&model, &x, &part, 4, 7).unwrap();
        assert_eq!(set.len(), 8);
        assert_eq!(set.boundary_index, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        for r in 0..set.len() {
            let score = predict_propensity(&model, &set.points.row(r).transpose());
            let cutoff = part.cutoffs()[set.boundary_index[r]];
            assert!((score - cutoff).abs() < 1e-10);
        }
        // per-boundary seeding: regenerating reproduces rows bitwise
        let again = PseudoSet::generate(&model, &x, &part, 4, 7).unwrap();
        assert_eq!(set.points, again.points);
    }
}
