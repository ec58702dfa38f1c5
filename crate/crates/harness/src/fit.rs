//! One-shot fitting pipeline for a dataset from disk: propensity model,
//! quantile partition, per-region tuning, boundary pseudo points, and the
//! constrained posterior at test inputs.

use nalgebra::{DMatrix, DVector};

use ppk_core::data::{
    assign_regions, quantile_cutoffs, region_of, Dataset, Partition, RegionHyperParams,
    DEFAULT_MIN_REGION_SIZE,
};
use ppk_core::engine::{posterior_hte_with_assignment, PosteriorHte};
use ppk_core::kernel::{tune_all, TuningGrid};
use ppk_core::propensity::{clamp_scores, fit_logistic, score_rows, LogisticConfig, PropensityModel};
use ppk_core::pseudo::PseudoSet;

use crate::error::Result;

/// Options for [`fit_ppk`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub k: usize,
    pub b: usize,
    pub seed: u64,
    pub grid: TuningGrid<f64>,
    pub min_region_size: usize,
    /// Z-score covariates before they enter the kernels (the propensity
    /// model always sees the raw covariates).
    pub zscore_kernel_inputs: bool,
}

impl FitOptions {
    pub fn new(k: usize, b: usize, seed: u64, grid: TuningGrid<f64>) -> Self {
        Self {
            k,
            b,
            seed,
            grid,
            min_region_size: DEFAULT_MIN_REGION_SIZE,
            zscore_kernel_inputs: false,
        }
    }
}

/// Column-wise affine transform fitted on the training covariates.
#[derive(Debug, Clone)]
struct ColumnScaler {
    mean: DVector<f64>,
    sd: DVector<f64>,
}

impl ColumnScaler {
    fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let p = x.ncols();
        let mut mean = DVector::zeros(p);
        let mut sd = DVector::from_element(p, 1.0);
        for j in 0..p {
            let col = x.column(j);
            let mu = col.sum() / n;
            mean[j] = mu;
            let var = col.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n;
            if var > 0.0 {
                sd[j] = var.sqrt();
            }
        }
        Self { mean, sd }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.sd[j])
    }
}

/// Everything a fit produces that prediction needs.
pub struct FittedPpk {
    pub model: PropensityModel<f64>,
    pub partition: Partition<f64>,
    pub hyperparams: Vec<RegionHyperParams<f64>>,
    pub pseudo: PseudoSet<f64>,
    kernel_train: Dataset<f64>,
    scaler: Option<ColumnScaler>,
}

/// Fit the partitioned estimator on a training dataset.
pub fn fit_ppk(train: &Dataset<f64>, opts: &FitOptions) -> Result<FittedPpk> {
    let model = fit_logistic(&train.x, &train.t, &LogisticConfig::default())?;
    let mut scores = score_rows(&model, &train.x);
    clamp_scores(&mut scores);
    let score_vec: Vec<f64> = scores.iter().copied().collect();
    let cutoffs = quantile_cutoffs(&score_vec, opts.k)?;
    let partition = assign_regions(&score_vec, &cutoffs)?;
    partition.require_min_size(opts.min_region_size)?;

    // pseudo points are constructed in raw covariate space, where the
    // propensity solve is exact
    let pseudo = PseudoSet::generate(&model, &train.x, &partition, opts.b, opts.seed)?;

    let scaler = opts.zscore_kernel_inputs.then(|| ColumnScaler::fit(&train.x));
    let kernel_x = match &scaler {
        Some(s) => s.apply(&train.x),
        None => train.x.clone(),
    };
    let kernel_train = Dataset::new(kernel_x, train.y.clone(), train.t.clone(), None)?;

    let mut pseudo = pseudo;
    if let Some(s) = &scaler {
        pseudo.points = s.apply(&pseudo.points);
    }

    let hyperparams = tune_all(&kernel_train, &partition, &opts.grid)?;
    Ok(FittedPpk { model, partition, hyperparams, pseudo, kernel_train, scaler })
}

/// Prediction output: the posterior plus the scores and region of every
/// test row.
pub struct Prediction {
    pub posterior: PosteriorHte<f64>,
    pub scores: DVector<f64>,
    pub regions: Vec<usize>,
}

impl FittedPpk {
    /// Score test inputs and compute the constrained posterior there.
    pub fn predict(&self, test_x: &DMatrix<f64>) -> Result<Prediction> {
        let mut scores = score_rows(&self.model, test_x);
        clamp_scores(&mut scores);
        let regions: Vec<usize> =
            scores.iter().map(|&s| region_of(s, self.partition.cutoffs())).collect();
        let kernel_test = match &self.scaler {
            Some(s) => s.apply(test_x),
            None => test_x.clone(),
        };
        let (posterior, _) = posterior_hte_with_assignment(
            &self.kernel_train,
            &kernel_test,
            &regions,
            &self.partition,
            &self.hyperparams,
            &self.pseudo,
        )?;
        Ok(Prediction { posterior, scores, regions })
    }
}
