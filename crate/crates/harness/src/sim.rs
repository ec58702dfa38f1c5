//! Monte-Carlo simulation runner: replicated data generation, propensity
//! fitting, partitioning, tuning, and scoring of every requested estimator
//! on a shared test set, with deterministic aggregation.

use std::time::Instant;

use rayon::prelude::*;

use ppk_core::baseline::{global_gp_posterior, local_gp_posterior};
use ppk_core::data::{
    assign_regions, quantile_cutoffs, region_of, Partition, DEFAULT_MIN_REGION_SIZE,
};
use ppk_core::dgp::{generate, DgpSpec, Setup};
use ppk_core::engine::posterior_hte;
use ppk_core::kernel::{grid_search_region, tune_all, TuningGrid};
use ppk_core::propensity::{clamp_scores, fit_logistic, score_rows, LogisticConfig};
use ppk_core::pseudo::PseudoSet;

use crate::error::{HarnessError, Result};
use crate::metrics::{boundary_bias, compute_metrics, BoundaryBiasCell, PointMetrics, DEFAULT_LEVEL};

/// Seed offsets separating the per-replication streams. Replication `r` of a
/// run with base seed `s` generates training data with seed `s + r`, test
/// data with `s + r + TEST_SEED_OFFSET`, and pseudo points from
/// `s + r + PSEUDO_SEED_OFFSET`.
pub const TEST_SEED_OFFSET: u64 = 1 << 32;
pub const PSEUDO_SEED_OFFSET: u64 = 1 << 33;

/// Estimators the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ppk,
    Local,
    Global,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ppk => "ppk",
            Method::Local => "local",
            Method::Global => "global",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ppk" => Ok(Method::Ppk),
            "local" | "local_gp" => Ok(Method::Local),
            "global" | "global_gp" => Ok(Method::Global),
            other => Err(HarnessError::Config(format!(
                "unknown method '{other}' (expected ppk|local|global)"
            ))),
        }
    }
}

/// How the region cutoffs are chosen each replication.
#[derive(Debug, Clone, PartialEq)]
pub enum CutoffRule {
    /// Evenly spaced quantiles of the estimated training scores.
    Quantile,
    /// A fixed list, strictly increasing in (0, 1); its length fixes K - 1.
    Fixed(Vec<f64>),
}

/// Full description of one simulation run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub setup: Setup,
    pub n: usize,
    pub test_m: usize,
    pub k: usize,
    pub b: usize,
    pub grid: TuningGrid<f64>,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub cutoffs: CutoffRule,
    pub margin: f64,
    pub min_region_size: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.test_m == 0 || self.k == 0 || self.b == 0 || self.replications == 0
        {
            return Err(HarnessError::Config(
                "n, test_m, k, b, and replications must all be positive".into(),
            ));
        }
        if self.margin <= 0.0 {
            return Err(HarnessError::Config("margin must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::Config("at least one method is required".into()));
        }
        if let CutoffRule::Fixed(cuts) = &self.cutoffs {
            if cuts.len() + 1 != self.k {
                return Err(HarnessError::Config(format!(
                    "{} fixed cutoffs imply K = {}, but K = {} was requested",
                    cuts.len(),
                    cuts.len() + 1,
                    self.k
                )));
            }
            for (i, &c) in cuts.iter().enumerate() {
                if !(0.0 < c && c < 1.0) || (i > 0 && c <= cuts[i - 1]) {
                    return Err(HarnessError::Config(
                        "fixed cutoffs must be strictly increasing inside (0, 1)".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One estimator's outcome on one replication.
#[derive(Debug, Clone)]
pub struct MethodRep {
    pub metrics: PointMetrics,
    pub bias: Vec<BoundaryBiasCell>,
    pub wall_seconds: f64,
}

/// Everything a single replication produced.
#[derive(Debug, Clone)]
pub struct Replication {
    /// Aligned with the config's method list.
    pub methods: Vec<MethodRep>,
    pub cutoffs: Vec<f64>,
}

/// Per-boundary bias aggregated over replications.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BoundaryBiasSummary {
    pub boundary: usize,
    pub mean_cutoff: f64,
    /// Mean of the per-replication signed biases; absent when no
    /// replication had points inside the margin.
    pub mean_bias: Option<f64>,
    pub reps_with_points: usize,
}

/// Aggregated metrics for one estimator.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub mse: f64,
    pub mean_ci_length: f64,
    pub coverage: f64,
    pub boundary_bias: Vec<BoundaryBiasSummary>,
    pub wall_time_seconds: f64,
    pub replications: usize,
}

/// The serialized result of a simulation run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub setup: String,
    pub n: usize,
    pub test_m: usize,
    pub k: usize,
    pub b: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_step: f64,
    pub replications_requested: usize,
    pub seed: u64,
    pub cutoff_rule: String,
    pub margin: f64,
    pub level: f64,
    pub methods: Vec<MethodReport>,
    pub failed_replications: usize,
    pub failures: Vec<String>,
}

/// Run one replication: generate data, fit the propensity model, partition,
/// tune, build pseudo points, and score every requested method on the
/// shared test set.
pub fn run_replication(config: &RunConfig, rep: usize) -> Result<Replication> {
    let rep_seed = config.seed + rep as u64;
    let train = generate(&DgpSpec::<f64>::new(config.setup, config.n, rep_seed))?;
    let test = generate(&DgpSpec::<f64>::new(
        config.setup,
        config.test_m,
        rep_seed + TEST_SEED_OFFSET,
    ))?;
    let truth = test
        .dataset
        .true_theta
        .as_ref()
        .expect("synthetic data always carries the true effect")
        .clone();

    let model = fit_logistic(&train.dataset.x, &train.dataset.t, &LogisticConfig::default())?;
    let mut train_scores = score_rows(&model, &train.dataset.x);
    clamp_scores(&mut train_scores);
    let mut test_scores = score_rows(&model, &test.dataset.x);
    clamp_scores(&mut test_scores);

    let score_vec: Vec<f64> = train_scores.iter().copied().collect();
    let cutoffs = match &config.cutoffs {
        CutoffRule::Quantile => quantile_cutoffs(&score_vec, config.k)?,
        CutoffRule::Fixed(c) => c.clone(),
    };
    let partition: Partition<f64> = assign_regions(&score_vec, &cutoffs)?;
    partition.require_min_size(config.min_region_size)?;

    let test_assignment: Vec<usize> =
        test_scores.iter().map(|&s| region_of(s, partition.cutoffs())).collect();

    let needs_regional =
        config.methods.iter().any(|m| matches!(m, Method::Ppk | Method::Local));

    // tuning shared by the partitioned estimators; its cost counts toward
    // each of them (either one would need it standalone)
    let (regional_hp, tune_seconds) = if needs_regional {
        let start = Instant::now();
        let hp = tune_all(&train.dataset, &partition, &config.grid)?;
        (Some(hp), start.elapsed().as_secs_f64())
    } else {
        (None, 0.0)
    };

    let mut methods = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let start = Instant::now();
        let (post, extra_seconds) = match method {
            Method::Ppk => {
                let hp = regional_hp.as_ref().expect("tuned above");
                let pseudo = PseudoSet::generate(
                    &model,
                    &train.dataset.x,
                    &partition,
                    config.b,
                    rep_seed + PSEUDO_SEED_OFFSET,
                )?;
                let post = posterior_hte(
                    &train.dataset,
                    &test.dataset.x,
                    &test_scores,
                    &partition,
                    hp,
                    &pseudo,
                )?;
                (post, tune_seconds)
            }
            Method::Local => {
                let hp = regional_hp.as_ref().expect("tuned above");
                let post = local_gp_posterior(
                    &train.dataset,
                    &test.dataset.x,
                    &test_assignment,
                    &partition,
                    hp,
                )?;
                (post, tune_seconds)
            }
            Method::Global => {
                let hp = grid_search_region(&train.dataset.full_slice(), &config.grid)?;
                let post = global_gp_posterior(&train.dataset, &test.dataset.x, &hp)?;
                (post, 0.0)
            }
        };
        let wall_seconds = start.elapsed().as_secs_f64() + extra_seconds;
        let metrics = compute_metrics(&post, &truth, DEFAULT_LEVEL)?;
        let bias = boundary_bias(&post.mean, &truth, &test_scores, &cutoffs, config.margin);
        methods.push(MethodRep { metrics, bias, wall_seconds });
    }
    Ok(Replication { methods, cutoffs })
}

/// Run every replication on the worker pool and aggregate. Aggregates are
/// plain means over successful replications taken in replication order, so
/// the report does not depend on scheduling; failed replications are
/// excluded and counted.
pub fn run_simulation(config: &RunConfig) -> Result<MetricsReport> {
    config.validate()?;

    let outcomes: Vec<std::result::Result<Replication, String>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, rep).map_err(|e| format!("replication {rep}: {e}")))
        .collect();

    let mut failures = Vec::new();
    let mut done: Vec<Replication> = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => done.push(r),
            Err(msg) => failures.push(msg),
        }
    }
    if done.is_empty() {
        return Err(HarnessError::Config(format!(
            "every replication failed; first failure: {}",
            failures.first().cloned().unwrap_or_default()
        )));
    }

    let reps = done.len();
    let boundaries = config.k - 1;
    let mut methods = Vec::with_capacity(config.methods.len());
    for (mi, &method) in config.methods.iter().enumerate() {
        let mut mse = 0.0;
        let mut ci = 0.0;
        let mut cover = 0.0;
        let mut wall = 0.0;
        for r in &done {
            let m = &r.methods[mi];
            mse += m.metrics.mse;
            ci += m.metrics.ci_length;
            cover += m.metrics.coverage;
            wall += m.wall_seconds;
        }
        let rf = reps as f64;

        let mut bias_rows = Vec::with_capacity(boundaries);
        for bd in 0..boundaries {
            let mut cutoff_sum = 0.0;
            let mut bias_sum = 0.0;
            let mut with_points = 0usize;
            for r in &done {
                cutoff_sum += r.cutoffs[bd];
                if let Some(bias) = r.methods[mi].bias[bd].bias {
                    bias_sum += bias;
                    with_points += 1;
                }
            }
            bias_rows.push(BoundaryBiasSummary {
                boundary: bd,
                mean_cutoff: cutoff_sum / rf,
                mean_bias: (with_points > 0).then(|| bias_sum / with_points as f64),
                reps_with_points: with_points,
            });
        }

        methods.push(MethodReport {
            method: method.name().to_string(),
            mse: mse / rf,
            mean_ci_length: ci / rf,
            coverage: cover / rf,
            boundary_bias: bias_rows,
            wall_time_seconds: wall,
            replications: reps,
        });
    }

    Ok(MetricsReport {
        setup: config.setup.to_string(),
        n: config.n,
        test_m: config.test_m,
        k: config.k,
        b: config.b,
        grid_min: config.grid.min,
        grid_max: config.grid.max,
        grid_step: config.grid.step,
        replications_requested: config.replications,
        seed: config.seed,
        cutoff_rule: match &config.cutoffs {
            CutoffRule::Quantile => "quantile".to_string(),
            CutoffRule::Fixed(c) => c
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        },
        margin: config.margin,
        level: DEFAULT_LEVEL,
        methods,
        failed_replications: failures.len(),
        failures,
    })
}

/// A quick default configuration for tests and examples.
pub fn default_config(setup: Setup, n: usize, k: usize) -> RunConfig {
    RunConfig {
        setup,
        n,
        test_m: 500,
        k,
        b: 20,
        grid: TuningGrid::new(0.1, 5.0, 0.2).expect("static grid"),
        replications: 100,
        seed: 1,
        methods: vec![Method::Ppk, Method::Local, Method::Global],
        cutoffs: CutoffRule::Quantile,
        margin: 0.01,
        min_region_size: DEFAULT_MIN_REGION_SIZE,
    }
}

/// Strip the hardware-dependent wall-time fields, for byte comparisons.
pub fn strip_wall_times(report: &MetricsReport) -> MetricsReport {
    let mut out = report.clone();
    for m in &mut out.methods {
        m.wall_time_seconds = 0.0;
    }
    out
}
