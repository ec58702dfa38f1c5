//! `ppk` command line: simulation studies and one-shot fits.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
//! failure inside the estimators.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ppk_core::dgp::Setup;
use ppk_core::kernel::TuningGrid;
use ppk_harness::error::HarnessError;
use ppk_harness::fit::{fit_ppk, FitOptions};
use ppk_harness::io::{read_csv, write_estimates, write_report};
use ppk_harness::metrics::DEFAULT_LEVEL;
use ppk_harness::sim::{run_simulation, CutoffRule, Method, RunConfig};

#[derive(Parser)]
#[command(
    name = "ppk",
    about = "Gaussian-process treatment-effect estimation over propensity-score partitions",
    version
)]
struct Cli {
    /// Worker threads (default: available cores minus one).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridArgs {
    /// Smallest grid value for all three hyperparameters.
    #[arg(long, default_value_t = 0.1)]
    grid_min: f64,
    /// Largest grid value.
    #[arg(long, default_value_t = 5.0)]
    grid_max: f64,
    /// Grid step.
    #[arg(long, default_value_t = 0.2)]
    grid_step: f64,
}

impl GridArgs {
    fn build(&self) -> Result<TuningGrid<f64>, HarnessError> {
        TuningGrid::new(self.grid_min, self.grid_max, self.grid_step)
            .map_err(HarnessError::Core)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated synthetic study and write a JSON report.
    Simulate {
        /// Data-generating setup: A, B, C, or D.
        #[arg(long)]
        setup: String,
        /// Training sample size per replication.
        #[arg(long)]
        n: usize,
        /// Test points per replication.
        #[arg(long, default_value_t = 500)]
        test_m: usize,
        /// Number of propensity regions.
        #[arg(long)]
        k: usize,
        /// Pseudo points per boundary.
        #[arg(long, default_value_t = 20)]
        b: usize,
        /// Replications.
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Base seed; replication r derives its streams from seed + r.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        grid: GridArgs,
        /// Comma-separated methods: ppk, local, global.
        #[arg(long, default_value = "ppk,local,global")]
        methods: String,
        /// `quantile`, or a comma-separated list of fixed cutoffs in (0,1).
        #[arg(long, default_value = "quantile")]
        cutoffs: String,
        /// Half-width of the boundary-bias window.
        #[arg(long, default_value_t = 0.01)]
        margin: f64,
        /// Output report path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit on a CSV dataset and write per-point estimates.
    Fit {
        /// Training data CSV (columns y, t, x1..xp).
        #[arg(long)]
        data: PathBuf,
        /// Number of propensity regions.
        #[arg(long)]
        k: usize,
        /// Pseudo points per boundary.
        #[arg(long, default_value_t = 20)]
        b: usize,
        /// Seed for pseudo-point generation.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        grid: GridArgs,
        /// Optional CSV of points to score (defaults to the training data).
        #[arg(long)]
        test: Option<PathBuf>,
        /// Z-score covariates before they enter the kernels.
        #[arg(long, default_value_t = false)]
        zscore: bool,
        /// Output estimates CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_methods(spec: &str) -> Result<Vec<Method>, HarnessError> {
    let mut methods = Vec::new();
    for part in spec.split(',') {
        let m: Method = part.parse()?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(HarnessError::Config("no methods given".into()));
    }
    Ok(methods)
}

fn parse_cutoffs(spec: &str) -> Result<CutoffRule, HarnessError> {
    if spec.trim().eq_ignore_ascii_case("quantile") {
        return Ok(CutoffRule::Quantile);
    }
    let values: Vec<f64> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("bad cutoff value '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    Ok(CutoffRule::Fixed(values))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |c| c.get().max(2) - 1));
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build_global()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;

    match cli.command {
        Command::Simulate {
            setup,
            n,
            test_m,
            k,
            b,
            reps,
            seed,
            grid,
            methods,
            cutoffs,
            margin,
            out,
        } => {
            let config = RunConfig {
                setup: setup
                    .parse::<Setup>()
                    .map_err(|e| HarnessError::Config(e.to_string()))?,
                n,
                test_m,
                k,
                b,
                grid: grid.build()?,
                replications: reps,
                seed,
                methods: parse_methods(&methods)?,
                cutoffs: parse_cutoffs(&cutoffs)?,
                margin,
                min_region_size: ppk_core::data::DEFAULT_MIN_REGION_SIZE,
            };
            let report = run_simulation(&config)?;
            write_report(&out, &report)?;
            for m in &report.methods {
                println!(
                    "{}: mse={:.6} ci_length={:.4} coverage={:.3} wall={:.2}s reps={}",
                    m.method, m.mse, m.mean_ci_length, m.coverage, m.wall_time_seconds,
                    m.replications,
                );
            }
            if report.failed_replications > 0 {
                eprintln!("warning: {} replication(s) failed", report.failed_replications);
            }
            println!("report written to {}", out.display());
            Ok(())
        }
        Command::Fit { data, k, b, seed, grid, test, zscore, out } => {
            let train = read_csv(&data)?;
            let mut opts = FitOptions::new(k, b, seed, grid.build()?);
            opts.zscore_kernel_inputs = zscore;
            let fitted = fit_ppk(&train, &opts)?;
            let test_x = match test {
                Some(path) => read_csv(&path)?.x,
                None => train.x.clone(),
            };
            let pred = fitted.predict(&test_x)?;
            write_estimates(&out, &pred.posterior, &pred.scores, &pred.regions, DEFAULT_LEVEL)?;
            println!("estimates for {} points written to {}", pred.posterior.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's help/version on stdout with success, everything
            // else is a usage error
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
