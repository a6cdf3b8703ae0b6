use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use varx_lowrank::estimators::{self, Estimate};
use varx_lowrank::harness::{self, ExperimentConfig, ExperimentKind, ExperimentOutput};
use varx_lowrank::theory_lab::extreme_eigenvalues;
use varx_lowrank::varx_sim::RegressionData;
use varx_lowrank::{io, Error};

/// Worker-count override for the trial thread pool.
const WORKERS_ENV: &str = "VARX_WORKERS";

#[derive(Parser)]
#[command(version, about = "Low-rank VARX identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw systems and repeated-sampling data sets for every N in the grid.
    Simulate(Common),
    /// Fit one data set (the configured bundle, or a fresh simulation).
    Estimate(Common),
    /// Exact recovery rate of nuclear-norm minimization over the N grid (noiseless).
    PhaseTransition(Common),
    /// Operator-norm error of the regularized estimator against N (noisy).
    ErrorScaling(Common),
    /// Check each estimate against its predicted error bound and cone condition (noisy).
    BoundsCheck(Common),
    /// Weak restricted isometry constants of the design over the N grid.
    RipProfile(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output_dir.
    #[arg(long)]
    out: Option<String>,
    /// Overrides trials_per_cell.
    #[arg(long)]
    trials: Option<usize>,
}

enum Failure {
    Config(Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(&common.config)
        .and_then(|cfg| cfg.with_overrides(common.seed, common.trials, common.out.as_deref()))
        .map_err(Failure::Config)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    if cfg.output_dir.is_empty() {
        PathBuf::from(".")
    } else {
        PathBuf::from(&cfg.output_dir)
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let out = out_dir(cfg);
    for &n_samples in &cfg.n_grid {
        // same draw as trial 0 of the experiment cell for this N
        let seed = harness::trial_seed(cfg.master_seed, n_samples, 0);
        let (model, data) = harness::trial_inputs(cfg, n_samples, seed)?;
        let dir = out.join(format!("data_N{n_samples}"));
        io::write_data_csv(&dir, &data)?;
        io::write_matrix_csv(&dir.join("Theta_star.csv"), &model.theta_star())?;
        std::fs::write(out.join(format!("data_N{n_samples}.json")), io::data_to_json(&data)?).map_err(Error::from)?;
        println!("N={n_samples} seed={seed} -> {}", dir.display());
    }
    Ok(())
}

fn fit_loaded(cfg: &ExperimentConfig, data: &RegressionData) -> varx_lowrank::Result<Estimate> {
    let Some(noise) = cfg.noise_spec() else {
        return estimators::nuclear_min_exact(data, &cfg.solver);
    };
    let cov = data.sigma.clone().unwrap_or_else(|| data.sample_covariance());
    let (_, gamma_max) = extreme_eigenvalues(&cov);
    let beta = cfg.beta.unwrap_or(gamma_max.max(0.0).sqrt());
    let alpha = estimators::alpha_param(noise.subgaussian_param(), beta, gamma_max.max(0.0))?;
    let lambda = cfg.lambda_scale
        * estimators::lambda_rule(
            data.state_dim(),
            data.regressor_dim() - data.state_dim(),
            data.samples(),
            alpha,
        )?;
    estimators::nuclear_reg_solve(data, lambda, &cfg.solver)
}

fn estimate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let est = match &cfg.data_bundle {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(Error::InvalidArgument(format!("cannot read data bundle {path}: {e}"))))?;
            let data = io::data_from_json(&text).map_err(Failure::Config)?;
            fit_loaded(cfg, &data)?
        }
        None => {
            let n_samples = cfg.n_grid[0];
            let (model, data) =
                harness::trial_inputs(cfg, n_samples, harness::trial_seed(cfg.master_seed, n_samples, 0))?;
            if cfg.noise_spec().is_some() {
                let (_, lambda) = harness::regularization(cfg, &model, &data)?;
                estimators::nuclear_reg_solve(&data, lambda, &cfg.solver)?
            } else {
                estimators::nuclear_min_exact(&data, &cfg.solver)?
            }
        }
    };
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    let path = out.join("estimate.json");
    std::fs::write(&path, io::estimate_to_json(&est)?).map_err(Error::from)?;
    println!(
        "lambda={} iters={} converged={} kkt_residual={:e} objective={} -> {}",
        est.lambda_used,
        est.iters,
        est.converged,
        est.kkt_residual,
        est.objective,
        path.display()
    );
    Ok(())
}

fn report(out: &ExperimentOutput, dir: &Path, files: &[String]) {
    println!(
        "{:>8} {:>7} {:>10} {:>14} {:>14} {:>10}",
        "N", "trials", "success", "median_op", "median_frob", "violation"
    );
    for c in &out.cells {
        println!(
            "{:>8} {:>7} {:>10.4} {:>14.6e} {:>14.6e} {:>10.4}",
            c.n_samples, c.trials, c.success_rate, c.median_op_err, c.median_frob_err, c.bound_violation_rate
        );
    }
    if let Some(slope) = out.fitted_slope {
        println!("fitted log-log slope: {slope:.4}");
    }
    for f in files {
        println!("wrote {}", dir.join(f).display());
    }
}

fn experiment(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<(), Failure> {
    let out = harness::run(cfg, kind).map_err(|e| match e {
        Error::InvalidArgument(_) => Failure::Config(e),
        other => Failure::Run(other),
    })?;
    let dir = out_dir(cfg);
    let files = out.write(&dir)?;
    report(&out, &dir, &files);
    Ok(())
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let workers: usize = raw.parse().ok().filter(|&w| w > 0).ok_or_else(|| {
        Failure::Config(Error::InvalidArgument(format!(
            "{WORKERS_ENV} must be a positive integer, got {raw:?}"
        )))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Failure::Config(Error::InvalidArgument(e.to_string())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|()| match &cli.command {
        Command::Simulate(c) => simulate(&load(c)?),
        Command::Estimate(c) => estimate(&load(c)?),
        Command::PhaseTransition(c) => experiment(&load(c)?, ExperimentKind::PhaseTransition),
        Command::ErrorScaling(c) => experiment(&load(c)?, ExperimentKind::ErrorScaling),
        Command::BoundsCheck(c) => experiment(&load(c)?, ExperimentKind::BoundsCheck),
        Command::RipProfile(c) => experiment(&load(c)?, ExperimentKind::RipProfile),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) if e.is_numerical() => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
