//! Seeded Monte Carlo experiments with CSV and plot-data output.
//!
//! Seeds form a chain: the cell for sample size `N` uses
//! `derive_seed(master_seed, N)`, trial `t` of that cell uses
//! `derive_seed(cell_seed, t)`, and within a trial the system is drawn from
//! `derive_seed(trial_seed, 0)` and the data from `derive_seed(trial_seed, 1)`.
//! The trial seed is stored in every output row, so [`replay_trial`]
//! reproduces any single row in isolation.

mod config;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ExperimentKind};

use crate::error::{Error, Result};
use crate::estimators::{self, Estimate};
use crate::io;
use crate::matspec::{self, RealMatrix};
use crate::rng::derive_seed;
use crate::theory_lab::{self, RecoveryVerdict, WeakRipEstimate};
use crate::varx_sim::{self, RegressionData, SystemModel};

/// Relative Frobenius error below which a noiseless trial counts as exact
/// recovery.
pub const SUCCESS_TOL: f64 = 1e-3;

/// One CSV row; the column order is the same for every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub op_err: f64,
    pub frob_err: f64,
    pub nuc_err: f64,
    pub lambda: f64,
    pub kkt_residual: f64,
    pub premise_held: bool,
    pub bound: f64,
    pub violated: bool,
    pub wall_ms: u64,
}

impl TrialRecord {
    fn blank(kind: ExperimentKind, n_samples: usize, trial: usize, seed: u64) -> Self {
        Self {
            experiment: kind.name().to_string(),
            n_samples,
            trial,
            seed,
            success: false,
            op_err: f64::NAN,
            frob_err: f64::NAN,
            nuc_err: f64::NAN,
            lambda: f64::NAN,
            kkt_residual: f64::NAN,
            premise_held: false,
            bound: f64::NAN,
            violated: false,
            wall_ms: 0,
        }
    }

    /// Two records are the same trial outcome if they agree bit for bit on
    /// everything except the wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let bits = |r: &Self| [r.op_err, r.frob_err, r.nuc_err, r.lambda, r.kkt_residual, r.bound].map(f64::to_bits);
        self.experiment == other.experiment
            && (self.n_samples, self.trial, self.seed) == (other.n_samples, other.trial, other.seed)
            && (self.success, self.premise_held, self.violated) == (other.success, other.premise_held, other.violated)
            && bits(self) == bits(other)
    }
}

/// Summary of all trials at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub median_op_err: f64,
    pub median_frob_err: f64,
    pub median_bound: f64,
    pub premise_held: usize,
    /// Fraction of premise-holding trials that violated the bound.
    pub bound_violation_rate: f64,
    pub wall_ms: u64,
}

/// Weak-RIP certificate of one design in a profile run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipCell {
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub trial: usize,
    pub seed: u64,
    pub s_value: Option<usize>,
    pub estimates: Vec<WeakRipEstimate>,
    pub verdict: RecoveryVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub experiment: ExperimentKind,
    pub records: Vec<TrialRecord>,
    pub cells: Vec<CellResult>,
    /// Least-squares slope of `ln(median op error)` against `ln N`.
    pub fitted_slope: Option<f64>,
    pub rip: Vec<RipCell>,
}

pub fn cell_seed(master: u64, n_samples: usize) -> u64 {
    derive_seed(master, n_samples as u64)
}

pub fn trial_seed(master: u64, n_samples: usize, trial: usize) -> u64 {
    derive_seed(cell_seed(master, n_samples), trial as u64)
}

fn system_for(cfg: &ExperimentConfig, seed: u64) -> Result<SystemModel> {
    varx_sim::generate_system(&cfg.system_spec(), derive_seed(seed, 0))
}

fn data_for(cfg: &ExperimentConfig, model: &SystemModel, n_samples: usize, seed: u64) -> Result<RegressionData> {
    varx_sim::collect_repeated(
        model,
        n_samples,
        cfg.t0,
        &cfg.input_spec(),
        cfg.noise_spec().as_ref(),
        derive_seed(seed, 1),
    )
}

/// Draws the system and regression data of one trial.
pub fn trial_inputs(cfg: &ExperimentConfig, n_samples: usize, seed: u64) -> Result<(SystemModel, RegressionData)> {
    let model = system_for(cfg, seed)?;
    let data = data_for(cfg, &model, n_samples, seed)?;
    Ok((model, data))
}

/// Noise-scale parameter `α` and the regularization weight of a noisy trial.
pub fn regularization(cfg: &ExperimentConfig, model: &SystemModel, data: &RegressionData) -> Result<(f64, f64)> {
    let sigma = data
        .sigma
        .as_ref()
        .ok_or_else(|| Error::invalid("population covariance missing"))?;
    let (_, gamma_max) = theory_lab::extreme_eigenvalues(sigma);
    let sigma_w = cfg.noise_spec().map_or(0.0, |d| d.subgaussian_param());
    let beta = match cfg.beta {
        Some(b) => b,
        None => varx_sim::subgaussian_param(model, cfg.t0, cfg.input_spec().subgaussian_param(), sigma_w)?,
    };
    let alpha = estimators::alpha_param(sigma_w, beta, gamma_max.max(0.0))?;
    let lambda = cfg.lambda_scale * estimators::lambda_rule(cfg.n, cfg.m, data.samples(), alpha)?;
    Ok((alpha, lambda))
}

fn fill_errors(rec: &mut TrialRecord, est: &Estimate, theta_star: &RealMatrix) -> Result<RealMatrix> {
    let delta = &est.theta_hat - theta_star;
    rec.op_err = matspec::operator_norm(&delta)?;
    rec.frob_err = delta.norm();
    rec.nuc_err = matspec::nuclear_norm(&delta)?;
    rec.kkt_residual = est.kkt_residual;
    Ok(delta)
}

fn phase_transition_trial(cfg: &ExperimentConfig, rec: &mut TrialRecord) -> Result<()> {
    let (model, data) = trial_inputs(cfg, rec.n_samples, rec.seed)?;
    let theta = model.theta_star();
    rec.premise_held = true;
    let est = estimators::nuclear_min_exact(&data, &cfg.solver)?;
    fill_errors(rec, &est, &theta)?;
    rec.success = rec.frob_err <= SUCCESS_TOL * theta.norm();
    Ok(())
}

fn error_scaling_trial(cfg: &ExperimentConfig, rec: &mut TrialRecord) -> Result<()> {
    let (model, data) = trial_inputs(cfg, rec.n_samples, rec.seed)?;
    let theta = model.theta_star();
    let (alpha, lambda) = regularization(cfg, &model, &data)?;
    rec.lambda = lambda;
    let w = data.w.as_ref().ok_or_else(|| Error::invalid("noise matrix missing"))?;
    rec.premise_held = lambda >= 2.0 * theory_lab::cross_term(&data.z, w, alpha)?.value;
    let (gamma_min, _) = theory_lab::extreme_eigenvalues(data.sigma.as_ref().expect("checked above"));
    rec.bound = 24.0 * alpha / gamma_min * (data.regressor_dim() as f64 / data.samples() as f64).sqrt();
    let est = estimators::nuclear_reg_solve(&data, lambda, &cfg.solver)?;
    fill_errors(rec, &est, &theta)?;
    rec.success = est.converged;
    rec.violated = rec.op_err > rec.bound;
    Ok(())
}

fn bounds_check_trial(cfg: &ExperimentConfig, rec: &mut TrialRecord) -> Result<()> {
    let (model, data) = trial_inputs(cfg, rec.n_samples, rec.seed)?;
    let theta = model.theta_star();
    let (alpha, lambda) = regularization(cfg, &model, &data)?;
    rec.lambda = lambda;
    let w = data.w.as_ref().ok_or_else(|| Error::invalid("noise matrix missing"))?;
    rec.premise_held = lambda >= 2.0 * theory_lab::cross_term(&data.z, w, alpha)?.value;
    let est = estimators::nuclear_reg_solve(&data, lambda, &cfg.solver)?;
    let delta = fill_errors(rec, &est, &theta)?;
    rec.success = est.converged;

    let curvature = theory_lab::curvature_estimate(&data.z, cfg.n, 1, derive_seed(rec.seed, 2))?.value();
    let slack = 10.0 * cfg.solver.kkt_tol;
    rec.bound = 3.0 * lambda / curvature + slack * rec.frob_err;
    let frame = matspec::subspace_frame(&theta, cfg.r)?;
    let cone = theory_lab::cone_check(&delta, &frame, cfg.r)?;
    let cone_ok = cone.holds(cfg.r, slack * (rec.nuc_err + matspec::nuclear_norm(&theta)?));
    rec.violated = rec.premise_held && (rec.op_err > rec.bound || !cone_ok);
    Ok(())
}

/// Runs one trial. Failures inside the pipeline produce a non-successful
/// record rather than an error.
pub fn replay_trial(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    n_samples: usize,
    trial: usize,
    seed: u64,
) -> TrialRecord {
    let mut rec = TrialRecord::blank(kind, n_samples, trial, seed);
    // Instant is unavailable on some targets, so only touch it on request
    let start = cfg.record_wall_time.then(Instant::now);
    let outcome = match kind {
        ExperimentKind::PhaseTransition => phase_transition_trial(cfg, &mut rec),
        ExperimentKind::ErrorScaling => error_scaling_trial(cfg, &mut rec),
        ExperimentKind::BoundsCheck => bounds_check_trial(cfg, &mut rec),
        ExperimentKind::RipProfile => rip_trial(cfg, &mut rec).map(|_| ()),
    };
    if outcome.is_err() {
        rec.success = false;
    }
    if let Some(t) = start {
        rec.wall_ms = t.elapsed().as_millis() as u64;
    }
    rec
}

/// Median of the finite entries; NaN when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Aggregates records of one cell in trial order.
pub fn aggregate(n_samples: usize, records: &[TrialRecord]) -> CellResult {
    let trials = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let premise = records.iter().filter(|r| r.premise_held).count();
    let violations = records.iter().filter(|r| r.premise_held && r.violated).count();
    CellResult {
        n_samples,
        trials,
        success_rate: successes as f64 / trials.max(1) as f64,
        median_op_err: median(records.iter().map(|r| r.op_err)),
        median_frob_err: median(records.iter().map(|r| r.frob_err)),
        median_bound: median(records.iter().map(|r| r.bound)),
        premise_held: premise,
        bound_violation_rate: if premise == 0 {
            0.0
        } else {
            violations as f64 / premise as f64
        },
        wall_ms: records.iter().map(|r| r.wall_ms).sum(),
    }
}

/// True if every later cell's success rate is at least the earlier one's
/// minus two combined standard errors.
pub fn success_monotone_within_noise(cells: &[CellResult]) -> bool {
    let se2 = |c: &CellResult| c.success_rate * (1.0 - c.success_rate) / c.trials.max(1) as f64;
    cells.iter().enumerate().all(|(i, a)| {
        cells[i + 1..]
            .iter()
            .all(|b| b.success_rate >= a.success_rate - 2.0 * (se2(a) + se2(b)).sqrt())
    })
}

/// Least-squares slope of `ln y` against `ln x` over points with positive
/// finite coordinates.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn check_regime(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if let Some(k) = cfg.experiment {
        if k != kind {
            return Err(Error::InvalidArgument(format!(
                "config is for {} but {} was requested",
                k.name(),
                kind.name()
            )));
        }
    }
    match kind {
        ExperimentKind::PhaseTransition if cfg.noise_family.is_some() => Err(Error::InvalidArgument(
            "phase transition runs in the noiseless regime; drop noise_family".into(),
        )),
        ExperimentKind::ErrorScaling | ExperimentKind::BoundsCheck if cfg.noise_family.is_none() => {
            Err(Error::InvalidArgument(format!("{} needs noise_family", kind.name())))
        }
        _ => Ok(()),
    }
}

fn sweep(cfg: &ExperimentConfig, kind: ExperimentKind) -> (Vec<TrialRecord>, Vec<CellResult>) {
    let mut records = Vec::new();
    let mut cells = Vec::new();
    for &n_samples in &cfg.n_grid {
        let cell = crate::par_map(cfg.trials_per_cell, |t| {
            replay_trial(cfg, kind, n_samples, t, trial_seed(cfg.master_seed, n_samples, t))
        });
        cells.push(aggregate(n_samples, &cell));
        records.extend(cell);
    }
    (records, cells)
}

pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let kind = ExperimentKind::PhaseTransition;
    check_regime(cfg, kind)?;
    let (records, cells) = sweep(cfg, kind);
    Ok(ExperimentOutput {
        experiment: kind,
        records,
        cells,
        fitted_slope: None,
        rip: Vec::new(),
    })
}

pub fn run_error_scaling(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let kind = ExperimentKind::ErrorScaling;
    check_regime(cfg, kind)?;
    let (records, cells) = sweep(cfg, kind);
    let points: Vec<(f64, f64)> = cells.iter().map(|c| (c.n_samples as f64, c.median_op_err)).collect();
    let fitted_slope = log_log_slope(&points);
    Ok(ExperimentOutput {
        experiment: kind,
        records,
        cells,
        fitted_slope,
        rip: Vec::new(),
    })
}

pub fn run_bounds_check(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let kind = ExperimentKind::BoundsCheck;
    check_regime(cfg, kind)?;
    let (records, cells) = sweep(cfg, kind);
    Ok(ExperimentOutput {
        experiment: kind,
        records,
        cells,
        fitted_slope: None,
        rip: Vec::new(),
    })
}

/// Certifies one design. In the CSV row, `success` is the exact-recovery
/// verdict, `premise_held` the uniqueness verdict, `bound` the estimate at
/// the largest order and `violated` any failure flag.
fn rip_trial(cfg: &ExperimentConfig, rec: &mut TrialRecord) -> Result<RipCell> {
    let (_, data) = trial_inputs(cfg, rec.n_samples, rec.seed)?;
    let sigma = data
        .sigma
        .as_ref()
        .ok_or_else(|| Error::invalid("population covariance missing"))?;
    let (s, estimates) =
        theory_lab::certify_weak_rip(&data.z, cfg.n, sigma, cfg.r, cfg.rip_trials, derive_seed(rec.seed, 2))?;
    let delta_of = |order: usize| estimates.iter().find(|e| e.order == order).and_then(|e| e.delta_hat);
    let verdict = theory_lab::recovery_verdict(delta_of(2 * cfg.r), s.and_then(|s| delta_of((2 + 3 * s) * cfg.r)));
    rec.success = verdict.exact_recovery;
    rec.premise_held = verdict.uniqueness;
    rec.bound = estimates.last().and_then(|e| e.delta_hat).unwrap_or(f64::NAN);
    rec.violated = estimates.iter().any(WeakRipEstimate::failed);
    Ok(RipCell {
        n_samples: rec.n_samples,
        trial: rec.trial,
        seed: rec.seed,
        s_value: s,
        estimates,
        verdict,
    })
}

/// Weak-RIP certificates across the sample-size grid. Numerical failures
/// abort the run since there is no solver whose failure could be counted.
pub fn run_rip_profile(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let kind = ExperimentKind::RipProfile;
    check_regime(cfg, kind)?;
    let mut records = Vec::new();
    let mut cells = Vec::new();
    let mut rip = Vec::new();
    for &n_samples in &cfg.n_grid {
        let results = crate::par_map(cfg.trials_per_cell, |t| {
            let mut rec = TrialRecord::blank(kind, n_samples, t, trial_seed(cfg.master_seed, n_samples, t));
            let start = cfg.record_wall_time.then(Instant::now);
            let cell = rip_trial(cfg, &mut rec);
            if let Some(t) = start {
                rec.wall_ms = t.elapsed().as_millis() as u64;
            }
            cell.map(|c| (rec, c))
        });
        let mut cell_records = Vec::with_capacity(results.len());
        for r in results {
            let (rec, cell) = r?;
            cell_records.push(rec);
            rip.push(cell);
        }
        cells.push(aggregate(n_samples, &cell_records));
        records.extend(cell_records);
    }
    Ok(ExperimentOutput {
        experiment: kind,
        records,
        cells,
        fitted_slope: None,
        rip,
    })
}

pub fn run(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentOutput> {
    match kind {
        ExperimentKind::PhaseTransition => run_phase_transition(cfg),
        ExperimentKind::ErrorScaling => run_error_scaling(cfg),
        ExperimentKind::BoundsCheck => run_bounds_check(cfg),
        ExperimentKind::RipProfile => run_rip_profile(cfg),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub const TRIAL_COLUMNS: [&str; 14] = [
    "experiment",
    "N",
    "trial",
    "seed",
    "success",
    "op_err",
    "frob_err",
    "nuc_err",
    "lambda",
    "kkt_residual",
    "premise_held",
    "bound",
    "violated",
    "wall_ms",
];

const CELL_COLUMNS: [&str; 9] = [
    "N",
    "trials",
    "success_rate",
    "median_op_err",
    "median_frob_err",
    "median_bound",
    "premise_held",
    "bound_violation_rate",
    "wall_ms",
];

impl ExperimentOutput {
    /// Writes `<name>_trials.csv`, `<name>_cells.csv`, `<name>_summary.json`
    /// and two-column `.dat` plot files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let name = self.experiment.name();
        let mut written = Vec::new();
        let mut emit = |file: String, body: &str| -> Result<()> {
            fs::write(dir.join(&file), body)?;
            written.push(file);
            Ok(())
        };

        let trials = format!("{name}_trials.csv");
        write_csv(&dir.join(&trials), &self.records, &TRIAL_COLUMNS)?;
        let cells = format!("{name}_cells.csv");
        write_csv(&dir.join(&cells), &self.cells, &CELL_COLUMNS)?;
        emit(format!("{name}_summary.json"), &serde_json::to_string_pretty(self)?)?;

        let series = |f: fn(&CellResult) -> f64| -> Vec<(f64, f64)> {
            self.cells.iter().map(|c| (c.n_samples as f64, f(c))).collect()
        };
        match self.experiment {
            ExperimentKind::PhaseTransition => {
                emit(
                    format!("{name}_success.dat"),
                    &io::two_column(&series(|c| c.success_rate)),
                )?;
            }
            ExperimentKind::ErrorScaling | ExperimentKind::BoundsCheck => {
                emit(
                    format!("{name}_op_err.dat"),
                    &io::two_column(&series(|c| c.median_op_err)),
                )?;
                emit(
                    format!("{name}_frob_err.dat"),
                    &io::two_column(&series(|c| c.median_frob_err)),
                )?;
                emit(
                    format!("{name}_bound.dat"),
                    &io::two_column(&series(|c| c.median_bound)),
                )?;
                emit(
                    format!("{name}_violation.dat"),
                    &io::two_column(&series(|c| c.bound_violation_rate)),
                )?;
            }
            ExperimentKind::RipProfile => {
                // one file per order position: r, 2r, (2+3s)r
                let positions = self.rip.iter().map(|c| c.estimates.len()).max().unwrap_or(0);
                for pos in 0..positions {
                    let points: Vec<(f64, f64)> =
                        self.cells
                            .iter()
                            .map(|c| {
                                let deltas =
                                    self.rip.iter().filter(|r| r.n_samples == c.n_samples).map(|r| {
                                        r.estimates.get(pos).and_then(|e| e.delta_hat).unwrap_or(f64::INFINITY)
                                    });
                                let mut v: Vec<f64> = deltas.collect();
                                v.sort_by(f64::total_cmp);
                                let med = if v.is_empty() { f64::NAN } else { v[(v.len() - 1) / 2] };
                                (c.n_samples as f64, if med.is_finite() { med } else { f64::NAN })
                            })
                            .collect();
                    emit(format!("{name}_delta_order{}.dat", pos + 1), &io::two_column(&points))?;
                }
            }
        }
        written.insert(0, cells);
        written.insert(0, trials);
        Ok(written)
    }
}
