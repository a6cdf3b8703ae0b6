//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layouts are documented on
//! each function.

use varx_lowrank::estimators::SolverConfig;
use varx_lowrank::harness::{self, ExperimentConfig, ExperimentKind};
use varx_lowrank::matspec;
use varx_lowrank::rng::{gaussian_matrix, random_orthonormal, seeded};
use varx_lowrank::varx_sim::{DistFamily, SingularProfile};
use varx_lowrank::RealMatrix;
use wasm_bindgen::prelude::*;

fn base_config(
    kind: ExperimentKind,
    n: usize,
    m: usize,
    r: usize,
    grid: &[u32],
    trials: u32,
    seed: u32,
) -> ExperimentConfig {
    ExperimentConfig {
        experiment: Some(kind),
        n,
        m,
        r,
        t0: 3,
        n_grid: grid.iter().map(|&g| g as usize).collect(),
        trials_per_cell: trials as usize,
        input_family: DistFamily::Gaussian,
        noise_family: None,
        sigma_u: 1.0,
        sigma_w: 0.0,
        spectral_radius_cap: 0.9,
        master_seed: seed as u64,
        solver: SolverConfig::default(),
        output_dir: String::new(),
        theta_scale: 1.0,
        singulars: SingularProfile::Equal,
        lambda_scale: 1.0,
        beta: None,
        rip_trials: 200,
        record_wall_time: false,
        data_bundle: None,
    }
}

/// Singular values of `L + noise·G` (rank-`rank` signal `L`, Gaussian `G`)
/// followed by those of its thresholded version.
pub fn svt_spectrum_impl(
    rows: usize,
    cols: usize,
    rank: usize,
    noise: f64,
    tau: f64,
    seed: u32,
) -> Result<Vec<f64>, String> {
    if rows == 0 || cols == 0 || rank > rows.min(cols) {
        return Err(format!("rank {rank} does not fit a {rows}×{cols} matrix"));
    }
    let mut rng = seeded(seed as u64);
    let signal = random_orthonormal(rows, rank, &mut rng)
        * random_orthonormal(cols, rank, &mut rng).transpose()
        * (rows.max(cols) as f64).sqrt();
    let m: RealMatrix = signal + gaussian_matrix(rows, cols, &mut rng) * noise;
    let before = matspec::singular_values(&m).map_err(|e| e.to_string())?;
    let after =
        matspec::singular_values(&matspec::svt(&m, tau).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    Ok(before.iter().chain(after.iter()).copied().collect())
}

/// Per grid point `[N, δ̂_r, δ̂_2r, δ̂_(2+3s)r]`, NaN marking a failure flag.
pub fn weak_rip_curve_impl(
    n: usize,
    m: usize,
    r: usize,
    sigma_w: f64,
    grid: &[u32],
    seed: u32,
) -> Result<Vec<f64>, String> {
    let mut cfg = base_config(ExperimentKind::RipProfile, n, m, r, grid, 1, seed);
    if sigma_w > 0.0 {
        cfg.noise_family = Some(DistFamily::Gaussian);
        cfg.sigma_w = sigma_w;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let out = harness::run_rip_profile(&cfg).map_err(|e| e.to_string())?;
    let mut flat = Vec::new();
    for cell in &out.rip {
        flat.push(cell.n_samples as f64);
        for k in 0..3 {
            flat.push(cell.estimates.get(k).and_then(|e| e.delta_hat).unwrap_or(f64::NAN));
        }
    }
    Ok(flat)
}

/// Per grid point `[N, median op error, median bound]`, then the fitted
/// log-log slope as the last entry.
#[allow(clippy::too_many_arguments)]
pub fn error_curve_impl(
    n: usize,
    m: usize,
    r: usize,
    sigma_u: f64,
    sigma_w: f64,
    lambda_scale: f64,
    grid: &[u32],
    trials: u32,
    seed: u32,
) -> Result<Vec<f64>, String> {
    let mut cfg = base_config(ExperimentKind::ErrorScaling, n, m, r, grid, trials, seed);
    cfg.noise_family = Some(DistFamily::Gaussian);
    cfg.sigma_u = sigma_u;
    cfg.sigma_w = sigma_w;
    cfg.lambda_scale = lambda_scale;
    cfg.validate().map_err(|e| e.to_string())?;
    let out = harness::run_error_scaling(&cfg).map_err(|e| e.to_string())?;
    let mut flat: Vec<f64> = out
        .cells
        .iter()
        .flat_map(|c| [c.n_samples as f64, c.median_op_err, c.median_bound])
        .collect();
    flat.push(out.fitted_slope.unwrap_or(f64::NAN));
    Ok(flat)
}

#[wasm_bindgen]
pub fn svt_spectrum(
    rows: usize,
    cols: usize,
    rank: usize,
    noise: f64,
    tau: f64,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    svt_spectrum_impl(rows, cols, rank, noise, tau, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn weak_rip_curve(
    n: usize,
    m: usize,
    r: usize,
    sigma_w: f64,
    grid: Vec<u32>,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    weak_rip_curve_impl(n, m, r, sigma_w, &grid, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn error_curve(
    n: usize,
    m: usize,
    r: usize,
    sigma_u: f64,
    sigma_w: f64,
    lambda_scale: f64,
    grid: Vec<u32>,
    trials: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    error_curve_impl(n, m, r, sigma_u, sigma_w, lambda_scale, &grid, trials, seed).map_err(|e| JsError::new(&e))
}
