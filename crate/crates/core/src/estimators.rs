//! Estimators for `Θ*` from regression data `X = ZΘ* + W`.
//!
//! - [`least_squares`]: minimizes `(1/N)‖X − ZΘ‖²_F`.
//! - [`nuclear_reg_solve`]: minimizes `(1/2N)‖X − ZΘ‖²_F + λ‖Θ‖nuc` by
//!   proximal gradient with step `1/L`, `L = ‖ZᵀZ/N‖_op`, optionally with
//!   momentum and adaptive restart.
//! - [`nuclear_min_exact`]: minimizes `‖Θ‖nuc` subject to `ZΘ = X` by ADMM,
//!   alternating the projection onto the affine set with singular value
//!   thresholding.
//!
//! Both iterative solvers start from `Θ = 0`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matspec::{self, RealMatrix};
use crate::varx_sim::{stack_trajectories, RegressionData, Trajectory};

/// `32√6 + 1`, the constant in front of `β²` in the noise-scale parameter.
pub fn alpha_constant() -> f64 {
    32.0 * 6f64.sqrt() + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative iterate change that triggers a convergence check.
    pub rel_tol: f64,
    pub kkt_tol: f64,
    pub admm_rho: f64,
    pub acceleration: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            rel_tol: 1e-10,
            kkt_tol: 1e-7,
            admm_rho: 1.0,
            acceleration: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("kkt_tol", self.kkt_tol),
            ("admm_rho", self.admm_rho),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// `(n+m) × n`.
    pub theta_hat: RealMatrix,
    pub lambda_used: f64,
    pub iters: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub objective: f64,
    /// Least squares only: the minimizer is not unique and the
    /// minimum-Frobenius-norm one was returned.
    pub rank_deficient: bool,
}

/// Which rows enter the least-squares fit.
#[derive(Debug, Clone, Copy)]
pub enum LsDesign<'a> {
    /// One `(z(T0−1), x(T0))` row per independent trajectory.
    PooledFinalState(&'a RegressionData),
    /// Every transition of every trajectory, rows temporally dependent.
    StackedTrajectory(&'a [Trajectory]),
}

pub fn least_squares(design: LsDesign<'_>) -> Result<Estimate> {
    let stacked;
    let data = match design {
        LsDesign::PooledFinalState(d) => d,
        LsDesign::StackedTrajectory(trajs) => {
            if trajs.is_empty() {
                return Err(Error::invalid("no trajectories to fit"));
            }
            stacked = stack_trajectories(trajs);
            &stacked
        }
    };
    data.validate()?;
    let p = data.regressor_dim();
    let f = matspec::svd(&data.z)?;
    let rank = f.numerical_rank();
    // pseudoinverse solution V_k S_k⁻¹ U_kᵀ X
    let mut coef = f.left.columns(0, rank).tr_mul(&data.x);
    for i in 0..rank {
        coef.row_mut(i).scale_mut(1.0 / f.singulars[i]);
    }
    let theta_hat = f.right.columns(0, rank) * coef;

    let n_s = data.samples() as f64;
    let resid = &data.x - &data.z * &theta_hat;
    let normal = data.z.tr_mul(&resid);
    let scale = data.z.tr_mul(&data.x).norm().max(f64::MIN_POSITIVE);
    Ok(Estimate {
        objective: resid.norm_squared() / n_s,
        kkt_residual: normal.norm() / scale,
        theta_hat,
        lambda_used: 0.0,
        iters: 0,
        converged: true,
        rank_deficient: rank < p,
    })
}

/// `λ = 4α√((n+m)/N)`.
pub fn lambda_rule(n: usize, m: usize, samples: usize, alpha: f64) -> Result<f64> {
    if n == 0 || m == 0 || samples == 0 || !(alpha > 0.0) {
        return Err(Error::invalid("lambda rule needs positive n, m, N and alpha"));
    }
    Ok(4.0 * alpha * ((n + m) as f64 / samples as f64).sqrt())
}

/// `α = √(2σ_w²((32√6+1)β² + γ_max))`.
pub fn alpha_param(sigma_w: f64, beta: f64, gamma_max: f64) -> Result<f64> {
    if !(sigma_w > 0.0) || !(beta >= 0.0) || !(gamma_max >= 0.0) {
        return Err(Error::invalid("alpha needs sigma_w > 0, beta ≥ 0, gamma_max ≥ 0"));
    }
    Ok((2.0 * sigma_w * sigma_w * (alpha_constant() * beta * beta + gamma_max)).sqrt())
}

/// `∇L(Θ) = (ZᵀZΘ − ZᵀX)/N` for `L(Θ) = (1/2N)‖X − ZΘ‖²_F`.
pub fn loss_gradient(theta: &RealMatrix, data: &RegressionData) -> RealMatrix {
    let resid = &data.z * theta - &data.x;
    data.z.tr_mul(&resid) / data.samples() as f64
}

pub fn loss(theta: &RealMatrix, data: &RegressionData) -> f64 {
    (&data.x - &data.z * theta).norm_squared() / (2.0 * data.samples() as f64)
}

/// Regularized objective `L(Θ) + λ‖Θ‖nuc`.
pub fn regularized_objective(theta: &RealMatrix, data: &RegressionData, lambda: f64) -> Result<f64> {
    Ok(loss(theta, data) + lambda * matspec::nuclear_norm(theta)?)
}

/// Normalized optimality residual of `Θ̂` for the regularized program.
///
/// Builds the subgradient `G = U₊V₊ᵀ + clip(P_U⊥(−∇L/λ)P_V⊥)` where `U₊, V₊`
/// span the positive singular part of `Θ̂` and `clip` caps singular values
/// at 1, then returns `‖∇L(Θ̂) + λG‖_F / (λ√(n(n+m)))`.
pub fn kkt_check(theta_hat: &RealMatrix, data: &RegressionData, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("kkt check needs lambda > 0"));
    }
    let (p, n) = theta_hat.shape();
    if data.regressor_dim() != p || data.state_dim() != n {
        return Err(Error::dims(format!(
            "Θ̂ is {p}×{n}, data implies {}×{}",
            data.regressor_dim(),
            data.state_dim()
        )));
    }
    let grad = loss_gradient(theta_hat, data);
    let f = matspec::svd(theta_hat)?;
    let top = f.singulars.get(0).copied().unwrap_or(0.0);
    let k = f.singulars.iter().filter(|&&s| s > 1e-9 * top && s > 0.0).count();
    let u = f.left.columns(0, k);
    let v = f.right.columns(0, k);

    let mut g = u * v.transpose();
    let mut null_part = -&grad / lambda;
    null_part -= u * u.tr_mul(&null_part);
    null_part -= (&null_part * v) * v.transpose();
    g += matspec::svd(&null_part)?.map_singulars(|s| s.min(1.0));

    let r = grad + g * lambda;
    Ok(r.norm() / (lambda * ((n * p) as f64).sqrt()))
}

/// Singular value thresholding that also returns the nuclear norm of the result.
fn shrink(m: &RealMatrix, tau: f64) -> Result<(RealMatrix, f64)> {
    let f = matspec::svd(m)?;
    let nuc = f.singulars.iter().map(|s| (s - tau).max(0.0)).sum();
    Ok((f.map_singulars(|s| (s - tau).max(0.0)), nuc))
}

/// Quadratic part of the regularized objective from cached moments.
struct Moments {
    sigma_hat: RealMatrix,
    cross: RealMatrix,
    x_energy: f64,
}

impl Moments {
    fn new(data: &RegressionData) -> Self {
        let n_s = data.samples() as f64;
        Self {
            sigma_hat: data.z.tr_mul(&data.z) / n_s,
            cross: data.z.tr_mul(&data.x) / n_s,
            x_energy: data.x.norm_squared() / (2.0 * n_s),
        }
    }

    fn gradient(&self, theta: &RealMatrix) -> RealMatrix {
        &self.sigma_hat * theta - &self.cross
    }

    fn loss(&self, theta: &RealMatrix) -> f64 {
        let quad = theta.dot(&(&self.sigma_hat * theta));
        (0.5 * quad - theta.dot(&self.cross) + self.x_energy).max(0.0)
    }
}

pub fn nuclear_reg_solve(data: &RegressionData, lambda: f64, cfg: &SolverConfig) -> Result<Estimate> {
    nuclear_reg_solve_traced(data, lambda, cfg).map(|(est, _)| est)
}

/// Same as [`nuclear_reg_solve`], also returning the objective after every
/// iteration (index 0 is the objective at `Θ = 0`).
pub fn nuclear_reg_solve_traced(
    data: &RegressionData,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(Estimate, Vec<f64>)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    cfg.validate()?;
    data.validate()?;
    let (p, n) = (data.regressor_dim(), data.state_dim());
    let mom = Moments::new(data);
    let lipschitz = SymmetricEigen::new(mom.sigma_hat.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max);

    let mut theta = RealMatrix::zeros(p, n);
    let mut objective = mom.loss(&theta);
    let mut history = vec![objective];
    if lipschitz <= 0.0 {
        // Z = 0: the loss is constant and zero minimizes the penalty
        let kkt = kkt_check(&theta, data, lambda)?;
        let est = Estimate {
            theta_hat: theta,
            lambda_used: lambda,
            iters: 0,
            converged: kkt <= cfg.kkt_tol,
            kkt_residual: kkt,
            objective,
            rank_deficient: false,
        };
        return Ok((est, history));
    }
    let step = 1.0 / lipschitz;

    let mut y = theta.clone();
    let mut momentum = 1.0f64;
    let mut best = (objective, theta.clone());
    let mut kkt = f64::INFINITY;
    let mut iters = 0;
    let mut converged = false;

    for k in 1..=cfg.max_iters {
        iters = k;
        let point = &y - mom.gradient(&y) * step;
        let (next, nuc) = shrink(&point, lambda * step)?;
        let next_obj = mom.loss(&next) + lambda * nuc;

        if cfg.acceleration {
            if next_obj > objective && momentum > 1.0 {
                // adaptive restart: drop momentum and take a plain step from Θ
                momentum = 1.0;
                y = theta.clone();
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &next + (&next - &theta) * ((momentum - 1.0) / t_next);
            momentum = t_next;
        } else {
            y = next.clone();
        }

        let change = (&next - &theta).norm() / next.norm().max(f64::MIN_POSITIVE);
        theta = next;
        objective = next_obj;
        history.push(objective);
        if objective < best.0 {
            best = (objective, theta.clone());
        }
        if change < cfg.rel_tol || theta.norm() == 0.0 && change == 0.0 {
            kkt = kkt_check(&theta, data, lambda)?;
            if kkt <= cfg.kkt_tol {
                converged = true;
                break;
            }
        }
    }

    let theta_hat = if converged { theta } else { best.1 };
    if !converged {
        kkt = kkt_check(&theta_hat, data, lambda)?;
    }
    let objective = mom.loss(&theta_hat) + lambda * matspec::nuclear_norm(&theta_hat)?;
    let est = Estimate {
        theta_hat,
        lambda_used: lambda,
        iters,
        converged,
        kkt_residual: kkt,
        objective,
        rank_deficient: false,
    };
    Ok((est, history))
}

/// Relative residual above which `ZΘ = X` is declared inconsistent.
pub const INFEASIBILITY_TOL: f64 = 1e-8;

/// Minimum nuclear norm solution of `ZΘ = X`.
pub fn nuclear_min_exact(data: &RegressionData, cfg: &SolverConfig) -> Result<Estimate> {
    cfg.validate()?;
    data.validate()?;
    let (p, n) = (data.regressor_dim(), data.state_dim());
    let x_norm = data.x.norm();

    let f = matspec::svd(&data.z)?;
    let rank = f.numerical_rank();
    let u_k = f.left.columns(0, rank);
    let v_k = f.right.columns(0, rank).into_owned();
    let x_in_range = u_k * u_k.tr_mul(&data.x);
    let floor = (&data.x - &x_in_range).norm() / x_norm.max(f64::MIN_POSITIVE);
    if floor > INFEASIBILITY_TOL {
        return Err(Error::Infeasible(floor));
    }
    // minimum-norm feasible point Z⁺X
    let mut coef = u_k.tr_mul(&data.x);
    for i in 0..rank {
        coef.row_mut(i).scale_mut(1.0 / f.singulars[i]);
    }
    let theta_ls = &v_k * coef;
    let constraint_residual = |theta: &RealMatrix| (&data.z * theta - &data.x).norm() / x_norm.max(f64::MIN_POSITIVE);
    let finish = |theta: RealMatrix, iters: usize, converged: bool| -> Result<Estimate> {
        Ok(Estimate {
            kkt_residual: constraint_residual(&theta),
            objective: matspec::nuclear_norm(&theta)?,
            theta_hat: theta,
            lambda_used: 0.0,
            iters,
            converged,
            rank_deficient: false,
        })
    };

    if x_norm == 0.0 {
        return finish(RealMatrix::zeros(p, n), 0, true);
    }
    if rank == p {
        // the affine set is a single point
        return finish(theta_ls, 0, true);
    }

    // Π(Θ) = (I − V_k V_kᵀ)Θ + Z⁺X
    let project = |theta: &RealMatrix| -> RealMatrix { theta - &v_k * v_k.tr_mul(theta) + &theta_ls };
    let relax = if cfg.acceleration { 1.6 } else { 1.0 };
    let mut rho = cfg.admm_rho;
    let mut y = RealMatrix::zeros(p, n);
    let mut dual = RealMatrix::zeros(p, n);
    let mut best: Option<(f64, RealMatrix)> = None;

    for k in 1..=cfg.max_iters {
        let t = project(&(&y - &dual));
        let t_relaxed = &t * relax + &y * (1.0 - relax);
        let y_next = matspec::svt(&(&t_relaxed + &dual), 1.0 / rho)?;
        dual += &t_relaxed - &y_next;

        let r_primal = (&t - &y_next).norm();
        let r_dual = rho * (&y_next - &y).norm();
        y = y_next;

        let eps_primal = cfg.rel_tol * t.norm().max(y.norm()).max(1e-300);
        let eps_dual = cfg.rel_tol * (rho * dual.norm()).max(1e-300);
        if r_primal <= eps_primal && r_dual <= eps_dual {
            let resid = constraint_residual(&y);
            if resid <= cfg.kkt_tol {
                return finish(y, k, true);
            }
        }
        if k % 200 == 0 {
            let resid = constraint_residual(&y);
            if best.as_ref().is_none_or(|(r, _)| resid < *r) {
                best = Some((resid, y.clone()));
            }
        }
        if k % 10 == 0 {
            // residual balancing on the scaled dual
            if r_primal > 10.0 * r_dual {
                rho *= 2.0;
                dual /= 2.0;
            } else if r_dual > 10.0 * r_primal {
                rho /= 2.0;
                dual *= 2.0;
            }
        }
    }
    let theta = match best {
        Some((r, b)) if r < constraint_residual(&y) => b,
        _ => y,
    };
    finish(theta, cfg.max_iters, false)
}
