//! VARX(1) systems with low-rank coefficient matrices, trajectory simulation
//! under sub-Gaussian excitation, and assembly of regression data from
//! independently repeated trajectories.
//!
//! The system is `x(t+1) = A x(t) + B u(t) + w(t)` with `x(0) = 0`, and the
//! coefficient matrix is `Θ* = [A, B]ᵀ ∈ R^{(n+m)×n}`, so every transition
//! reads `x(t+1)ᵀ = z(t)ᵀ Θ* + w(t)ᵀ` with `z(t) = [x(t); u(t)]`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matspec::{self, RealMatrix};
use crate::rng::{self, derive_seed, random_orthonormal, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistFamily {
    Gaussian,
    /// Uniform on `[-scale, scale]`.
    Uniform,
    /// `±scale` with equal probability.
    Rademacher,
}

/// Zero-mean i.i.d. sub-Gaussian vector distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    pub family: DistFamily,
    pub scale: f64,
    pub dim: usize,
}

impl DistSpec {
    pub fn new(family: DistFamily, scale: f64, dim: usize) -> Self {
        Self { family, scale, dim }
    }

    pub fn gaussian(scale: f64, dim: usize) -> Self {
        Self::new(DistFamily::Gaussian, scale, dim)
    }

    /// Per-coordinate variance.
    pub fn variance(&self) -> f64 {
        match self.family {
            DistFamily::Gaussian | DistFamily::Rademacher => self.scale * self.scale,
            DistFamily::Uniform => self.scale * self.scale / 3.0,
        }
    }

    /// Sub-Gaussian parameter of every one-dimensional marginal. For the
    /// uniform family the half-width is used, which dominates the standard
    /// deviation `a/√3`.
    pub fn subgaussian_param(&self) -> f64 {
        self.scale
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(Error::invalid(format!(
                "distribution scale must be finite and ≥ 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let s = self.scale;
        match self.family {
            DistFamily::Gaussian => DVector::from_fn(self.dim, |_, _| s * rng.sample::<f64, _>(StandardNormal)),
            DistFamily::Uniform => DVector::from_fn(self.dim, |_, _| s * (2.0 * rng.random::<f64>() - 1.0)),
            DistFamily::Rademacher => DVector::from_fn(self.dim, |_, _| if rng.random::<bool>() { s } else { -s }),
        }
    }
}

/// A VARX(1) system `x(t+1) = A x(t) + B u(t) + w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a: RealMatrix,
    pub b: RealMatrix,
    /// Numerical rank of `Θ* = [A, B]ᵀ`.
    pub rank_r: usize,
    pub sigma_w: f64,
}

impl SystemModel {
    pub fn new(a: RealMatrix, b: RealMatrix, sigma_w: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::dims(format!(
                "A must be square and non-empty, got {:?}",
                a.shape()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dims(format!("B must be {n}×m with m ≥ 1, got {:?}", b.shape())));
        }
        if !(sigma_w >= 0.0) {
            return Err(Error::invalid("noise level must be non-negative"));
        }
        matspec::ensure_finite(&a, "A")?;
        matspec::ensure_finite(&b, "B")?;
        let mut model = Self {
            a,
            b,
            rank_r: 0,
            sigma_w,
        };
        model.rank_r = matspec::numerical_rank(&model.theta_star())?;
        Ok(model)
    }

    /// Splits `Θ* = [A, B]ᵀ` back into the system matrices.
    pub fn from_theta(theta: &RealMatrix, sigma_w: f64) -> Result<Self> {
        let n = theta.ncols();
        if theta.nrows() <= n {
            return Err(Error::dims(format!(
                "Θ must be (n+m)×n with m ≥ 1, got {:?}",
                theta.shape()
            )));
        }
        let a = theta.rows(0, n).transpose();
        let b = theta.rows(n, theta.nrows() - n).transpose();
        Self::new(a, b, sigma_w)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn theta_star(&self) -> RealMatrix {
        let (n, m) = (self.n(), self.m());
        let mut theta = RealMatrix::zeros(n + m, n);
        theta.rows_mut(0, n).copy_from(&self.a.transpose());
        theta.rows_mut(n, m).copy_from(&self.b.transpose());
        theta
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    pub fn with_noise_level(mut self, sigma_w: f64) -> Self {
        self.sigma_w = sigma_w;
        self
    }
}

pub fn spectral_radius(a: &RealMatrix) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularProfile {
    /// All `r` nonzero singular values equal to the scale.
    Equal,
    /// `scale · ratio^k` for `k = 0..r`.
    Geometric(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    pub spectral_radius_cap: f64,
    pub singulars: SingularProfile,
    /// Largest singular value of `Θ*` before spectral-radius capping.
    pub scale: f64,
}

impl SystemSpec {
    pub fn new(n: usize, m: usize, rank: usize) -> Self {
        Self {
            n,
            m,
            rank,
            spectral_radius_cap: 0.9,
            singulars: SingularProfile::Equal,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let SystemSpec {
            n,
            m,
            rank,
            spectral_radius_cap,
            singulars,
            scale,
        } = *self;
        if n == 0 || m == 0 {
            return Err(Error::invalid("state and input dimensions must be positive"));
        }
        if rank == 0 || rank > n {
            return Err(Error::invalid(format!(
                "rank {rank} infeasible for an {}×{n} coefficient matrix",
                n + m
            )));
        }
        if !(spectral_radius_cap > 0.0) || !(scale > 0.0) {
            return Err(Error::invalid("spectral radius cap and scale must be positive"));
        }
        if let SingularProfile::Geometric(ratio) = singulars {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::invalid(format!(
                    "geometric ratio must lie in (0, 1], got {ratio}"
                )));
            }
        }
        Ok(())
    }
}

/// Draws `Θ* = G₁ D G₂ᵀ` with Haar-orthonormal factors and the requested
/// singular profile, then scales `Θ*` down if the spectral radius of `A`
/// exceeds the cap. Scaling the whole matrix keeps its rank.
pub fn generate_system(spec: &SystemSpec, seed: u64) -> Result<SystemModel> {
    spec.validate()?;
    let SystemSpec {
        n,
        m,
        rank,
        spectral_radius_cap,
        singulars,
        scale,
    } = *spec;

    let mut rng = seeded(seed);
    let g1 = random_orthonormal(n + m, rank, &mut rng);
    let g2 = random_orthonormal(n, rank, &mut rng);
    let d: Vec<f64> = (0..rank)
        .map(|k| match singulars {
            SingularProfile::Equal => scale,
            SingularProfile::Geometric(ratio) => scale * ratio.powi(k as i32),
        })
        .collect();
    let mut scaled = g1;
    for (j, s) in d.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    let mut theta = scaled * g2.transpose();

    let a = theta.rows(0, n).transpose();
    let rho = spectral_radius(&a);
    if rho > spectral_radius_cap {
        theta *= spectral_radius_cap / rho;
    }
    let model = SystemModel::from_theta(&theta, 0.0)?;
    if model.rank_r != rank {
        return Err(Error::RankMismatch {
            expected: rank,
            found: model.rank_r,
        });
    }
    Ok(model)
}

/// One sample set `{(x(t), u(t))}` over `t = 0..=T0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x(0), …, x(T0)`.
    pub states: Vec<DVector<f64>>,
    /// `u(0), …, u(T0−1)`.
    pub inputs: Vec<DVector<f64>>,
    /// `w(0), …, w(T0−1)`; zeros in the noiseless case.
    pub noises: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Runs the recursion from `x(0) = 0` on the given input and noise streams.
    pub fn replay(model: &SystemModel, inputs: Vec<DVector<f64>>, noises: Vec<DVector<f64>>) -> Result<Self> {
        if inputs.len() != noises.len() || inputs.is_empty() {
            return Err(Error::dims(
                "input and noise streams must have the same positive length",
            ));
        }
        if inputs.iter().any(|u| u.len() != model.m()) || noises.iter().any(|w| w.len() != model.n()) {
            return Err(Error::dims("stream vectors do not match the model dimensions"));
        }
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(DVector::zeros(model.n()));
        for (u, w) in inputs.iter().zip(&noises) {
            let x = states.last().unwrap();
            let next = &model.a * x + &model.b * u + w;
            states.push(next);
        }
        Ok(Self { states, inputs, noises })
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// `z(t) = [x(t); u(t)]`.
    pub fn regressor(&self, t: usize) -> DVector<f64> {
        let x = &self.states[t];
        let u = &self.inputs[t];
        let mut z = DVector::zeros(x.len() + u.len());
        z.rows_mut(0, x.len()).copy_from(x);
        z.rows_mut(x.len(), u.len()).copy_from(u);
        z
    }
}

fn check_specs(model: &SystemModel, input: &DistSpec, noise: Option<&DistSpec>) -> Result<()> {
    input.validate()?;
    if input.dim != model.m() {
        return Err(Error::dims(format!(
            "input distribution has dim {}, model has m = {}",
            input.dim,
            model.m()
        )));
    }
    if let Some(w) = noise {
        w.validate()?;
        if w.dim != model.n() {
            return Err(Error::dims(format!(
                "noise distribution has dim {}, model has n = {}",
                w.dim,
                model.n()
            )));
        }
    }
    Ok(())
}

pub fn simulate_trajectory(
    model: &SystemModel,
    t0: usize,
    input: &DistSpec,
    noise: Option<&DistSpec>,
    seed: u64,
) -> Result<Trajectory> {
    if t0 < 2 {
        return Err(Error::invalid(format!("horizon T0 must be at least 2, got {t0}")));
    }
    check_specs(model, input, noise)?;
    let mut rng = seeded(seed);
    let mut inputs = Vec::with_capacity(t0);
    let mut noises = Vec::with_capacity(t0);
    for _ in 0..t0 {
        inputs.push(input.sample(&mut rng));
        noises.push(match noise {
            Some(w) => w.sample(&mut rng),
            None => DVector::zeros(model.n()),
        });
    }
    Trajectory::replay(model, inputs, noises)
}

/// Regression matrices `X = Z Θ* + W`, optionally with the population
/// covariance of a row of `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    /// `N × n`.
    pub x: RealMatrix,
    /// `N × (n+m)`.
    pub z: RealMatrix,
    /// `N × n`.
    pub w: Option<RealMatrix>,
    /// `(n+m) × (n+m)`.
    pub sigma: Option<RealMatrix>,
}

impl RegressionData {
    pub fn new(x: RealMatrix, z: RealMatrix) -> Result<Self> {
        let data = Self {
            x,
            z,
            w: None,
            sigma: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn samples(&self) -> usize {
        self.z.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn regressor_dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n_rows = self.z.nrows();
        if n_rows == 0 || self.z.ncols() == 0 || self.x.ncols() == 0 {
            return Err(Error::dims("regression matrices must be non-empty"));
        }
        if self.x.nrows() != n_rows {
            return Err(Error::dims(format!("X has {} rows, Z has {n_rows}", self.x.nrows())));
        }
        if let Some(w) = &self.w {
            if w.shape() != self.x.shape() {
                return Err(Error::dims(format!("W is {:?}, X is {:?}", w.shape(), self.x.shape())));
            }
        }
        if let Some(s) = &self.sigma {
            let p = self.z.ncols();
            if s.shape() != (p, p) {
                return Err(Error::dims(format!("Σ is {:?}, expected {p}×{p}", s.shape())));
            }
        }
        matspec::ensure_finite(&self.x, "X")?;
        matspec::ensure_finite(&self.z, "Z")
    }

    /// `X − Z Θ − W` (or `X − Z Θ` without stored noise).
    pub fn model_residual(&self, theta: &RealMatrix) -> RealMatrix {
        let mut r = &self.x - &self.z * theta;
        if let Some(w) = &self.w {
            r -= w;
        }
        r
    }

    /// `ZᵀZ / N`.
    pub fn sample_covariance(&self) -> RealMatrix {
        self.z.tr_mul(&self.z) / self.samples() as f64
    }
}

/// Stacks one trajectory as `X_{T0} = Z_{T0} Θ* + W_{T0}`; rows are
/// temporally dependent.
pub fn stack_trajectory(traj: &Trajectory) -> RegressionData {
    stack_trajectories(std::slice::from_ref(traj))
}

/// Concatenates the stacked forms of several trajectories.
pub fn stack_trajectories(trajs: &[Trajectory]) -> RegressionData {
    let rows: usize = trajs.iter().map(Trajectory::horizon).sum();
    let n = trajs.first().map(|t| t.states[0].len()).unwrap_or(0);
    let m = trajs.first().map(|t| t.inputs[0].len()).unwrap_or(0);
    let mut x = RealMatrix::zeros(rows, n);
    let mut z = RealMatrix::zeros(rows, n + m);
    let mut w = RealMatrix::zeros(rows, n);
    let mut row = 0;
    for traj in trajs {
        for t in 0..traj.horizon() {
            x.row_mut(row).copy_from(&traj.states[t + 1].transpose());
            z.row_mut(row).copy_from(&traj.regressor(t).transpose());
            w.row_mut(row).copy_from(&traj.noises[t].transpose());
            row += 1;
        }
    }
    RegressionData {
        x,
        z,
        w: Some(w),
        sigma: None,
    }
}

/// Seed of trajectory `i` within a repeated-sampling run.
pub fn trajectory_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, i as u64)
}

/// Runs `n_samples` independent trajectories and keeps the last transition of
/// each: row `i` holds `z⁽ⁱ⁾(T0−1)`, `x⁽ⁱ⁾(T0)` and `w⁽ⁱ⁾(T0−1)`.
pub fn collect_repeated(
    model: &SystemModel,
    n_samples: usize,
    t0: usize,
    input: &DistSpec,
    noise: Option<&DistSpec>,
    seed: u64,
) -> Result<RegressionData> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample set"));
    }
    if t0 < 2 {
        return Err(Error::invalid(format!("horizon T0 must be at least 2, got {t0}")));
    }
    check_specs(model, input, noise)?;

    let rows = crate::par_map(n_samples, |i| {
        simulate_trajectory(model, t0, input, noise, trajectory_seed(seed, i)).map(|traj| {
            let last = t0 - 1;
            (traj.regressor(last), traj.states[t0].clone(), traj.noises[last].clone())
        })
    });

    let (n, m) = (model.n(), model.m());
    let mut x = RealMatrix::zeros(n_samples, n);
    let mut z = RealMatrix::zeros(n_samples, n + m);
    let mut w = RealMatrix::zeros(n_samples, n);
    for (i, row) in rows.into_iter().enumerate() {
        let (zi, xi, wi) = row?;
        z.row_mut(i).copy_from(&zi.transpose());
        x.row_mut(i).copy_from(&xi.transpose());
        w.row_mut(i).copy_from(&wi.transpose());
    }
    let sigma = population_covariance(model, t0, input, noise)?;
    Ok(RegressionData {
        x,
        z,
        w: Some(w),
        sigma: Some(sigma),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompanionConvention {
    /// Identity blocks on the sub-diagonal so past states propagate.
    ShiftRegister,
    /// Only the top block row is nonzero, as in the literal regression display.
    ZeroPadded,
}

/// Lifts `x(t+1) = Σₖ Aₖ x(t−k) + B u(t) + w(t)` to a VARX(1) system on the
/// stacked state `[x(t); x(t−1); …; x(t−d+1)]`.
pub fn companion_form(
    a_list: &[RealMatrix],
    b: &RealMatrix,
    sigma_w: f64,
    convention: CompanionConvention,
) -> Result<SystemModel> {
    let d = a_list.len();
    if d == 0 {
        return Err(Error::invalid("need at least one lag matrix"));
    }
    let n = b.nrows();
    if a_list.iter().any(|a| a.shape() != (n, n)) {
        return Err(Error::dims(format!("every lag matrix must be {n}×{n}")));
    }
    let m = b.ncols();
    let mut big_a = RealMatrix::zeros(d * n, d * n);
    for (k, a) in a_list.iter().enumerate() {
        big_a.view_mut((0, k * n), (n, n)).copy_from(a);
    }
    if convention == CompanionConvention::ShiftRegister {
        for k in 1..d {
            big_a.view_mut((k * n, (k - 1) * n), (n, n)).fill_with_identity();
        }
    }
    let mut big_b = RealMatrix::zeros(d * n, m);
    big_b.rows_mut(0, n).copy_from(b);
    SystemModel::new(big_a, big_b, sigma_w)
}

/// Matrix powers `A⁰, A¹, …, A^{count−1}`.
fn powers(a: &RealMatrix, count: usize) -> Vec<RealMatrix> {
    let mut out = Vec::with_capacity(count);
    let mut p = RealMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..count {
        let next = a * &p;
        out.push(p);
        p = next;
    }
    out
}

/// Sub-Gaussian parameter of a regressor `z(T0−1)`:
/// `σ_z² = Σ_{j=0}^{T0−2} (‖AʲB‖²_op σ_u² + ‖Aʲ‖²_op σ_w²) + σ_u²`.
pub fn subgaussian_param(model: &SystemModel, t0: usize, sigma_u: f64, sigma_w: f64) -> Result<f64> {
    if t0 < 2 {
        return Err(Error::invalid(format!("horizon T0 must be at least 2, got {t0}")));
    }
    let mut total = sigma_u * sigma_u;
    for p in powers(&model.a, t0 - 1) {
        let ab = matspec::operator_norm(&(&p * &model.b))?;
        let a = if sigma_w > 0.0 {
            matspec::operator_norm(&p)?
        } else {
            0.0
        };
        total += ab * ab * sigma_u * sigma_u + a * a * sigma_w * sigma_w;
    }
    Ok(total.sqrt())
}

/// Exact covariance of `z(T0−1) = [x(T0−1); u(T0−1)]`:
/// `Σ_x = Σ_{k=0}^{T0−2} Aᵏ (σ_u² BBᵀ + σ_w² I) (Aᵏ)ᵀ`, `Σ_u = σ_u² I`, and
/// zero cross blocks.
pub fn population_covariance(
    model: &SystemModel,
    t0: usize,
    input: &DistSpec,
    noise: Option<&DistSpec>,
) -> Result<RealMatrix> {
    if t0 < 2 {
        return Err(Error::invalid(format!("horizon T0 must be at least 2, got {t0}")));
    }
    check_specs(model, input, noise)?;
    let (n, m) = (model.n(), model.m());
    let var_u = input.variance();
    let var_w = noise.map_or(0.0, DistSpec::variance);
    let drive = &model.b * model.b.transpose() * var_u + RealMatrix::identity(n, n) * var_w;
    let mut sigma_x = RealMatrix::zeros(n, n);
    for p in powers(&model.a, t0 - 1) {
        sigma_x += &p * &drive * p.transpose();
    }
    let mut sigma = RealMatrix::zeros(n + m, n + m);
    sigma
        .view_mut((0, 0), (n, n))
        .copy_from(&((&sigma_x + sigma_x.transpose()) * 0.5));
    sigma.view_mut((n, n), (m, m)).fill_with_identity();
    sigma.view_mut((n, n), (m, m)).scale_mut(var_u);
    Ok(sigma)
}

/// Standard Gaussian `rows × cols` design, for experiments that need a
/// design with identity population covariance.
pub fn gaussian_design(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    rng::gaussian_matrix(rows, cols, &mut seeded(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_model(n: usize, m: usize, a: f64, b: f64) -> SystemModel {
        let mut bm = RealMatrix::zeros(n, m);
        for i in 0..n.min(m) {
            bm[(i, i)] = b;
        }
        SystemModel::new(RealMatrix::identity(n, n) * a, bm, 0.0).unwrap()
    }

    #[test]
    fn generated_system_has_requested_rank_and_cap() {
        let model = generate_system(&SystemSpec::new(3, 2, 1), 7).unwrap();
        assert_eq!(model.rank_r, 1);
        assert_eq!(matspec::numerical_rank(&model.theta_star()).unwrap(), 1);

        let mut spec = SystemSpec::new(6, 4, 3);
        spec.scale = 5.0;
        spec.singulars = SingularProfile::Geometric(0.5);
        let model = generate_system(&spec, 1).unwrap();
        assert!(model.spectral_radius() <= 0.9 + 1e-9);
        assert_eq!(model.rank_r, 3);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SystemSpec::new(5, 3, 2);
        assert_eq!(generate_system(&spec, 99).unwrap(), generate_system(&spec, 99).unwrap());
        assert_ne!(
            generate_system(&spec, 99).unwrap(),
            generate_system(&spec, 100).unwrap()
        );
    }

    #[test]
    fn infeasible_rank_is_rejected() {
        assert!(generate_system(&SystemSpec::new(3, 2, 4), 0).is_err());
        assert!(generate_system(&SystemSpec::new(3, 2, 0), 0).is_err());
    }

    #[test]
    fn memoryless_system_copies_inputs() {
        let model = diag_model(3, 3, 0.0, 1.0);
        let traj = simulate_trajectory(&model, 5, &DistSpec::gaussian(1.0, 3), None, 4).unwrap();
        assert_eq!(traj.states[0], DVector::zeros(3));
        for t in 0..5 {
            assert_eq!(traj.states[t + 1], traj.inputs[t]);
        }
    }

    #[test]
    fn zero_excitation_stays_at_rest() {
        let model = generate_system(&SystemSpec::new(4, 2, 2), 3).unwrap();
        let traj = simulate_trajectory(&model, 6, &DistSpec::gaussian(0.0, 2), None, 1).unwrap();
        assert!(traj.states.iter().all(|x| x.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn integrator_with_constant_input() {
        let model = diag_model(2, 2, 1.0, 1.0);
        let c = DVector::from_vec(vec![0.5, -2.0]);
        let traj = Trajectory::replay(&model, vec![c.clone(); 6], vec![DVector::zeros(2); 6]).unwrap();
        for (t, x) in traj.states.iter().enumerate() {
            assert!((x - &c * t as f64).norm() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = diag_model(3, 2, 0.5, 1.0);
        assert!(simulate_trajectory(&model, 3, &DistSpec::gaussian(1.0, 3), None, 0).is_err());
        let noise = DistSpec::gaussian(1.0, 2);
        assert!(simulate_trajectory(&model, 3, &DistSpec::gaussian(1.0, 2), Some(&noise), 0).is_err());
        assert!(simulate_trajectory(&model, 1, &DistSpec::gaussian(1.0, 2), None, 0).is_err());
    }

    #[test]
    fn repeated_sampling_shapes_and_identity() {
        let model = generate_system(&SystemSpec::new(4, 3, 2), 5).unwrap();
        let input = DistSpec::gaussian(1.0, 3);
        let noise = DistSpec::new(DistFamily::Uniform, 0.3, 4);
        let data = collect_repeated(&model, 25, 4, &input, Some(&noise), 8).unwrap();
        assert_eq!(data.x.shape(), (25, 4));
        assert_eq!(data.z.shape(), (25, 7));
        let theta = model.theta_star();
        assert!(data.model_residual(&theta).abs().max() < 1e-12);

        let clean = collect_repeated(&model, 25, 4, &input, None, 8).unwrap();
        assert!(clean.w.as_ref().unwrap().iter().all(|&v| v == 0.0));
        assert!((&clean.x - &clean.z * &theta).abs().max() < 1e-12);
        assert_eq!(clean, collect_repeated(&model, 25, 4, &input, None, 8).unwrap());
    }

    #[test]
    fn repeated_rows_match_individual_trajectories() {
        let model = generate_system(&SystemSpec::new(3, 2, 1), 2).unwrap();
        let input = DistSpec::new(DistFamily::Rademacher, 1.0, 2);
        let data = collect_repeated(&model, 5, 3, &input, None, 77).unwrap();
        for i in 0..5 {
            let traj = simulate_trajectory(&model, 3, &input, None, trajectory_seed(77, i)).unwrap();
            assert_eq!(data.z.row(i).transpose(), traj.regressor(2));
            assert_eq!(data.x.row(i).transpose(), traj.states[3]);
        }
    }

    #[test]
    fn stacking_preserves_the_model_identity() {
        let model = generate_system(&SystemSpec::new(3, 2, 2), 2).unwrap();
        let noise = DistSpec::gaussian(0.1, 3);
        let traj = simulate_trajectory(&model, 6, &DistSpec::gaussian(1.0, 2), Some(&noise), 3).unwrap();
        let stacked = stack_trajectory(&traj);
        assert_eq!(stacked.z.shape(), (6, 5));
        assert!(stacked.model_residual(&model.theta_star()).abs().max() < 1e-13);

        let short = Trajectory::replay(&model, vec![DVector::zeros(2)], vec![DVector::zeros(3)]).unwrap();
        assert_eq!(stack_trajectory(&short).x.nrows(), 1);

        let memoryless = diag_model(2, 2, 0.0, 1.0);
        let traj = simulate_trajectory(&memoryless, 4, &DistSpec::gaussian(1.0, 2), None, 5).unwrap();
        let stacked = stack_trajectory(&traj);
        for t in 0..4 {
            assert_eq!(stacked.x.row(t).transpose(), traj.inputs[t]);
        }
    }

    #[test]
    fn companion_shapes() {
        let b = RealMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let a0 = RealMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let single = companion_form(std::slice::from_ref(&a0), &b, 0.0, CompanionConvention::ShiftRegister).unwrap();
        assert_eq!(single.a, a0);
        assert_eq!(single.b, b);

        let a1 = RealMatrix::identity(2, 2) * 0.2;
        let lifted = companion_form(&[a0, a1], &b, 0.0, CompanionConvention::ShiftRegister).unwrap();
        assert_eq!(lifted.a.shape(), (4, 4));
        assert!(lifted.b.rows(2, 2).iter().all(|&v| v == 0.0));
        assert_eq!(lifted.a.view((2, 0), (2, 2)), RealMatrix::identity(2, 2));

        assert!(companion_form(&[], &b, 0.0, CompanionConvention::ZeroPadded).is_err());
        let bad = RealMatrix::identity(3, 3);
        assert!(companion_form(&[bad], &b, 0.0, CompanionConvention::ZeroPadded).is_err());
    }

    #[test]
    fn companion_simulation_matches_direct_recursion() {
        let mut r = seeded(12);
        let (n, m, d) = (3, 2, 3);
        let lags: Vec<RealMatrix> = (0..d).map(|_| rng::gaussian_matrix(n, n, &mut r) * 0.3).collect();
        let b = rng::gaussian_matrix(n, m, &mut r);
        let lifted = companion_form(&lags, &b, 0.0, CompanionConvention::ShiftRegister).unwrap();

        let steps = 10;
        let inputs: Vec<DVector<f64>> = (0..steps).map(|_| DistSpec::gaussian(1.0, m).sample(&mut r)).collect();
        let traj = Trajectory::replay(&lifted, inputs.clone(), vec![DVector::zeros(n * d); steps]).unwrap();

        // direct VARX(d) recursion with zero pre-history
        let mut hist: Vec<DVector<f64>> = vec![DVector::zeros(n)];
        for t in 0..steps {
            let mut next = &b * &inputs[t];
            for (k, a) in lags.iter().enumerate() {
                if t >= k {
                    next += a * &hist[t - k];
                }
            }
            hist.push(next);
        }
        for (t, expected) in hist.iter().enumerate().take(steps + 1) {
            let lifted_x = traj.states[t].rows(0, n).into_owned();
            assert!((lifted_x - expected).norm() < 1e-12 * (1.0 + expected.norm()));
        }
    }

    #[test]
    fn subgaussian_parameter_examples() {
        let zero = SystemModel::new(RealMatrix::zeros(2, 2), RealMatrix::zeros(2, 2), 0.0).unwrap();
        assert!((subgaussian_param(&zero, 3, 1.7, 0.0).unwrap() - 1.7).abs() < 1e-14);

        let memoryless = diag_model(2, 2, 0.0, 1.0);
        assert!((subgaussian_param(&memoryless, 2, 1.0, 1.0).unwrap() - 3f64.sqrt()).abs() < 1e-14);

        // noiseless value: Σ_j ‖AʲB‖² σ_u² + σ_u²
        let model = diag_model(2, 2, 0.5, 2.0);
        let expected = (1.0f64 + 4.0 * (1.0 + 0.25 + 0.0625)).sqrt();
        assert!((subgaussian_param(&model, 4, 1.0, 0.0).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn population_covariance_closed_forms() {
        let zero = SystemModel::new(RealMatrix::zeros(2, 2), RealMatrix::zeros(2, 3), 0.0).unwrap();
        let input = DistSpec::gaussian(1.0, 3);
        let s = population_covariance(&zero, 2, &input, None).unwrap();
        let mut expected = RealMatrix::zeros(5, 5);
        expected.view_mut((2, 2), (3, 3)).fill_with_identity();
        assert_eq!(s, expected);

        let noise = DistSpec::gaussian(0.5, 2);
        let s = population_covariance(&zero, 2, &DistSpec::gaussian(2.0, 3), Some(&noise)).unwrap();
        let mut expected = RealMatrix::zeros(5, 5);
        expected
            .view_mut((0, 0), (2, 2))
            .copy_from(&(RealMatrix::identity(2, 2) * 0.25));
        expected
            .view_mut((2, 2), (3, 3))
            .copy_from(&(RealMatrix::identity(3, 3) * 4.0));
        assert!((s - expected).abs().max() < 1e-15);

        let model = generate_system(&SystemSpec::new(3, 2, 2), 4).unwrap();
        let uni = DistSpec::new(DistFamily::Uniform, 3.0, 2);
        let s = population_covariance(&model, 5, &uni, None).unwrap();
        assert!(s.view((0, 3), (3, 2)).iter().all(|&v| v == 0.0));
        assert!(s.view((3, 0), (2, 3)).iter().all(|&v| v == 0.0));
        assert!((s[(3, 3)] - 3.0).abs() < 1e-15);
    }
}
