use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::SolverConfig;
use crate::varx_sim::{DistFamily, DistSpec, SingularProfile, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseTransition,
    ErrorScaling,
    BoundsCheck,
    RipProfile,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PhaseTransition => "phase_transition",
            Self::ErrorScaling => "error_scaling",
            Self::BoundsCheck => "bounds_check",
            Self::RipProfile => "rip_profile",
        }
    }
}

fn default_cap() -> f64 {
    0.9
}

fn default_scale() -> f64 {
    1.0
}

fn default_rip_trials() -> usize {
    200
}

/// Everything an experiment run depends on. Together with `master_seed` it
/// determines every output byte unless `record_wall_time` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    pub n: usize,
    pub m: usize,
    pub r: usize,
    #[serde(rename = "T0")]
    pub t0: usize,
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    pub trials_per_cell: usize,
    pub input_family: DistFamily,
    /// Absent for the noiseless regime.
    #[serde(default)]
    pub noise_family: Option<DistFamily>,
    pub sigma_u: f64,
    #[serde(default)]
    pub sigma_w: f64,
    #[serde(default = "default_cap")]
    pub spectral_radius_cap: f64,
    pub master_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output_dir: String,

    /// Largest singular value of a generated `Θ*` before capping.
    #[serde(default = "default_scale")]
    pub theta_scale: f64,
    #[serde(default = "default_singulars")]
    pub singulars: SingularProfile,
    /// Multiplies the rule-of-thumb regularization weight.
    #[serde(default = "default_scale")]
    pub lambda_scale: f64,
    /// Sub-Gaussian parameter of a regressor row; defaults to `σ_z`.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Random directions per order when certifying weak RIP.
    #[serde(default = "default_rip_trials")]
    pub rip_trials: usize,
    /// Measure per-trial wall time (makes outputs non-reproducible).
    #[serde(default)]
    pub record_wall_time: bool,
    /// Regression data bundle (JSON) for the `estimate` command.
    #[serde(default)]
    pub data_bundle: Option<String>,
}

fn default_singulars() -> SingularProfile {
    SingularProfile::Equal
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be positive".into());
        }
        if self.r == 0 || self.r > self.n {
            return bad(format!("rank r = {} must lie in 1..={}", self.r, self.n));
        }
        if self.t0 < 2 {
            return bad(format!("T0 must be at least 2, got {}", self.t0));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return bad("N_grid must be non-empty with positive entries".into());
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("N_grid must be strictly increasing, got {:?}", self.n_grid));
        }
        if self.trials_per_cell == 0 {
            return bad("trials_per_cell must be at least 1".into());
        }
        if !(self.sigma_u > 0.0) || !self.sigma_u.is_finite() {
            return bad(format!("sigma_u must be positive, got {}", self.sigma_u));
        }
        if !(self.sigma_w >= 0.0) || !self.sigma_w.is_finite() {
            return bad(format!("sigma_w must be finite and ≥ 0, got {}", self.sigma_w));
        }
        if self.noise_family.is_some() && self.sigma_w == 0.0 {
            return bad("noise_family is set but sigma_w is 0".into());
        }
        if !(self.lambda_scale > 0.0) {
            return bad("lambda_scale must be positive".into());
        }
        if self.beta.is_some_and(|b| !(b > 0.0)) {
            return bad("beta must be positive".into());
        }
        if self.rip_trials < 100 {
            return bad("rip_trials must be at least 100".into());
        }
        self.solver.validate()?;
        self.system_spec().validate()
    }

    pub fn system_spec(&self) -> SystemSpec {
        SystemSpec {
            n: self.n,
            m: self.m,
            rank: self.r,
            spectral_radius_cap: self.spectral_radius_cap,
            singulars: self.singulars,
            scale: self.theta_scale,
        }
    }

    pub fn input_spec(&self) -> DistSpec {
        DistSpec::new(self.input_family, self.sigma_u, self.m)
    }

    pub fn noise_spec(&self) -> Option<DistSpec> {
        self.noise_family.map(|f| DistSpec::new(f, self.sigma_w, self.n))
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, trials: Option<usize>, out: Option<&str>) -> Result<Self> {
        if let Some(s) = seed {
            self.master_seed = s;
        }
        if let Some(t) = trials {
            self.trials_per_cell = t;
        }
        if let Some(o) = out {
            self.output_dir = o.to_string();
        }
        self.validate()?;
        Ok(self)
    }
}
