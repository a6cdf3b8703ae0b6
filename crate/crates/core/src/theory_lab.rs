//! Empirical certificates for the recovery conditions and closed-form error
//! bound predictions.
//!
//! Weak RIP of order `r` with constants `K1 ≤ K2` asks that
//! `K1(1−δ)‖Δ‖_F ≤ ‖ZΔ‖_F/√N ≤ K2(1+δ)‖Δ‖_F` for every `Δ` of rank at most
//! `r`. [`empirical_weak_rip`] samples random rank-`r` directions, so its `δ̂`
//! is a lower bound on the true constant. [`spectral_weak_rip`] computes the
//! exact constant from the extreme eigenvalues of `ZᵀZ/N`, which are attained
//! by rank-one directions and therefore bound every order.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::alpha_constant;
use crate::matspec::{self, RealMatrix, Subspace, SubspaceFrame};
use crate::rng::{derive_seed, gaussian_matrix, seeded};

/// `5 − 2√6`, the exact-recovery threshold on `δ_{(2+3s)r}`.
pub fn exact_recovery_threshold() -> f64 {
    5.0 - 2.0 * 6f64.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakRipEstimate {
    pub order: usize,
    pub k1: f64,
    pub k2: f64,
    /// `None` when no `δ < 1` satisfies both sides.
    pub delta_hat: Option<f64>,
    pub samples: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl WeakRipEstimate {
    fn from_ratios(order: usize, k1: f64, k2: f64, samples: usize, ratio_min: f64, ratio_max: f64) -> Self {
        Self {
            order,
            k1,
            k2,
            delta_hat: tightest_delta(k1, k2, ratio_min, ratio_max),
            samples,
            ratio_min,
            ratio_max,
        }
    }

    pub fn failed(&self) -> bool {
        self.delta_hat.is_none()
    }
}

/// Smallest `δ ≥ 0` with `K1(1−δ) ≤ ratio_min` and `ratio_max ≤ K2(1+δ)`.
pub fn tightest_delta(k1: f64, k2: f64, ratio_min: f64, ratio_max: f64) -> Option<f64> {
    if !(k1 > 0.0) || !(k2 > 0.0) {
        return None;
    }
    let delta = (1.0 - ratio_min / k1).max(ratio_max / k2 - 1.0).max(0.0);
    (delta < 1.0).then_some(delta)
}

fn check_rip_args(z: &RealMatrix, order: usize, k1: f64, k2: f64, trials: usize) -> Result<()> {
    if trials < 100 {
        return Err(Error::invalid(format!(
            "weak RIP certification needs at least 100 trials, got {trials}"
        )));
    }
    if order == 0 {
        return Err(Error::invalid("rank order must be positive"));
    }
    // K1 = 0 is allowed and always yields a failure flag
    if !(k1 >= 0.0) || !(k2 >= k1) || !(k2 > 0.0) {
        return Err(Error::invalid(format!(
            "need K2 ≥ K1 ≥ 0 and K2 > 0, got K1 = {k1}, K2 = {k2}"
        )));
    }
    matspec::ensure_finite(z, "Z")
}

/// `‖ZΔ‖_F/√N` for `Δ = G₁G₂ᵀ`, evaluated through `r × r` Gram matrices.
fn rank_r_ratios(sigma_hat: &RealMatrix, state_dim: usize, order: usize, trials: usize, seed: u64) -> (f64, f64) {
    let p = sigma_hat.nrows();
    let ratios = crate::par_map(trials, |i| {
        let mut rng = seeded(derive_seed(seed, i as u64));
        let g1 = gaussian_matrix(p, order, &mut rng);
        let g2 = gaussian_matrix(state_dim, order, &mut rng);
        let right = g2.tr_mul(&g2);
        let energy = (g1.tr_mul(&(sigma_hat * &g1)) * &right).trace();
        let norm2 = (g1.tr_mul(&g1) * &right).trace();
        (energy.max(0.0) / norm2).sqrt()
    });
    ratios
        .into_iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

/// Monte Carlo weak-RIP estimate over `trials` random unit-Frobenius rank-`r`
/// matrices of shape `(n+m) × state_dim`.
pub fn empirical_weak_rip(
    z: &RealMatrix,
    state_dim: usize,
    order: usize,
    k1: f64,
    k2: f64,
    trials: usize,
    seed: u64,
) -> Result<WeakRipEstimate> {
    check_rip_args(z, order, k1, k2, trials)?;
    if order > z.ncols().min(state_dim) {
        return Err(Error::invalid(format!("order {order} exceeds the matrix dimensions")));
    }
    let sigma_hat = z.tr_mul(z) / z.nrows() as f64;
    let (lo, hi) = rank_r_ratios(&sigma_hat, state_dim, order, trials, seed);
    Ok(WeakRipEstimate::from_ratios(order, k1, k2, trials, lo, hi))
}

/// Weak-RIP estimates for several orders on nested sample pools: the pool of
/// each order contains the pools of all smaller orders, so `δ̂` is
/// non-decreasing in the order by construction.
pub fn weak_rip_profile(
    z: &RealMatrix,
    state_dim: usize,
    orders: &[usize],
    k1: f64,
    k2: f64,
    trials_per_order: usize,
    seed: u64,
) -> Result<Vec<WeakRipEstimate>> {
    let mut sorted = orders.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut samples = 0;
    let mut out = Vec::with_capacity(sorted.len());
    for order in sorted {
        // orders beyond the matrix dimensions add nothing new
        let eff = order.min(z.ncols()).min(state_dim);
        let est = empirical_weak_rip(
            z,
            state_dim,
            eff,
            k1,
            k2,
            trials_per_order,
            derive_seed(seed, order as u64),
        )?;
        lo = lo.min(est.ratio_min);
        hi = hi.max(est.ratio_max);
        samples += est.samples;
        out.push(WeakRipEstimate::from_ratios(order, k1, k2, samples, lo, hi));
    }
    Ok(out)
}

/// Exact weak-RIP constant (any order ≥ 1) from the spectrum of `ZᵀZ/N`.
pub fn spectral_weak_rip(z: &RealMatrix, order: usize, k1: f64, k2: f64) -> Result<WeakRipEstimate> {
    matspec::ensure_finite(z, "Z")?;
    let eig = SymmetricEigen::new(z.tr_mul(z) / z.nrows() as f64).eigenvalues;
    let lo = eig.min().max(0.0).sqrt();
    let hi = eig.max().max(0.0).sqrt();
    Ok(WeakRipEstimate::from_ratios(order, k1, k2, 0, lo, hi))
}

/// `s = 1` if `K1 = K2`, else `⌊(K2/K1)²⌋ + 1`.
pub fn s_value(k1: f64, k2: f64) -> Result<usize> {
    if !(k1 > 0.0) || !(k2 >= k1) || !k2.is_finite() {
        return Err(Error::invalid(format!("need K2 ≥ K1 > 0, got K1 = {k1}, K2 = {k2}")));
    }
    if k1 == k2 {
        Ok(1)
    } else {
        Ok(((k2 / k1).powi(2)).floor() as usize + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryVerdict {
    /// `δ_{2r} < 1`: `Θ*` is the only rank-`r` solution of `ZΘ = X`.
    pub uniqueness: bool,
    /// `δ_{(2+3s)r} < 5 − 2√6`: nuclear-norm minimization returns `Θ*`.
    pub exact_recovery: bool,
}

pub fn recovery_verdict(delta_2r: Option<f64>, delta_2p3s_r: Option<f64>) -> RecoveryVerdict {
    RecoveryVerdict {
        uniqueness: delta_2r.is_some_and(|d| d < 1.0),
        exact_recovery: delta_2p3s_r.is_some_and(|d| d < exact_recovery_threshold()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceDeviation {
    /// `‖ZᵀZ/N − Σ‖_op`.
    pub dev: f64,
    /// `‖ZᵀZ/N‖_op`.
    pub sample_op: f64,
    pub dim: usize,
    pub samples: usize,
}

impl CovarianceDeviation {
    /// `16√6·β²(√(p/N) + p/N) + δβ²`.
    pub fn bound_at(&self, delta: f64, beta: f64) -> f64 {
        let ratio = self.dim as f64 / self.samples as f64;
        16.0 * 6f64.sqrt() * beta * beta * (ratio.sqrt() + ratio) + delta * beta * beta
    }

    /// `(32√6 + 1)β² + γ_max`, the `δ = 1` ceiling on `‖ZᵀZ/N‖_op`.
    pub fn sample_op_ceiling(beta: f64, gamma_max: f64) -> f64 {
        alpha_constant() * beta * beta + gamma_max
    }
}

pub fn covariance_deviation(z: &RealMatrix, sigma: &RealMatrix) -> Result<CovarianceDeviation> {
    let p = z.ncols();
    if sigma.shape() != (p, p) {
        return Err(Error::dims(format!("Σ is {:?}, Z has {p} columns", sigma.shape())));
    }
    let sigma_hat = z.tr_mul(z) / z.nrows() as f64;
    Ok(CovarianceDeviation {
        dev: matspec::operator_norm(&(&sigma_hat - sigma))?,
        sample_op: matspec::operator_norm(&sigma_hat)?,
        dim: p,
        samples: z.nrows(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossTerm {
    /// `‖ZᵀW/N‖_op`, the operator norm of the loss gradient at `Θ*`.
    pub value: f64,
    /// `2α√((n+m)/N)`.
    pub threshold: f64,
}

impl CrossTerm {
    pub fn exceeded(&self) -> bool {
        self.value >= self.threshold
    }
}

pub fn cross_term(z: &RealMatrix, w: &RealMatrix, alpha: f64) -> Result<CrossTerm> {
    if z.nrows() != w.nrows() {
        return Err(Error::dims(format!("Z has {} rows, W has {}", z.nrows(), w.nrows())));
    }
    let n_s = z.nrows() as f64;
    Ok(CrossTerm {
        value: matspec::operator_norm(&(z.tr_mul(w) / n_s))?,
        threshold: 2.0 * alpha * (z.ncols() as f64 / n_s).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    /// `σ_min(ZᵀZ/N)`; this is the reported curvature.
    pub analytic: f64,
    /// Minimum of `‖Σ̂Δ‖_op` over sampled unit-operator-norm `Δ`.
    pub sampled_min: f64,
    pub trials: usize,
}

impl Curvature {
    pub fn value(&self) -> f64 {
        self.analytic
    }
}

/// Operator-norm curvature of the quadratic loss. The gradient difference is
/// `∇L(Θ*+Δ) − ∇L(Θ*) = Σ̂Δ`, so the curvature with zero tolerance is
/// `σ_min(Σ̂)`; random directions give an upper cross-check.
pub fn curvature_estimate(z: &RealMatrix, state_dim: usize, trials: usize, seed: u64) -> Result<Curvature> {
    if trials == 0 || state_dim == 0 {
        return Err(Error::invalid(
            "curvature estimate needs trials ≥ 1 and a positive state dimension",
        ));
    }
    matspec::ensure_finite(z, "Z")?;
    let sigma_hat = z.tr_mul(z) / z.nrows() as f64;
    let analytic = SymmetricEigen::new(sigma_hat.clone()).eigenvalues.min().max(0.0);
    let p = z.ncols();
    let samples = crate::par_map(trials, |i| -> Result<f64> {
        let mut rng = seeded(derive_seed(seed, i as u64));
        let delta = gaussian_matrix(p, state_dim, &mut rng);
        let scale = matspec::operator_norm(&delta)?;
        matspec::operator_norm(&(&sigma_hat * delta / scale))
    });
    let mut sampled_min = f64::INFINITY;
    for s in samples {
        sampled_min = sampled_min.min(s?);
    }
    Ok(Curvature {
        analytic,
        sampled_min,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub curvature: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma_min: f64,
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub rank: usize,
    pub radius_q: f64,
    pub tau_n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedBounds {
    /// `3λ/K`.
    pub op_deterministic: f64,
    /// `12α/γ_min·√((n+m)/N)` as stated.
    pub op_corollary_stmt: f64,
    /// `24α/γ_min·√((n+m)/N)` as derived.
    pub op_corollary_proof: f64,
    /// `96√(2r)·α/γ_min·√((n+m)/N)`.
    pub frob_remark: f64,
    /// `max(32τ_N R_q/K, 6λ/K)`.
    pub op_lq: f64,
}

impl PredictedBounds {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("op_deterministic".to_string(), self.op_deterministic),
            ("op_corollary_stmt".to_string(), self.op_corollary_stmt),
            ("op_corollary_proof".to_string(), self.op_corollary_proof),
            ("frob_remark".to_string(), self.frob_remark),
            ("op_lq".to_string(), self.op_lq),
        ])
    }
}

pub fn predict_bounds(params: &BoundParams) -> PredictedBounds {
    let BoundParams {
        curvature,
        lambda,
        alpha,
        gamma_min,
        n,
        m,
        samples,
        rank,
        radius_q,
        tau_n,
    } = *params;
    let rate = ((n + m) as f64 / samples as f64).sqrt();
    PredictedBounds {
        op_deterministic: 3.0 * lambda / curvature,
        op_corollary_stmt: 12.0 * alpha / gamma_min * rate,
        op_corollary_proof: 24.0 * alpha / gamma_min * rate,
        frob_remark: 96.0 * (2.0 * rank as f64).sqrt() * alpha / gamma_min * rate,
        op_lq: (32.0 * tau_n * radius_q / curvature).max(6.0 * lambda / curvature),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    /// `‖Δ_M̄⊥‖nuc / ‖Δ_M̄‖nuc`; at most 3 under the λ premise.
    pub ratio: f64,
    /// `‖Δ‖nuc / (4√(2r)‖Δ‖_F)`; at most 1 under the λ premise.
    pub nuc_vs_frob: f64,
    pub perp_nuclear: f64,
    pub bar_nuclear: f64,
    pub nuclear: f64,
    pub frobenius: f64,
}

impl ConeCheck {
    /// Both cone inequalities with an absolute slack on the nuclear norms.
    pub fn holds(&self, rank: usize, slack: f64) -> bool {
        self.perp_nuclear <= 3.0 * self.bar_nuclear + slack
            && self.nuclear <= 4.0 * (2.0 * rank as f64).sqrt() * self.frobenius + slack
    }
}

pub fn cone_check(delta: &RealMatrix, frame: &SubspaceFrame, rank: usize) -> Result<ConeCheck> {
    if rank == 0 {
        return Err(Error::invalid("rank must be positive"));
    }
    let frobenius = delta.norm();
    let eps = 1e-15 * frobenius;
    let perp_nuclear = matspec::nuclear_norm(&frame.project(delta, Subspace::MBarPerp)?)?;
    let bar_nuclear = matspec::nuclear_norm(&frame.project(delta, Subspace::MBar)?)?;
    let nuclear = matspec::nuclear_norm(delta)?;
    let denom = 4.0 * (2.0 * rank as f64).sqrt() * frobenius;
    Ok(ConeCheck {
        ratio: perp_nuclear / bar_nuclear.max(eps).max(f64::MIN_POSITIVE),
        nuc_vs_frob: if denom > 0.0 { nuclear / denom } else { 0.0 },
        perp_nuclear,
        bar_nuclear,
        nuclear,
        frobenius,
    })
}

/// Evaluated certificate conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub delta_2r_below_one: bool,
    pub delta_2p3s_r_below_threshold: bool,
    pub lambda_premise: bool,
}

/// Numeric certificate for one design. Threshold verdicts are never stored;
/// [`CertReport::thresholds`] recomputes them from the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub rank: usize,
    pub weak_rip: Vec<WeakRipEstimate>,
    pub curvature_k: f64,
    pub cov_dev_op: f64,
    pub cross_term_op: f64,
    pub s_value: Option<usize>,
    pub lambda: f64,
    pub predicted_bounds: BTreeMap<String, f64>,
}

impl CertReport {
    fn delta_for(&self, order: usize) -> Option<f64> {
        self.weak_rip
            .iter()
            .find(|e| e.order == order)
            .and_then(|e| e.delta_hat)
    }

    pub fn thresholds(&self) -> Thresholds {
        let big = self.s_value.map(|s| (2 + 3 * s) * self.rank);
        Thresholds {
            delta_2r_below_one: self.delta_for(2 * self.rank).is_some_and(|d| d < 1.0),
            delta_2p3s_r_below_threshold: big
                .and_then(|o| self.delta_for(o))
                .is_some_and(|d| d < exact_recovery_threshold()),
            lambda_premise: self.lambda >= 2.0 * self.cross_term_op,
        }
    }

    pub fn verdict(&self) -> RecoveryVerdict {
        let big = self.s_value.map(|s| (2 + 3 * s) * self.rank);
        recovery_verdict(self.delta_for(2 * self.rank), big.and_then(|o| self.delta_for(o)))
    }

    /// JSON with the evaluated thresholds attached.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct View<'a> {
            #[serde(flatten)]
            report: &'a CertReport,
            thresholds: Thresholds,
        }
        Ok(serde_json::to_string_pretty(&View {
            report: self,
            thresholds: self.thresholds(),
        })?)
    }

    /// Parses a report, discarding any stored threshold verdicts.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Weak-RIP estimates at orders `r, 2r, (2+3s)r` on nested pools with
/// `K1 = √γ_min(Σ)` and `K2 = √γ_max(Σ)`. Each pool also contains the two
/// rank-one directions `v wᵀ` built from the extreme eigenvectors of
/// `ZᵀZ/N`, which attain the true extremes, so degenerate designs are always
/// flagged. A singular `Σ` leaves `s` undefined; only orders `r` and `2r`
/// are then reported, both failing.
pub fn certify_weak_rip(
    z: &RealMatrix,
    state_dim: usize,
    sigma: &RealMatrix,
    rank: usize,
    trials: usize,
    seed: u64,
) -> Result<(Option<usize>, Vec<WeakRipEstimate>)> {
    let (gamma_min, gamma_max) = extreme_eigenvalues(sigma);
    let k2 = gamma_max.max(0.0).sqrt();
    let k1 = gamma_min.max(0.0).sqrt().min(k2);
    let s = s_value(k1, k2).ok();
    let orders = match s {
        Some(s) => vec![rank, 2 * rank, (2 + 3 * s) * rank],
        None => vec![rank, 2 * rank],
    };
    let exact = spectral_weak_rip(z, rank, k1, k2)?;
    let profile = weak_rip_profile(z, state_dim, &orders, k1, k2, trials, seed)?
        .into_iter()
        .map(|e| {
            let lo = e.ratio_min.min(exact.ratio_min);
            let hi = e.ratio_max.max(exact.ratio_max);
            WeakRipEstimate::from_ratios(e.order, k1, k2, e.samples + 2, lo, hi)
        })
        .collect();
    Ok((s, profile))
}

/// Inputs for [`certify`].
#[derive(Debug, Clone, Copy)]
pub struct CertInputs<'a> {
    pub z: &'a RealMatrix,
    pub w: &'a RealMatrix,
    pub sigma: &'a RealMatrix,
    pub rank: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Certifies weak RIP at orders `r, 2r, (2+3s)r` with `K1 = √γ_min(Σ)`,
/// `K2 = √γ_max(Σ)`, the curvature, the concentration deviations and the
/// predicted bounds for one design.
pub fn certify(inp: &CertInputs<'_>) -> Result<CertReport> {
    let state_dim = inp.w.ncols();
    let (gamma_min, _) = extreme_eigenvalues(inp.sigma);
    let gamma_min = gamma_min.max(0.0);
    let (s, weak_rip) = certify_weak_rip(inp.z, state_dim, inp.sigma, inp.rank, inp.trials, inp.seed)?;
    let curvature = curvature_estimate(inp.z, state_dim, 8, derive_seed(inp.seed, u64::MAX))?;
    let cov = covariance_deviation(inp.z, inp.sigma)?;
    let cross = cross_term(inp.z, inp.w, inp.alpha)?;
    let n = state_dim;
    let m = inp.z.ncols() - n;
    let bounds = predict_bounds(&BoundParams {
        curvature: curvature.value(),
        lambda: inp.lambda,
        alpha: inp.alpha,
        gamma_min,
        n,
        m,
        samples: inp.z.nrows(),
        rank: inp.rank,
        radius_q: inp.rank as f64,
        tau_n: 0.0,
    });
    Ok(CertReport {
        rank: inp.rank,
        weak_rip,
        curvature_k: curvature.value(),
        cov_dev_op: cov.dev,
        cross_term_op: cross.value,
        s_value: s,
        lambda: inp.lambda,
        predicted_bounds: bounds.to_map(),
    })
}

/// Extreme eigenvalues `(γ_min, γ_max)` of a symmetric matrix.
pub fn extreme_eigenvalues(sym: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(sym.clone()).eigenvalues;
    (eig.min(), eig.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::random_orthonormal;

    #[test]
    fn isometric_design_has_zero_delta() {
        let q = random_orthonormal(40, 6, &mut seeded(1)) * 40f64.sqrt();
        let est = empirical_weak_rip(&q, 4, 2, 1.0, 1.0, 200, 3).unwrap();
        assert!(est.delta_hat.unwrap() <= 1e-10);
    }

    #[test]
    fn zero_design_fails() {
        let z = RealMatrix::zeros(10, 5);
        let est = empirical_weak_rip(&z, 3, 1, 1.0, 1.0, 100, 0).unwrap();
        assert!(est.failed());
        assert!(empirical_weak_rip(&z, 3, 1, 1.0, 1.0, 99, 0).is_err());
        assert!(empirical_weak_rip(&z, 3, 1, 2.0, 1.0, 100, 0).is_err());
    }

    #[test]
    fn gaussian_design_in_the_concentration_regime() {
        let (n, m, r) = (4, 4, 2);
        let z = gaussian_matrix(50 * (n + m) * r, n + m, &mut seeded(8));
        let est = empirical_weak_rip(&z, n, r, 1.0, 1.0, 500, 2).unwrap();
        assert!(est.delta_hat.unwrap() < 0.2);
        let exact = spectral_weak_rip(&z, r, 1.0, 1.0).unwrap();
        assert!(est.delta_hat.unwrap() <= exact.delta_hat.unwrap() + 1e-12);
    }

    #[test]
    fn profile_is_monotone_in_order() {
        let z = gaussian_matrix(60, 8, &mut seeded(4));
        let prof = weak_rip_profile(&z, 5, &[5, 1, 2], 0.8, 1.2, 150, 9).unwrap();
        let orders: Vec<usize> = prof.iter().map(|e| e.order).collect();
        assert_eq!(orders, vec![1, 2, 5]);
        for w in prof.windows(2) {
            assert!(w[0].delta_hat.unwrap_or(1.0) <= w[1].delta_hat.unwrap_or(1.0));
            assert!(w[1].samples > w[0].samples);
        }
    }

    #[test]
    fn s_value_definition() {
        assert_eq!(s_value(3.0, 3.0).unwrap(), 1);
        assert_eq!(s_value(1.0, 2.0).unwrap(), 5);
        assert_eq!(s_value(1.0, 1.5).unwrap(), 3);
        assert!(s_value(2.0, 1.0).is_err());
        assert!(s_value(0.0, 1.0).is_err());
    }

    #[test]
    fn recovery_thresholds() {
        assert!((exact_recovery_threshold() - 0.10102).abs() < 1e-5);
        assert_eq!(
            recovery_verdict(Some(0.05), Some(0.05)),
            RecoveryVerdict {
                uniqueness: true,
                exact_recovery: true
            }
        );
        assert_eq!(
            recovery_verdict(Some(0.5), Some(0.5)),
            RecoveryVerdict {
                uniqueness: true,
                exact_recovery: false
            }
        );
        assert_eq!(
            recovery_verdict(None, None),
            RecoveryVerdict {
                uniqueness: false,
                exact_recovery: false
            }
        );
    }

    #[test]
    fn covariance_deviation_exact_match() {
        let z = RealMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]) * 2f64.sqrt();
        let sigma = RealMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let dev = covariance_deviation(&z, &sigma).unwrap();
        assert!(dev.dev < 1e-14);
        assert!((dev.sample_op - 4.0).abs() < 1e-13);
        let ratio: f64 = 2.0 / 2.0;
        let expected = 16.0 * 6f64.sqrt() * 4.0 * (ratio.sqrt() + ratio) + 0.5 * 4.0;
        assert!((dev.bound_at(0.5, 2.0) - expected).abs() < 1e-12);
        assert!(covariance_deviation(&z, &RealMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn cross_term_is_linear_in_noise() {
        let mut rng = seeded(6);
        let z = gaussian_matrix(50, 6, &mut rng);
        let w = gaussian_matrix(50, 3, &mut rng);
        assert_eq!(cross_term(&z, &RealMatrix::zeros(50, 3), 1.0).unwrap().value, 0.0);
        let base = cross_term(&z, &w, 1.0).unwrap();
        let scaled = cross_term(&z, &(&w * 2.5), 1.0).unwrap();
        assert!((scaled.value - 2.5 * base.value).abs() < 1e-12 * scaled.value);
        assert!((base.threshold - 2.0 * (6.0f64 / 50.0).sqrt()).abs() < 1e-15);
        assert!(cross_term(&z, &gaussian_matrix(49, 3, &mut rng), 1.0).is_err());
    }

    #[test]
    fn curvature_examples() {
        let id = RealMatrix::identity(4, 4) * 2.0; // ZᵀZ/N = I
        let c = curvature_estimate(&id, 3, 20, 0).unwrap();
        assert!((c.value() - 1.0).abs() < 1e-14);
        assert!(c.sampled_min >= c.analytic - 1e-10);

        let z = RealMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]) * 2f64.sqrt();
        let c = curvature_estimate(&z, 2, 50, 1).unwrap();
        assert!((c.value() - 1.0).abs() < 1e-13);
        let sigma_hat = z.tr_mul(&z) / 2.0;
        let mut witness = RealMatrix::zeros(2, 2);
        witness[(1, 0)] = 1.0;
        assert!((matspec::operator_norm(&(&sigma_hat * witness)).unwrap() - 1.0).abs() < 1e-13);
        assert!(c.sampled_min >= c.analytic - 1e-10);

        let deficient = RealMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        assert!(curvature_estimate(&deficient, 2, 5, 2).unwrap().value() < 1e-14);
    }

    #[test]
    fn predicted_bound_examples() {
        let base = BoundParams {
            curvature: 1.0,
            lambda: 2.0,
            alpha: 1.0,
            gamma_min: 1.0,
            n: 50,
            m: 50,
            samples: 400,
            rank: 2,
            radius_q: 2.0,
            tau_n: 0.0,
        };
        let b = predict_bounds(&base);
        assert_eq!(b.op_deterministic, 6.0);
        assert!((b.op_corollary_stmt - 6.0).abs() < 1e-14);
        assert!((b.op_corollary_proof - 12.0).abs() < 1e-14);
        assert!((b.frob_remark - 96.0 * 2.0 * 0.5).abs() < 1e-12);
        assert_eq!(b.op_lq, 12.0);
        let b = predict_bounds(&BoundParams {
            tau_n: 1.0,
            radius_q: 1.0,
            ..base
        });
        assert_eq!(b.op_lq, 32.0);
    }

    #[test]
    fn cone_check_identities() {
        let mut rng = seeded(2);
        let theta = gaussian_matrix(6, 2, &mut rng) * gaussian_matrix(2, 4, &mut rng);
        let frame = matspec::subspace_frame(&theta, 2).unwrap();
        let delta = frame.project(&gaussian_matrix(6, 4, &mut rng), Subspace::MBar).unwrap();
        assert!(cone_check(&delta, &frame, 2).unwrap().ratio < 1e-12);

        let u = frame.col_basis.column(0).into_owned();
        let v = frame.row_basis.column(1).into_owned();
        let rank_one = u * v.transpose() * 3.0;
        let cc = cone_check(&rank_one, &frame, 2).unwrap();
        assert!((cc.nuc_vs_frob - 1.0 / (4.0 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn report_thresholds_follow_numbers() {
        let est = |order, d: Option<f64>| WeakRipEstimate {
            order,
            k1: 1.0,
            k2: 1.0,
            delta_hat: d,
            samples: 100,
            ratio_min: 0.9,
            ratio_max: 1.1,
        };
        let mut report = CertReport {
            rank: 2,
            weak_rip: vec![est(2, Some(0.05)), est(4, Some(0.08)), est(10, Some(0.09))],
            curvature_k: 0.5,
            cov_dev_op: 0.1,
            cross_term_op: 0.2,
            s_value: Some(1),
            lambda: 0.5,
            predicted_bounds: BTreeMap::new(),
        };
        assert_eq!(
            report.thresholds(),
            Thresholds {
                delta_2r_below_one: true,
                delta_2p3s_r_below_threshold: true,
                lambda_premise: true
            }
        );
        report.weak_rip[2].delta_hat = Some(0.2);
        report.lambda = 0.3;
        let t = report.thresholds();
        assert!(!t.delta_2p3s_r_below_threshold && !t.lambda_premise);

        // stored verdicts in the JSON are ignored on load
        let json = report
            .to_json()
            .unwrap()
            .replace("\"lambda_premise\": false", "\"lambda_premise\": true");
        let back = CertReport::from_json(&json).unwrap();
        assert_eq!(back, report);
        assert!(!back.thresholds().lambda_premise);
    }
}
