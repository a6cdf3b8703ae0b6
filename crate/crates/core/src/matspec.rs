//! Dense-matrix foundation: SVD-derived norms, singular value thresholding,
//! and the low-rank model subspaces built from the singular subspaces of a
//! coefficient matrix.
//!
//! For a rank-`r` matrix `Θ = U D Vᵀ` the model subspaces are
//!
//! ```text
//! M     = { Δ : colspan(Δ) ⊆ span(U), rowspan(Δ) ⊆ span(V) }
//! M̄⊥    = { Δ : colspan(Δ) ⊥ span(U), rowspan(Δ) ⊥ span(V) }
//! M̄     = (M̄⊥)⊥
//! ```
//!
//! with projections `P_M(Δ) = UUᵀ Δ VVᵀ`, `P_M̄⊥(Δ) = (I − UUᵀ) Δ (I − VVᵀ)`
//! and `P_M̄(Δ) = Δ − P_M̄⊥(Δ)`. All three are orthogonal projections in the
//! Frobenius inner product.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_RTOL: f64 = 1e-8;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITERS: usize = 10_000;

pub fn ensure_finite(m: &RealMatrix, name: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

/// Thin SVD `M = left · diag(singulars) · rightᵀ` with singular values sorted
/// non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `d1 × d` with orthonormal columns.
    pub left: RealMatrix,
    pub singulars: DVector<f64>,
    /// `d2 × d` with orthonormal columns.
    pub right: RealMatrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> RealMatrix {
        let mut scaled = self.left.clone();
        for (j, s) in self.singulars.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.right.transpose()
    }

    pub fn numerical_rank(&self) -> usize {
        let top = self.singulars.get(0).copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.singulars.iter().filter(|&&s| s > RANK_RTOL * top).count()
    }

    /// Rebuilds `left · diag(f(σ)) · rightᵀ`.
    pub fn map_singulars(&self, f: impl Fn(f64) -> f64) -> RealMatrix {
        let mut scaled = self.left.clone();
        for (j, s) in self.singulars.iter().enumerate() {
            scaled.column_mut(j).scale_mut(f(*s));
        }
        scaled * self.right.transpose()
    }
}

pub fn svd(m: &RealMatrix) -> Result<SvdFactors> {
    ensure_finite(m, "svd input")?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    let raw = m
        .clone()
        .try_svd(true, true, SVD_EPS, SVD_MAX_ITERS)
        .ok_or(Error::SvdFailure { rows, cols })?;
    let (u, vt) = match (raw.u, raw.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::SvdFailure { rows, cols }),
    };

    let d = raw.singular_values.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| raw.singular_values[b].total_cmp(&raw.singular_values[a]));

    let mut left = RealMatrix::zeros(rows, d);
    let mut right = RealMatrix::zeros(cols, d);
    let mut singulars = DVector::zeros(d);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &vt.row(src).transpose());
        singulars[dst] = raw.singular_values[src].max(0.0);
    }
    Ok(SvdFactors { left, singulars, right })
}

pub fn singular_values(m: &RealMatrix) -> Result<DVector<f64>> {
    ensure_finite(m, "singular value input")?;
    let (rows, cols) = m.shape();
    let mut s = m
        .clone()
        .try_svd(false, false, SVD_EPS, SVD_MAX_ITERS)
        .ok_or(Error::SvdFailure { rows, cols })?
        .singular_values;
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Nuclear,
    Operator,
    Frobenius,
}

pub fn norm(m: &RealMatrix, kind: NormKind) -> Result<f64> {
    let s = singular_values(m)?;
    Ok(match kind {
        NormKind::Nuclear => s.iter().sum(),
        NormKind::Operator => s.get(0).copied().unwrap_or(0.0),
        NormKind::Frobenius => s.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

pub fn nuclear_norm(m: &RealMatrix) -> Result<f64> {
    norm(m, NormKind::Nuclear)
}

pub fn operator_norm(m: &RealMatrix) -> Result<f64> {
    norm(m, NormKind::Operator)
}

pub fn numerical_rank(m: &RealMatrix) -> Result<usize> {
    let s = singular_values(m)?;
    let top = s.get(0).copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > RANK_RTOL * top).count())
}

/// Singular value soft-thresholding: the proximal operator of `tau·‖·‖nuc`.
pub fn svt(m: &RealMatrix, tau: f64) -> Result<RealMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("svt threshold must be non-negative, got {tau}")));
    }
    if tau == 0.0 {
        ensure_finite(m, "svt input")?;
        return Ok(m.clone());
    }
    Ok(svd(m)?.map_singulars(|s| (s - tau).max(0.0)))
}

/// `(1/2)‖Y − M‖²_F + tau·‖Y‖nuc`, the objective `svt` minimizes.
pub fn prox_objective(y: &RealMatrix, m: &RealMatrix, tau: f64) -> Result<f64> {
    Ok(0.5 * (y - m).norm_squared() + tau * nuclear_norm(y)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    M,
    MBar,
    MBarPerp,
}

/// Orthonormal bases of the top-`rank` left and right singular subspaces.
#[derive(Debug, Clone)]
pub struct SubspaceFrame {
    /// `d1 × r`, spans U.
    pub col_basis: RealMatrix,
    /// `d2 × r`, spans V.
    pub row_basis: RealMatrix,
    pub rank: usize,
}

pub fn subspace_frame(theta_star: &RealMatrix, r: usize) -> Result<SubspaceFrame> {
    let f = svd(theta_star)?;
    let found = f.numerical_rank();
    if found != r {
        return Err(Error::RankMismatch { expected: r, found });
    }
    Ok(SubspaceFrame {
        col_basis: f.left.columns(0, r).into_owned(),
        row_basis: f.right.columns(0, r).into_owned(),
        rank: r,
    })
}

impl SubspaceFrame {
    pub fn dims(&self) -> (usize, usize) {
        (self.col_basis.nrows(), self.row_basis.nrows())
    }

    pub fn project(&self, delta: &RealMatrix, target: Subspace) -> Result<RealMatrix> {
        if delta.shape() != self.dims() {
            return Err(Error::dims(format!(
                "frame is {:?}, matrix is {:?}",
                self.dims(),
                delta.shape()
            )));
        }
        let u = &self.col_basis;
        let v = &self.row_basis;
        Ok(match target {
            Subspace::M => u * (u.transpose() * delta * v) * v.transpose(),
            Subspace::MBarPerp => self.annihilate(delta),
            Subspace::MBar => delta - self.annihilate(delta),
        })
    }

    // (I − UUᵀ) Δ (I − VVᵀ)
    fn annihilate(&self, delta: &RealMatrix) -> RealMatrix {
        let u = &self.col_basis;
        let v = &self.row_basis;
        let left = delta - u * (u.transpose() * delta);
        &left - (&left * v) * v.transpose()
    }
}

/// Result of splitting a matrix's spectrum at a threshold `tau`.
#[derive(Debug, Clone)]
pub struct ThresholdSplit {
    /// Number of singular values strictly above `tau`.
    pub head_size: usize,
    /// The matrix with its top `head_size` singular values zeroed.
    pub tail: RealMatrix,
    /// `‖tail‖nuc`, summed from the retained singular values.
    pub tail_nuclear: f64,
    pub singulars: DVector<f64>,
}

impl ThresholdSplit {
    /// Checks `‖tail‖nuc ≤ tau^(1−q)·R_q` and `head_size ≤ tau^(−q)·R_q`.
    pub fn within_ball_bounds(&self, q: f64, tau: f64, radius: f64) -> (bool, bool) {
        (
            self.tail_nuclear <= tau.powf(1.0 - q) * radius,
            self.head_size as f64 <= tau.powf(-q) * radius,
        )
    }
}

/// `Σ σⱼ^q`, with `σ^0` counted as 1 only for numerically nonzero σ.
pub fn lq_radius(singulars: &DVector<f64>, q: f64) -> f64 {
    let top = singulars.iter().cloned().fold(0.0, f64::max);
    singulars
        .iter()
        .filter(|&&s| s > RANK_RTOL * top)
        .map(|&s| if q == 0.0 { 1.0 } else { s.powf(q) })
        .sum()
}

pub fn lq_threshold_split(theta: &RealMatrix, q: f64, tau: f64) -> Result<ThresholdSplit> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("split threshold must be positive, got {tau}")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("q must lie in [0, 1], got {q}")));
    }
    let f = svd(theta)?;
    let head_size = f.singulars.iter().filter(|&&s| s > tau).count();
    let tail = f.map_singulars(|s| if s > tau { 0.0 } else { s });
    let tail_nuclear = f.singulars.iter().skip(head_size).sum();
    Ok(ThresholdSplit {
        head_size,
        tail,
        tail_nuclear,
        singulars: f.singulars,
    })
}
