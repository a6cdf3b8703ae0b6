//! Identification of low-rank VARX coefficient matrices from independently
//! repeated input–state samples.
//!
//! - [`matspec`]: SVD-based norms, singular value thresholding and the model
//!   subspaces of a low-rank matrix.
//! - [`varx_sim`]: system generation, trajectory simulation and repeated
//!   sampling into the regression form `X = ZΘ* + W`.
//! - [`estimators`]: least squares, nuclear-norm regularized least squares
//!   and equality-constrained nuclear-norm minimization.
//! - [`theory_lab`]: empirical certificates (weak RIP, curvature,
//!   concentration events) and closed-form error bound predictions.
//! - [`harness`]: seeded Monte Carlo experiments with CSV output.

// Argument checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;

pub mod io;
pub mod matspec;
pub mod rng;
pub mod theory_lab;
pub mod varx_sim;

pub use error::{Error, Result};
pub use matspec::RealMatrix;

/// Maps `f` over `0..count`, in parallel when the `parallel` feature is on.
/// Output order always follows the index.
pub(crate) fn par_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}
