//! Shared numerical kernels: bracketed event root-finding, a symplectic
//! integrator for one-degree-of-freedom effective dynamics, and log-log
//! slope regression.

mod fit;
mod leapfrog;
mod root;

pub use fit::{fit_slope, SlopeFit};
pub use leapfrog::{
    integrate_effective, integrate_with, leapfrog_step, FreeMotion, Harmonic, PhasePoint,
    Potential, SeparableSystem,
};
pub use root::{find_root, RootProblem, ROOT_TOL};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("root not reached within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("non-finite value at {t}")]
    NonFinite { t: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("potential evaluation failed at q = {q}: {message}")]
    Potential { q: f64, message: String },
    #[error("slope fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("slope fit needs positive inputs, got ({eps}, {y})")]
    NonPositive { eps: f64, y: f64 },
    #[error("slope fit is degenerate: all abscissae equal")]
    Degenerate,
}

/// Positive root `y` of `a y^2 + b y = a x^2 - b x`, the conservation law
/// that fixes an action after an impact. The root other than `-x - b/a`.
pub fn matched_action(a: f64, b: f64, x: f64) -> f64 {
    let rhs = a * x * x - b * x;
    let disc = (b * b + 4.0 * a * rhs).sqrt();
    if b >= 0.0 {
        2.0 * rhs / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

/// Relative mismatch of the two sides of [`matched_action`]'s law.
pub fn matching_residual(a: f64, b: f64, x: f64, y: f64) -> f64 {
    let lhs = a * y * y + b * y;
    let rhs = a * x * x - b * x;
    (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE)
}
