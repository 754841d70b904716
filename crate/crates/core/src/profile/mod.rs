//! Slowly varying wall profiles `d(tau)`.
//!
//! A profile is parsed once from text and evaluated together with its first
//! and second derivative in the slow argument. The same type serves the
//! Fermi-Ulam wall `d(eps t)` and the waveguide width `d(eps x)`; the
//! variable is always spelled `tau`.

mod ast;
mod jet;
mod parse;

pub use ast::{BinOp, Constant, Func, ProfileAst};
pub use jet::Jet;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("'{name}' at byte {offset} takes {expected} argument(s), found {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("domain error in `{expr}` at tau = {tau}: {reason}")]
    Domain {
        expr: String,
        tau: f64,
        reason: &'static str,
    },
    #[error("non-finite slow argument {0}")]
    BadArgument(f64),
    #[error("profile value {value} below required minimum {d_min} at tau = {tau}")]
    NotPositive { tau: f64, value: f64, d_min: f64 },
    #[error("invalid validation interval [{0}, {1}]")]
    BadInterval(f64, f64),
}

/// `d`, `d'` and `d''` at one slow argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileValue {
    pub d: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn parse_profile(source: &str) -> Result<ProfileAst, ProfileError> {
    parse::parse(source)
}

pub fn eval_profile(ast: &ProfileAst, tau: f64) -> Result<ProfileValue, ProfileError> {
    if !tau.is_finite() {
        return Err(ProfileError::BadArgument(tau));
    }
    let j = eval_jet(ast, Jet::variable(tau), tau)?;
    Ok(ProfileValue {
        d: j.v,
        d1: j.d1,
        d2: j.d2,
    })
}

fn domain(node: &ProfileAst, tau: f64, reason: &'static str) -> ProfileError {
    ProfileError::Domain {
        expr: node.to_string(),
        tau,
        reason,
    }
}

fn eval_jet(node: &ProfileAst, x: Jet, tau: f64) -> Result<Jet, ProfileError> {
    let out = match node {
        ProfileAst::Num(v) => Jet::constant(*v),
        ProfileAst::Const(Constant::Pi) => Jet::constant(std::f64::consts::PI),
        ProfileAst::Const(Constant::E) => Jet::constant(std::f64::consts::E),
        ProfileAst::Tau => x,
        ProfileAst::Neg(a) => -eval_jet(a, x, tau)?,
        ProfileAst::Binary(op, a, b) => {
            let a = eval_jet(a, x, tau)?;
            let b = eval_jet(b, x, tau)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b.v == 0.0 {
                        return Err(domain(node, tau, "division by zero"));
                    }
                    a / b
                }
                BinOp::Pow => pow(node, a, b, tau)?,
            }
        }
        ProfileAst::Call(func, a) => {
            let a = eval_jet(a, x, tau)?;
            match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => a.tan(),
                Func::Exp => a.exp(),
                Func::Tanh => a.tanh(),
                Func::Atan => a.atan(),
                Func::Sqrt => {
                    if a.v < 0.0 {
                        return Err(domain(node, tau, "square root of a negative value"));
                    }
                    if a.v == 0.0 && !a.is_constant() {
                        return Err(domain(
                            node,
                            tau,
                            "square root at zero is not differentiable",
                        ));
                    }
                    if a.v == 0.0 {
                        Jet::constant(0.0)
                    } else {
                        a.sqrt()
                    }
                }
            }
        }
    };
    if !out.is_finite() {
        return Err(domain(node, tau, "non-finite result"));
    }
    Ok(out)
}

fn pow(node: &ProfileAst, base: Jet, exponent: Jet, tau: f64) -> Result<Jet, ProfileError> {
    let integral = exponent.is_constant()
        && exponent.v.fract() == 0.0
        && exponent.v.abs() <= f64::from(i32::MAX);
    if integral {
        #[allow(clippy::cast_possible_truncation)]
        let n = exponent.v as i32;
        if base.v == 0.0 && n < 0 {
            return Err(domain(node, tau, "division by zero"));
        }
        return Ok(base.powi(n));
    }
    if base.v <= 0.0 {
        return Err(domain(
            node,
            tau,
            "non-integer exponent requires a positive base",
        ));
    }
    Ok(base.powf(exponent))
}

/// A parsed profile together with the text it came from.
#[derive(Debug, Clone)]
pub struct Profile {
    source: String,
    ast: ProfileAst,
}

impl Profile {
    pub fn parse(source: &str) -> Result<Self, ProfileError> {
        Ok(Profile {
            source: source.to_string(),
            ast: parse_profile(source)?,
        })
    }

    pub fn from_ast(ast: ProfileAst) -> Self {
        Profile {
            source: ast.to_string(),
            ast,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &ProfileAst {
        &self.ast
    }

    pub fn is_constant(&self) -> bool {
        self.ast.is_constant()
    }

    pub fn eval(&self, tau: f64) -> Result<ProfileValue, ProfileError> {
        eval_profile(&self.ast, tau)
    }

    /// Value only; `NaN` on evaluation failure. Used inside root searches.
    pub fn value_or_nan(&self, tau: f64) -> f64 {
        self.eval(tau).map_or(f64::NAN, |v| v.d)
    }
}

/// Outcome of a successful positivity check over a slow-argument interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PositivityReport {
    pub lo: f64,
    pub hi: f64,
    pub min_d: f64,
    pub argmin: f64,
    pub max_d: f64,
    pub argmax: f64,
    /// Largest sampled `|d'|`.
    pub max_abs_d1: f64,
    /// Largest sampled `|d''|`.
    pub max_abs_d2: f64,
}

const POSITIVITY_GRID: usize = 10_000;

/// Smallest wall separation the simulators accept.
pub const MIN_WIDTH: f64 = 1e-9;

/// Checks `d >= d_min` on `[lo, hi]` by dense sampling followed by
/// refinement of every sampled interior minimum (sign change of `d'`).
/// A rejection reports the deepest violation found.
///
/// Sampling can miss features narrower than the grid spacing; profiles are
/// assumed to vary on the scale of the interval, not below it.
pub fn validate_positive(
    ast: &ProfileAst,
    lo: f64,
    hi: f64,
    d_min: f64,
) -> Result<PositivityReport, ProfileError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(ProfileError::BadInterval(lo, hi));
    }
    let n = if hi > lo { POSITIVITY_GRID } else { 0 };
    let mut samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let tau = if n == 0 {
            lo
        } else {
            lo + (hi - lo) * (i as f64) / (n as f64)
        };
        samples.push((tau, eval_profile(ast, tau)?));
    }

    let mut report = PositivityReport {
        lo,
        hi,
        min_d: f64::INFINITY,
        argmin: lo,
        max_d: f64::NEG_INFINITY,
        argmax: lo,
        max_abs_d1: 0.0,
        max_abs_d2: 0.0,
    };
    let mut absorb = |tau: f64, v: &ProfileValue| {
        if v.d < report.min_d {
            report.min_d = v.d;
            report.argmin = tau;
        }
        if v.d > report.max_d {
            report.max_d = v.d;
            report.argmax = tau;
        }
        report.max_abs_d1 = report.max_abs_d1.max(v.d1.abs());
        report.max_abs_d2 = report.max_abs_d2.max(v.d2.abs());
    };
    for (tau, v) in &samples {
        absorb(*tau, v);
    }
    for w in samples.windows(2) {
        let (a, va) = w[0];
        let (b, vb) = w[1];
        if va.d1 < 0.0 && vb.d1 > 0.0 {
            let (tau, v) = refine_stationary(ast, a, b)?;
            absorb(tau, &v);
        }
    }
    if report.min_d < d_min {
        return Err(ProfileError::NotPositive {
            tau: report.argmin,
            value: report.min_d,
            d_min,
        });
    }
    Ok(report)
}

/// Bisection on the sign of `d'` inside a bracket where it goes from
/// negative to positive.
fn refine_stationary(
    ast: &ProfileAst,
    mut a: f64,
    mut b: f64,
) -> Result<(f64, ProfileValue), ProfileError> {
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if eval_profile(ast, m)?.d1 < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let tau = 0.5 * (a + b);
    Ok((tau, eval_profile(ast, tau)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn eval(src: &str, tau: f64) -> ProfileValue {
        eval_profile(&parse_profile(src).unwrap(), tau).unwrap()
    }

    #[test]
    fn sine_profile_at_zero() {
        let v = eval("2 + 0.5*sin(tau)", 0.0);
        assert_eq!((v.d, v.d1, v.d2), (2.0, 0.5, 0.0));
    }

    #[test]
    fn constant_profile() {
        for tau in [-3.0, 0.0, 17.5] {
            let v = eval("1", tau);
            assert_eq!((v.d, v.d1, v.d2), (1.0, 0.0, 0.0));
        }
    }

    #[test]
    fn sine_profile_at_quarter_period() {
        let v = eval("2 + 0.5*sin(tau)", FRAC_PI_2);
        assert!((v.d - 2.5).abs() < 1e-15);
        assert!(v.d1.abs() < 1e-15);
        assert!((v.d2 + 0.5).abs() < 1e-15);

        // Central differences at h = 1e-5 agree with the jets.
        let h = 1e-5;
        let f = |t: f64| eval("2 + 0.5*sin(tau)", t).d;
        let c1 = (f(FRAC_PI_2 + h) - f(FRAC_PI_2 - h)) / (2.0 * h);
        let c2 = (f(FRAC_PI_2 + h) - 2.0 * f(FRAC_PI_2) + f(FRAC_PI_2 - h)) / (h * h);
        assert!(c1.abs() < 1e-9);
        assert!((c2 + 0.5).abs() < 1e-5);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let ast = parse_profile("1 + sqrt(tau - 2)").unwrap();
        match eval_profile(&ast, 0.0) {
            Err(ProfileError::Domain { expr, .. }) => assert_eq!(expr, "sqrt((tau - 2))"),
            other => panic!("unexpected {other:?}"),
        }
        let ast = parse_profile("1 / (tau - 1)").unwrap();
        assert!(matches!(
            eval_profile(&ast, 1.0),
            Err(ProfileError::Domain {
                reason: "division by zero",
                ..
            })
        ));
        let ast = parse_profile("tau ^ 0.5").unwrap();
        assert!(eval_profile(&ast, -1.0).is_err());
        assert!(eval_profile(&parse_profile("tau^3").unwrap(), -2.0).is_ok());
        assert!(eval_profile(&ast, f64::NAN).is_err());
    }

    #[test]
    fn integer_power_of_negative_base() {
        let v = eval("tau^3", -2.0);
        assert_eq!((v.d, v.d1, v.d2), (-8.0, 12.0, -12.0));
        let v = eval("(tau)^(-2)", -2.0);
        assert!((v.d - 0.25).abs() < 1e-15);
        assert!((v.d1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn positivity_accepts_sine() {
        let ast = parse_profile("2 + 0.5*sin(tau)").unwrap();
        let r = validate_positive(&ast, 0.0, 10.0, 1.0).unwrap();
        assert!((r.min_d - 1.5).abs() < 1e-12);
        assert!((r.argmin - 1.5 * PI).abs() < 1e-6);
        assert!((r.max_abs_d1 - 0.5).abs() < 1e-6);
    }

    #[test]
    fn positivity_accepts_constant() {
        let ast = parse_profile("1").unwrap();
        let r = validate_positive(&ast, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(r.min_d, 1.0);
    }

    #[test]
    fn positivity_rejects_sine() {
        let ast = parse_profile("sin(tau)").unwrap();
        match validate_positive(&ast, 0.0, 10.0, 0.1) {
            Err(ProfileError::NotPositive { tau, value, .. }) => {
                assert!(tau > PI && tau < 2.0 * PI);
                assert!((tau - 1.5 * PI).abs() < 1e-6);
                assert!((value + 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn refinement_catches_minimum_between_samples() {
        // Narrow well centred between two grid points of [0, 1].
        let src = "1 - 0.9*exp(-((tau - 0.00005)/0.00002)^2)";
        let ast = parse_profile(src).unwrap();
        let err = validate_positive(&ast, 0.0, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, ProfileError::NotPositive { .. }));
    }
}
