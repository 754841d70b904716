use super::NumericsError;

/// Default absolute tolerance on event times, scaled by `max(1, |t|)`.
pub const ROOT_TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;

/// A scalar root problem on a bracket where the function changes sign.
#[derive(Debug, Clone, Copy)]
pub struct RootProblem<F> {
    pub f: F,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl<F: FnMut(f64) -> f64> RootProblem<F> {
    pub fn new(f: F, lo: f64, hi: f64) -> Self {
        RootProblem {
            f,
            lo,
            hi,
            tol: ROOT_TOL,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn solve(self) -> Result<f64, NumericsError> {
        find_root(self)
    }
}

/// Brent's method: bisection safeguarding secant and inverse quadratic
/// steps. Every iterate stays inside the current bracket.
pub fn find_root<F: FnMut(f64) -> f64>(problem: RootProblem<F>) -> Result<f64, NumericsError> {
    let RootProblem { mut f, lo, hi, tol } = problem;
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() {
        return Err(NumericsError::NonFinite { t: a });
    }
    if !fb.is_finite() {
        return Err(NumericsError::NonFinite { t: b });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::NoSignChange {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol_abs = tol * b.abs().max(1.0);
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol_abs;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(NumericsError::NonFinite { t: b });
        }
    }
    Err(NumericsError::NotConverged {
        iterations: MAX_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn linear() {
        let t = RootProblem::new(|t| t - 1.0, 0.0, 2.0).solve().unwrap();
        assert!((t - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cosine() {
        let t = RootProblem::new(f64::cos, 1.0, 2.0).solve().unwrap();
        assert!((t - FRAC_PI_2).abs() <= 1e-12);
    }

    #[test]
    fn linear_wall_impact() {
        // x + v t = d0 + eps d' t with x = 0, v = 1, d = 1 + 0.01 t
        let t = RootProblem::new(|t| t - (1.0 + 0.01 * t), 0.0, 2.0)
            .solve()
            .unwrap();
        assert!((t - 1.0 / 0.99).abs() <= 1e-12);
        assert!((t - 1.010_101_010_1).abs() < 1e-10);
    }

    #[test]
    fn endpoint_root_is_returned() {
        assert_eq!(RootProblem::new(|t| t, 0.0, 1.0).solve().unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            RootProblem::new(|t| t * t + 1.0, -1.0, 1.0).solve(),
            Err(NumericsError::NoSignChange { .. })
        ));
        assert!(matches!(
            RootProblem::new(|t: f64| if t > 0.5 { f64::NAN } else { t - 0.7 }, 0.0, 1.0).solve(),
            Err(NumericsError::NonFinite { .. })
        ));
    }

    #[test]
    fn shrinking_bracket_returns_same_root() {
        let f = |t: f64| (3.0 * t).sin() - 0.2 * t;
        let r = RootProblem::new(f, 0.5, 1.5).solve().unwrap();
        for (lo, hi) in [(0.9, 1.1), (r - 1e-3, r + 2e-3), (r - 1e-6, r + 1e-6)] {
            let r2 = RootProblem::new(f, lo, hi).solve().unwrap();
            assert!((r - r2).abs() <= 2e-12, "{r} vs {r2}");
        }
        // Deterministic.
        assert_eq!(
            r.to_bits(),
            RootProblem::new(f, 0.5, 1.5).solve().unwrap().to_bits()
        );
    }
}
