use super::NumericsError;

/// One-dimensional potential with its slope.
pub trait Potential {
    fn value(&self, q: f64) -> Result<f64, NumericsError>;
    fn slope(&self, q: f64) -> Result<f64, NumericsError>;
}

impl<P: Potential + ?Sized> Potential for &P {
    fn value(&self, q: f64) -> Result<f64, NumericsError> {
        (**self).value(q)
    }
    fn slope(&self, q: f64) -> Result<f64, NumericsError> {
        (**self).slope(q)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FreeMotion;

impl Potential for FreeMotion {
    fn value(&self, _q: f64) -> Result<f64, NumericsError> {
        Ok(0.0)
    }
    fn slope(&self, _q: f64) -> Result<f64, NumericsError> {
        Ok(0.0)
    }
}

/// `U = stiffness q^2 / 2`.
#[derive(Debug, Clone, Copy)]
pub struct Harmonic {
    pub stiffness: f64,
}

impl Potential for Harmonic {
    fn value(&self, q: f64) -> Result<f64, NumericsError> {
        Ok(0.5 * self.stiffness * q * q)
    }
    fn slope(&self, q: f64) -> Result<f64, NumericsError> {
        Ok(self.stiffness * q)
    }
}

/// State of `H = kappa * p^2 / 2 + U(q)` advanced with a fixed step `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableSystem {
    pub kappa: f64,
    pub h: f64,
    pub t: f64,
    pub q: f64,
    pub p: f64,
}

impl SeparableSystem {
    pub fn new(kappa: f64, h: f64, q: f64, p: f64) -> Result<Self, NumericsError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(NumericsError::InvalidParameter(
                "kinetic coefficient must be positive",
            ));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(NumericsError::InvalidParameter(
                "step size must be positive",
            ));
        }
        Ok(SeparableSystem {
            kappa,
            h,
            t: 0.0,
            q,
            p,
        })
    }

    pub fn energy(&self, potential: &impl Potential) -> Result<f64, NumericsError> {
        Ok(0.5 * self.kappa * self.p * self.p + potential.value(self.q)?)
    }

    /// Same system with the step direction reversed.
    pub fn reversed(mut self) -> Self {
        self.h = -self.h;
        self
    }
}

/// Störmer-Verlet: half kick, drift, half kick.
pub fn leapfrog_step(
    sys: SeparableSystem,
    potential: &impl Potential,
) -> Result<SeparableSystem, NumericsError> {
    let half = 0.5 * sys.h;
    let p_half = sys.p - half * potential.slope(sys.q)?;
    let q = sys.q + sys.h * sys.kappa * p_half;
    let p = p_half - half * potential.slope(q)?;
    if !(q.is_finite() && p.is_finite()) {
        return Err(NumericsError::NonFinite { t: sys.t + sys.h });
    }
    Ok(SeparableSystem {
        t: sys.t + sys.h,
        q,
        p,
        ..sys
    })
}

/// A sampled point `(t, q, p)` of an effective trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub q: f64,
    pub p: f64,
}

/// Fixed-step run to `t_end`, sampling every `sample_every` steps plus the
/// initial and final points. The last step is shortened to land on `t_end`.
pub fn integrate_effective(
    sys: SeparableSystem,
    potential: &impl Potential,
    t_end: f64,
    sample_every: usize,
) -> Result<Vec<PhasePoint>, NumericsError> {
    integrate_with(sys, potential, t_end, sample_every, |_| Ok(()))
}

/// As [`integrate_effective`], calling `check` after every step.
pub fn integrate_with(
    mut sys: SeparableSystem,
    potential: &impl Potential,
    t_end: f64,
    sample_every: usize,
    mut check: impl FnMut(&SeparableSystem) -> Result<(), NumericsError>,
) -> Result<Vec<PhasePoint>, NumericsError> {
    if !(t_end > sys.t) {
        return Err(NumericsError::InvalidParameter(
            "t_end must exceed the start time",
        ));
    }
    let every = sample_every.max(1);
    let h = sys.h;
    let steps = ((t_end - sys.t) / h).ceil() as usize;
    let t0 = sys.t;
    let mut out = Vec::with_capacity(steps / every + 2);
    out.push(PhasePoint {
        t: sys.t,
        q: sys.q,
        p: sys.p,
    });
    for k in 1..=steps {
        let target = (t0 + h * k as f64).min(t_end);
        sys.h = target - sys.t;
        sys = leapfrog_step(sys, potential)?;
        sys.t = target;
        check(&sys)?;
        if k % every == 0 || k == steps {
            out.push(PhasePoint {
                t: sys.t,
                q: sys.q,
                p: sys.p,
            });
        }
    }
    Ok(out)
}
