//! A particle bouncing between a fixed wall at `x = 0` and a slowly moving
//! wall at `x = d(eps t)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{find_root, matched_action, matching_residual, NumericsError, RootProblem};
use crate::phase::wall_phase;
use crate::profile::{
    validate_positive, PositivityReport, Profile, ProfileError, ProfileValue, MIN_WIDTH,
};
use crate::sampling::Sampling;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FermiError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("velocity is zero at t = {t}")]
    ZeroVelocity { t: f64 },
    #[error("position {x} lies outside [0, {d}] at t = {t}")]
    OutsideWalls { t: f64, x: f64, d: f64 },
    #[error("adiabatic condition violated at t = {t}: |v| = {v} vs wall speed bound {wall_speed}")]
    Adiabatic { t: f64, v: f64, wall_speed: f64 },
    #[error("particle does not separate from the moving wall at t = {t}: v1 = {v_post}, wall speed {wall_speed}")]
    NonSeparation {
        t: f64,
        v_post: f64,
        wall_speed: f64,
    },
    #[error("slow time {tau} leaves the validated range [{lo}, {hi}]")]
    OutsideValidatedRange { tau: f64, lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FermiState {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FermiActionAngle {
    #[serde(rename = "I")]
    pub action: f64,
    pub phi: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "I_hat")]
    pub improved: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wall {
    Fixed,
    Moving,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FermiEvent {
    pub t: f64,
    pub wall: Wall,
    pub state_pre: FermiState,
    pub state_post: FermiState,
    #[serde(rename = "dI")]
    pub d_action: f64,
    #[serde(rename = "dI_hat")]
    pub d_improved: f64,
}

/// One row of the sampled series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FermiSample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    #[serde(rename = "I")]
    pub action: f64,
    #[serde(rename = "I_hat")]
    pub improved: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FermiRun {
    pub events: Vec<FermiEvent>,
    pub samples: Vec<FermiSample>,
    pub impacts: usize,
    pub final_state: FermiState,
}

/// `I - eps d d' f / pi^2`.
pub fn improved_action(action: f64, f: f64, value: ProfileValue, eps: f64) -> f64 {
    action - eps * value.d * value.d1 * f / (PI * PI)
}

/// Action jump at a moving wall with velocity `d_dot`.
pub fn action_jump_direct(_v_pre: f64, d: f64, d_dot: f64) -> f64 {
    -2.0 * d * d_dot / PI
}

/// Post-impact action from energy matching: the positive root of
/// `a I+^2 + b I+ = a I-^2 - b I-` with `a = pi^2 / 2d^2`, `b = pi d_dot / d`.
pub fn energy_matched_action(i_minus: f64, d: f64, d_dot: f64) -> f64 {
    let (a, b) = matching_coefficients(d, d_dot);
    matched_action(a, b, i_minus)
}

/// Relative mismatch of the two sides of the energy-matching identity.
pub fn energy_matching_residual(i_minus: f64, i_plus: f64, d: f64, d_dot: f64) -> f64 {
    let (a, b) = matching_coefficients(d, d_dot);
    matching_residual(a, b, i_minus, i_plus)
}

fn matching_coefficients(d: f64, d_dot: f64) -> (f64, f64) {
    (PI * PI / (2.0 * d * d), PI * d_dot / d)
}

#[derive(Debug, Clone)]
pub struct FermiUlam {
    profile: Profile,
    eps: f64,
    bounds: PositivityReport,
}

impl FermiUlam {
    /// Validates the profile on the slow-time range `[lo, hi]`.
    pub fn new(profile: Profile, eps: f64, lo: f64, hi: f64) -> Result<Self, FermiError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(FermiError::InvalidParameter("eps must be positive"));
        }
        let bounds = validate_positive(profile.ast(), lo, hi, MIN_WIDTH)?;
        Ok(FermiUlam {
            profile,
            eps,
            bounds,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn bounds(&self) -> &PositivityReport {
        &self.bounds
    }

    pub fn wall(&self, t: f64) -> Result<ProfileValue, FermiError> {
        Ok(self.profile.eval(self.eps * t)?)
    }

    pub fn to_action_angle(&self, s: &FermiState) -> Result<FermiActionAngle, FermiError> {
        let w = self.wall(s.t)?;
        action_angle(s, w, self.eps)
    }

    /// Next impact from `s`, and the state just after it.
    pub fn next_event(&self, s: &FermiState) -> Result<(FermiEvent, FermiState), FermiError> {
        if s.v == 0.0 {
            return Err(FermiError::ZeroVelocity { t: s.t });
        }
        if s.v < 0.0 {
            let t = s.t + s.x / -s.v;
            let pre = FermiState { t, x: 0.0, ..*s };
            let post = FermiState { v: -s.v, ..pre };
            let event = FermiEvent {
                t,
                wall: Wall::Fixed,
                state_pre: pre,
                state_post: post,
                d_action: 0.0,
                d_improved: 0.0,
            };
            return Ok((event, post));
        }

        let eps = self.eps;
        let w0 = self.wall(s.t)?;
        let speed_bound = eps * self.bounds.max_abs_d1;
        if s.v <= 2.0 * eps * w0.d1.abs() || s.v <= 1.5 * speed_bound {
            return Err(FermiError::Adiabatic {
                t: s.t,
                v: s.v,
                wall_speed: speed_bound,
            });
        }
        let gap = |t: f64| -> f64 { s.x + s.v * (t - s.t) - self.profile.value_or_nan(eps * t) };
        let t_star = if gap(s.t) >= 0.0 {
            s.t
        } else {
            let closing = s.v - 1.5 * speed_bound;
            let mut hi = s.t + 2.0 * (w0.d - s.x).max(0.0) / closing;
            let mut tries = 0;
            while !(gap(hi) > 0.0) {
                hi = s.t + 2.0 * (hi - s.t).max(f64::EPSILON);
                tries += 1;
                if tries > 60 {
                    return Err(NumericsError::NoSignChange {
                        lo: s.t,
                        hi,
                        f_lo: gap(s.t),
                        f_hi: gap(hi),
                    }
                    .into());
                }
            }
            find_root(RootProblem::new(gap, s.t, hi))?
        };

        let w = self.wall(t_star)?;
        let d_dot = eps * w.d1;
        let v_post = 2.0 * d_dot - s.v;
        if v_post >= d_dot {
            return Err(FermiError::NonSeparation {
                t: t_star,
                v_post,
                wall_speed: d_dot,
            });
        }
        let pre = FermiState {
            t: t_star,
            x: w.d,
            ..*s
        };
        let post = FermiState { v: v_post, ..pre };
        let aa_pre = action_angle(&pre, w, eps)?;
        let aa_post = action_angle(&post, w, eps)?;
        let event = FermiEvent {
            t: t_star,
            wall: Wall::Moving,
            state_pre: pre,
            state_post: post,
            d_action: aa_post.action - aa_pre.action,
            d_improved: aa_post.improved - aa_pre.improved,
        };
        Ok((event, post))
    }

    fn sample(&self, s: &FermiState) -> Result<FermiSample, FermiError> {
        let aa = self.to_action_angle(s)?;
        Ok(FermiSample {
            t: s.t,
            x: s.x,
            v: s.v,
            action: aa.action,
            improved: aa.improved,
            energy: aa.energy,
            phi: aa.phi,
        })
    }

    /// Runs impacts up to `t_end`.
    pub fn simulate(
        &self,
        initial: FermiState,
        t_end: f64,
        sampling: &Sampling,
    ) -> Result<FermiRun, FermiError> {
        if !(t_end >= initial.t) {
            return Err(FermiError::InvalidParameter(
                "t_end precedes the initial time",
            ));
        }
        if initial.eps != self.eps {
            return Err(FermiError::InvalidParameter(
                "state eps differs from the system eps",
            ));
        }
        for tau in [self.eps * initial.t, self.eps * t_end] {
            let tol = 1e-12 * (1.0 + tau.abs());
            if tau < self.bounds.lo - tol || tau > self.bounds.hi + tol {
                return Err(FermiError::OutsideValidatedRange {
                    tau,
                    lo: self.bounds.lo,
                    hi: self.bounds.hi,
                });
            }
        }
        let d0 = self.wall(initial.t)?.d;
        if !(initial.x >= 0.0 && initial.x <= d0) {
            return Err(FermiError::OutsideWalls {
                t: initial.t,
                x: initial.x,
                d: d0,
            });
        }
        if initial.v == 0.0 {
            return Err(FermiError::ZeroVelocity { t: initial.t });
        }

        let mut samples = Vec::new();
        let mut events = Vec::new();
        let mut s = initial;
        let grid_on = sampling.grid > 0;
        let mut k = 1;
        if grid_on || sampling.events {
            samples.push(self.sample(&s)?);
        }
        let mut impacts = 0usize;
        let stride = sampling.stride.max(1);
        loop {
            let (event, post) = self.next_event(&s)?;
            let limit = event.t.min(t_end);
            while grid_on && k <= sampling.grid {
                let tg = sampling.grid_time(initial.t, t_end, k);
                if tg > limit {
                    break;
                }
                let flown = FermiState {
                    t: tg,
                    x: s.x + s.v * (tg - s.t),
                    ..s
                };
                samples.push(self.sample(&flown)?);
                k += 1;
            }
            if event.t > t_end {
                s = FermiState {
                    t: t_end,
                    x: s.x + s.v * (t_end - s.t),
                    ..s
                };
                break;
            }
            if sampling.events && impacts.is_multiple_of(stride) {
                samples.push(self.sample(&event.state_pre)?);
                samples.push(self.sample(&event.state_post)?);
            }
            if sampling.keep_events {
                events.push(event);
            }
            impacts += 1;
            s = post;
        }
        if !grid_on && sampling.events {
            samples.push(self.sample(&s)?);
        }
        Ok(FermiRun {
            events,
            samples,
            impacts,
            final_state: s,
        })
    }
}

fn action_angle(s: &FermiState, w: ProfileValue, eps: f64) -> Result<FermiActionAngle, FermiError> {
    if s.v == 0.0 {
        return Err(FermiError::ZeroVelocity { t: s.t });
    }
    let phase = wall_phase(s.x / w.d, s.v > 0.0);
    let action = w.d * s.v.abs() / PI;
    Ok(FermiActionAngle {
        action,
        phi: phase.phi,
        energy: 0.5 * s.v * s.v,
        improved: improved_action(action, phase.f, w, eps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(src: &str, eps: f64, hi: f64) -> FermiUlam {
        FermiUlam::new(Profile::parse(src).unwrap(), eps, 0.0, hi).unwrap()
    }

    #[test]
    fn action_angle_interior() {
        let sys = system("1", 0.1, 1.0);
        let aa = sys
            .to_action_angle(&FermiState {
                t: 0.0,
                x: 0.5,
                v: PI,
                eps: 0.1,
            })
            .unwrap();
        assert!((aa.action - 1.0).abs() < 1e-15);
        assert!((aa.phi - PI / 2.0).abs() < 1e-15);
        assert!((aa.energy - PI * PI / 2.0).abs() < 1e-13);
        let back = sys
            .to_action_angle(&FermiState {
                t: 0.0,
                x: 0.5,
                v: -PI,
                eps: 0.1,
            })
            .unwrap();
        assert!((back.phi - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn action_angle_at_moving_wall() {
        let sys = system("2", 0.1, 1.0);
        let aa = sys
            .to_action_angle(&FermiState {
                t: 0.0,
                x: 2.0,
                v: 1.0,
                eps: 0.1,
            })
            .unwrap();
        assert!((aa.action - 2.0 / PI).abs() < 1e-15);
        assert!((aa.phi - PI).abs() < 1e-15);
    }

    #[test]
    fn improved_action_values() {
        let w = ProfileValue {
            d: 2.0,
            d1: 0.5,
            d2: 0.0,
        };
        let v = improved_action(1.0, PI / 2.0, w, 0.01);
        assert!((v - 0.998_408_45).abs() < 1e-8, "{v}");
        assert_eq!(improved_action(1.0, 0.0, w, 0.01), 1.0);
        let flat = ProfileValue { d1: 0.0, ..w };
        assert_eq!(improved_action(1.3, 2.0, flat, 0.01), 1.3);
    }

    #[test]
    fn jump_formula() {
        assert_eq!(action_jump_direct(1.0, 2.0, 0.0), 0.0);
        assert!((action_jump_direct(1.0, 2.0, 0.1) + 0.4 / PI).abs() < 1e-15);
        assert!((action_jump_direct(1.0, 1.0, -0.05) - 0.1 / PI).abs() < 1e-15);
    }

    #[test]
    fn jump_agrees_with_velocity_law() {
        for &(v, d, dd) in &[(1.0, 2.0, 0.1), (3.0, 1.0, -0.05), (0.7, 1.5, 0.2)] {
            let i_minus = d * v / PI;
            let i_plus = d * (2.0 * dd - v).abs() / PI;
            assert!((i_plus - i_minus - action_jump_direct(v, d, dd)).abs() < 1e-14);
            let matched = energy_matched_action(i_minus, d, dd);
            assert!((matched - i_plus).abs() < 1e-12);
            assert!(energy_matching_residual(i_minus, matched, d, dd) < 1e-12);
        }
    }

    #[test]
    fn unit_box_impact() {
        let sys = system("1", 0.1, 1.0);
        let (ev, post) = sys
            .next_event(&FermiState {
                t: 0.0,
                x: 0.0,
                v: 1.0,
                eps: 0.1,
            })
            .unwrap();
        assert_eq!(ev.wall, Wall::Moving);
        assert!((ev.t - 1.0).abs() < 1e-13);
        assert!((post.v + 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_wall_impact() {
        let sys = system("1 + 0.1*tau", 0.1, 1.0);
        let (ev, post) = sys
            .next_event(&FermiState {
                t: 0.0,
                x: 0.0,
                v: 1.0,
                eps: 0.1,
            })
            .unwrap();
        assert!((ev.t - 1.0 / 0.99).abs() < 1e-12, "{}", ev.t);
        assert!((post.v + 0.98).abs() < 1e-14);
        let d = 1.0 + 0.01 / 0.99;
        assert!((ev.d_action - action_jump_direct(1.0, d, 0.01)).abs() < 1e-12);
    }

    #[test]
    fn fixed_wall_impact() {
        let sys = system("3", 0.1, 1.0);
        let (ev, post) = sys
            .next_event(&FermiState {
                t: 0.2,
                x: 1.0,
                v: -2.0,
                eps: 0.1,
            })
            .unwrap();
        assert_eq!(ev.wall, Wall::Fixed);
        assert!((ev.t - 0.7).abs() < 1e-15);
        assert_eq!(post.v, 2.0);
        assert_eq!(ev.d_action, 0.0);
    }

    #[test]
    fn improved_action_does_not_jump_at_impact() {
        let sys = system("2 + 0.5*sin(tau)", 0.01, 2.0);
        let mut s = FermiState {
            t: 0.0,
            x: 0.3,
            v: 1.7,
            eps: 0.01,
        };
        for _ in 0..40 {
            let (ev, post) = sys.next_event(&s).unwrap();
            if ev.wall == Wall::Moving {
                assert!(ev.d_action.abs() > 1e-4);
                assert!(ev.d_improved.abs() < 1e-13, "{}", ev.d_improved);
            }
            s = post;
        }
    }

    #[test]
    fn rejects_slow_particle() {
        let sys = system("1 + 0.4*tau", 0.4, 1.0);
        let err = sys
            .next_event(&FermiState {
                t: 0.0,
                x: 0.0,
                v: 0.1,
                eps: 0.4,
            })
            .unwrap_err();
        assert!(matches!(err, FermiError::Adiabatic { .. }));
    }

    #[test]
    fn static_box_conserves_action() {
        let sys = system("1.5", 0.1, 1e4);
        let s0 = FermiState {
            t: 0.0,
            x: 0.2,
            v: 1.0,
            eps: 0.1,
        };
        let run = sys
            .simulate(
                s0,
                1.5e4,
                &Sampling {
                    grid: 100,
                    ..Sampling::default()
                },
            )
            .unwrap();
        assert!(run.impacts >= 10_000);
        let i0 = run.samples[0].action;
        for smp in &run.samples {
            assert!((smp.action - i0).abs() <= 1e-12 * i0);
        }
    }

    #[test]
    fn grid_includes_end_point() {
        let sys = system("2 + 0.5*sin(tau)", 0.05, 1.0);
        let s0 = FermiState {
            t: 0.0,
            x: 1.0,
            v: 1.0,
            eps: 0.05,
        };
        let run = sys
            .simulate(
                s0,
                20.0,
                &Sampling {
                    grid: 10,
                    events: false,
                    ..Sampling::default()
                },
            )
            .unwrap();
        assert_eq!(run.samples.len(), 11);
        assert_eq!(run.samples.last().unwrap().t, 20.0);
        assert_eq!(run.final_state.t, 20.0);
    }
}
