//! A piston of mass `eps^-2` between light unit-mass particles in a
//! container `[0, L]`. All motion between collisions is uniform, so every
//! collision time is found in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    find_root, integrate_with, matched_action, matching_residual, NumericsError, PhasePoint,
    Potential, RootProblem, SeparableSystem,
};
use crate::phase::wall_phase;
use crate::sampling::Sampling;

/// Two piston collisions closer than this in time abort the run.
pub const TIE_TOL: f64 = 1e-12;

/// Relative energy drift that aborts the run.
pub const ENERGY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PistonError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("particles {first} and {second} reach the piston within {gap:e} of each other at t = {t}; the dynamics is undefined")]
    SimultaneousCollision {
        t: f64,
        first: usize,
        second: usize,
        gap: f64,
    },
    #[error("particle {index} crossed the piston at t = {t} (x = {x}, X = {piston})")]
    Overtaking {
        t: f64,
        index: usize,
        x: f64,
        piston: f64,
    },
    #[error("piston reaches the container wall at t = {t}")]
    PistonAtWall { t: f64 },
    #[error("relative energy drift {drift:e} exceeds the tolerance at t = {t}")]
    EnergyDrift { t: f64, drift: f64 },
    #[error("particle {index} has zero momentum")]
    ZeroMomentum { index: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Particle {
    pub side: Side,
    pub x: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PistonSystem {
    #[serde(rename = "L")]
    pub length: f64,
    pub eps: f64,
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub particles: Vec<Particle>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PistonActionSet {
    #[serde(rename = "I")]
    pub actions: Vec<f64>,
    pub phi: Vec<f64>,
    #[serde(rename = "I_tilde")]
    pub improved: Vec<f64>,
    #[serde(rename = "P_check")]
    pub p_check: f64,
    #[serde(rename = "I_sum_l")]
    pub sum_left: f64,
    #[serde(rename = "I_sum_r")]
    pub sum_right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    ParticleWall,
    ParticlePiston,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub kind: CollisionKind,
    pub particle: usize,
    pub p_pre: f64,
    pub p_post: f64,
    #[serde(rename = "P_pre")]
    pub piston_pre: f64,
    #[serde(rename = "P_post")]
    pub piston_post: f64,
    /// Piston position at the collision.
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "dI")]
    pub d_action: f64,
    #[serde(rename = "dI_tilde")]
    pub d_improved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PistonSample {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "eps_P")]
    pub eps_p: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "I")]
    pub actions: Vec<f64>,
    #[serde(rename = "I_tilde")]
    pub improved: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PistonRun {
    pub events: Vec<CollisionEvent>,
    pub samples: Vec<PistonSample>,
    pub collisions: usize,
    pub max_energy_drift: f64,
    pub final_state: PistonSystem,
}

/// Action after a piston collision from the velocity-law update expressed
/// in actions. For a right particle pass `L - X` and `-P`.
pub fn action_jump_piston(action: f64, piston_p: f64, x: f64, mass: f64) -> f64 {
    let drift = piston_p * x / (PI * mass);
    action - 2.0 * drift + 2.0 / (mass + 1.0) * (drift - action)
}

fn mirror(side: Side, length: f64, x: f64, piston_p: f64) -> (f64, f64) {
    match side {
        Side::Left => (x, piston_p),
        Side::Right => (length - x, -piston_p),
    }
}

/// Action after a piston collision from conservation of the shifted
/// Hamiltonian with `P_hat` and the other phases frozen. `piston_p` is the
/// physical pre-collision momentum; `x` is the width on the particle's side.
pub fn matched_action_piston(action: f64, piston_p: f64, x: f64, mass: f64) -> f64 {
    let (a, b) = lemma_coefficients(action, piston_p, x, mass);
    matched_action(a, b, action)
}

/// Relative mismatch of the shifted-Hamiltonian law across a collision.
pub fn piston_matching_residual(action: f64, after: f64, piston_p: f64, x: f64, mass: f64) -> f64 {
    let (a, b) = lemma_coefficients(action, piston_p, x, mass);
    matching_residual(a, b, action, after)
}

fn lemma_coefficients(action: f64, piston_p: f64, x: f64, mass: f64) -> (f64, f64) {
    let q = piston_p + PI * action / x;
    (
        PI * PI * (mass + 1.0) / (2.0 * x * x * mass),
        PI * q / (mass * x),
    )
}

/// Effective piston potential with aggregate actions on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PistonPotential {
    pub sum_left: f64,
    pub sum_right: f64,
    pub length: f64,
}

impl PistonPotential {
    pub fn energy(&self, x: f64) -> f64 {
        let r = self.length - x;
        PI * PI * (self.sum_left * self.sum_left / (x * x) + self.sum_right * self.sum_right / (r * r))
            / 2.0
    }

    pub fn force(&self, x: f64) -> f64 {
        let r = self.length - x;
        PI * PI * (self.sum_left * self.sum_left / (x * x * x) - self.sum_right * self.sum_right / (r * r * r))
    }

    /// Minimum of the potential, located by bracketed root finding on the
    /// force.
    pub fn equilibrium(&self) -> Result<f64, PistonError> {
        if !(self.sum_left > 0.0 && self.sum_right > 0.0 && self.length > 0.0) {
            return Err(PistonError::Invalid("equilibrium needs positive actions and length".into()));
        }
        // Scaled so that the function is monotone and free of overflow.
        let g = |x: f64| {
            let r = self.length - x;
            self.sum_right * self.sum_right * x * x * x - self.sum_left * self.sum_left * r * r * r
        };
        let root = find_root(RootProblem::new(g, 0.0, self.length).with_tol(1e-15))?;
        Ok(root)
    }

    /// Small-oscillation period in slow time.
    pub fn small_period(&self) -> Result<f64, PistonError> {
        let x = self.equilibrium()?;
        let r = self.length - x;
        let k = 3.0 * PI * PI * (self.sum_left.powi(2) / x.powi(4) + self.sum_right.powi(2) / r.powi(4));
        Ok(2.0 * PI / k.sqrt())
    }
}

struct Scaled {
    pot: PistonPotential,
    eps: f64,
}

impl Potential for Scaled {
    fn value(&self, q: f64) -> Result<f64, NumericsError> {
        Ok(self.eps * self.pot.energy(q))
    }
    fn slope(&self, q: f64) -> Result<f64, NumericsError> {
        if !(q > 0.0 && q < self.pot.length) {
            return Err(NumericsError::Potential {
                q,
                message: "piston left the container".into(),
            });
        }
        Ok(-self.eps * self.pot.force(q))
    }
}

/// Averaged piston motion `(t, X, eps P)` from `t0` to `t_end` with step `h`
/// in fast time, sampled every `sample_every` steps.
#[allow(clippy::too_many_arguments)]
pub fn effective_piston(
    pot: PistonPotential,
    eps: f64,
    t0: f64,
    x0: f64,
    eps_p0: f64,
    t_end: f64,
    h: f64,
    sample_every: usize,
) -> Result<Vec<PhasePoint>, PistonError> {
    if !(x0 > 0.0 && x0 < pot.length) {
        return Err(PistonError::Invalid(format!("X0 = {x0} is outside (0, L)")));
    }
    let mut sys = SeparableSystem::new(eps, h, x0, eps_p0)?;
    sys.t = t0;
    let scaled = Scaled { pot, eps };
    let length = pot.length;
    let out = integrate_with(sys, &scaled, t_end, sample_every, |s| {
        if s.q > 0.0 && s.q < length {
            Ok(())
        } else {
            Err(NumericsError::Potential {
                q: s.q,
                message: "piston left the container; reduce the step".into(),
            })
        }
    })?;
    Ok(out)
}

impl PistonSystem {
    pub fn mass(&self) -> f64 {
        1.0 / (self.eps * self.eps)
    }

    pub fn velocity(&self) -> f64 {
        self.eps * self.eps * self.p
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.eps * self.eps * self.p * self.p
            + self.particles.iter().map(|q| 0.5 * q.p * q.p).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), PistonError> {
        let finite = [self.length, self.eps, self.t, self.x, self.p]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.particles.iter().any(|q| !(q.x.is_finite() && q.p.is_finite())) {
            return Err(PistonError::Invalid("non-finite value".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0 + f64::EPSILON) {
            return Err(PistonError::Invalid(format!("eps = {} must lie in (0, 1]", self.eps)));
        }
        if !(self.x > 0.0 && self.x < self.length) {
            return Err(PistonError::Invalid(format!(
                "X = {} must lie in (0, L = {})",
                self.x, self.length
            )));
        }
        for (i, q) in self.particles.iter().enumerate() {
            let ok = match q.side {
                Side::Left => q.x >= 0.0 && q.x <= self.x,
                Side::Right => q.x >= self.x && q.x <= self.length,
            };
            if !ok {
                return Err(PistonError::Invalid(format!(
                    "particle {i} at x = {} is not on its {:?} side",
                    q.x, q.side
                )));
            }
            if q.p == 0.0 {
                return Err(PistonError::ZeroMomentum { index: i });
            }
        }
        Ok(())
    }

    fn width(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.x,
            Side::Right => self.length - self.x,
        }
    }

    /// Action and one-sided sawtooth of particle `i`.
    fn action_phase(&self, i: usize) -> (f64, f64, f64) {
        let q = &self.particles[i];
        let w = self.width(q.side);
        let (u, outbound) = match q.side {
            Side::Left => (q.x / w, q.p > 0.0),
            Side::Right => ((self.length - q.x) / w, q.p < 0.0),
        };
        let ph = wall_phase(u, outbound);
        (q.p.abs() * w / PI, ph.phi, ph.f)
    }

    fn improved_of(&self, i: usize, action: f64, f: f64) -> f64 {
        let e2p = self.eps * self.eps * self.p;
        match self.particles[i].side {
            Side::Left => action - e2p * self.x * f / (PI * PI),
            Side::Right => action + e2p * (self.length - self.x) * f / (PI * PI),
        }
    }

    pub fn actions(&self) -> PistonActionSet {
        let n = self.particles.len();
        let mut set = PistonActionSet {
            actions: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            improved: Vec::with_capacity(n),
            p_check: self.eps * self.p,
            sum_left: 0.0,
            sum_right: 0.0,
        };
        let (mut sl, mut sr) = (0.0, 0.0);
        for i in 0..n {
            let (a, phi, f) = self.action_phase(i);
            set.actions.push(a);
            set.phi.push(phi);
            set.improved.push(self.improved_of(i, a, f));
            match self.particles[i].side {
                Side::Left => sl += a * a,
                Side::Right => sr += a * a,
            }
        }
        set.sum_left = sl.sqrt();
        set.sum_right = sr.sqrt();
        set
    }

    /// Effective potential built from the current actions.
    pub fn potential(&self) -> PistonPotential {
        let a = self.actions();
        PistonPotential {
            sum_left: a.sum_left,
            sum_right: a.sum_right,
            length: self.length,
        }
    }

    fn advance(&mut self, dt: f64) {
        self.t += dt;
        self.x += self.velocity() * dt;
        for q in &mut self.particles {
            q.x += q.p * dt;
        }
    }

    /// Next collision and the state just after it.
    pub fn next_collision(&self) -> Result<(CollisionEvent, PistonSystem), PistonError> {
        let v_piston = self.velocity();
        let mut best: Option<(f64, usize, CollisionKind)> = None;
        let mut piston_times: [(f64, usize); 2] = [(f64::INFINITY, usize::MAX); 2];
        for (i, q) in self.particles.iter().enumerate() {
            let (wall, piston) = match q.side {
                Side::Left => (
                    (q.p < 0.0).then(|| q.x / -q.p),
                    (q.p > v_piston).then(|| ((self.x - q.x) / (q.p - v_piston)).max(0.0)),
                ),
                Side::Right => (
                    (q.p > 0.0).then(|| (self.length - q.x) / q.p),
                    (q.p < v_piston).then(|| ((q.x - self.x) / (v_piston - q.p)).max(0.0)),
                ),
            };
            for (dt, kind) in [(wall, CollisionKind::ParticleWall), (piston, CollisionKind::ParticlePiston)] {
                let Some(dt) = dt else { continue };
                if kind == CollisionKind::ParticlePiston {
                    if dt < piston_times[0].0 {
                        piston_times[1] = piston_times[0];
                        piston_times[0] = (dt, i);
                    } else if dt < piston_times[1].0 {
                        piston_times[1] = (dt, i);
                    }
                }
                if best.is_none_or(|(b, _, _)| dt < b) {
                    best = Some((dt, i, kind));
                }
            }
        }
        let wall_time = if v_piston < 0.0 {
            self.x / -v_piston
        } else if v_piston > 0.0 {
            (self.length - self.x) / v_piston
        } else {
            f64::INFINITY
        };
        let Some((dt, i, kind)) = best else {
            return Err(PistonError::PistonAtWall {
                t: self.t + wall_time,
            });
        };
        if wall_time <= dt {
            return Err(PistonError::PistonAtWall {
                t: self.t + wall_time,
            });
        }
        if kind == CollisionKind::ParticlePiston {
            let gap = piston_times[1].0 - piston_times[0].0;
            if gap < TIE_TOL {
                return Err(PistonError::SimultaneousCollision {
                    t: self.t + dt,
                    first: piston_times[0].1,
                    second: piston_times[1].1,
                    gap,
                });
            }
        }

        let mut next = self.clone();
        next.advance(dt);
        let (a_pre, _, f_pre) = next.action_phase(i);
        let improved_pre = next.improved_of(i, a_pre, f_pre);
        let p_pre = next.particles[i].p;
        let piston_pre = next.p;
        match kind {
            CollisionKind::ParticleWall => {
                let q = &mut next.particles[i];
                q.x = match q.side {
                    Side::Left => 0.0,
                    Side::Right => next.length,
                };
                q.p = -q.p;
            }
            CollisionKind::ParticlePiston => {
                let e2 = next.eps * next.eps;
                let v = p_pre;
                let big_v = e2 * next.p;
                let kick = 2.0 * (v - big_v) / (1.0 + e2);
                next.p += kick;
                let q = &mut next.particles[i];
                q.x = next.x;
                q.p = 2.0 * big_v - v + e2 * kick;
            }
        }
        for (j, q) in next.particles.iter().enumerate() {
            let tol = 1e-9 * next.length;
            let crossed = match q.side {
                Side::Left => q.x > next.x + tol || q.x < -tol,
                Side::Right => q.x < next.x - tol || q.x > next.length + tol,
            };
            if crossed {
                return Err(PistonError::Overtaking {
                    t: next.t,
                    index: j,
                    x: q.x,
                    piston: next.x,
                });
            }
        }
        let (a_post, _, f_post) = next.action_phase(i);
        let improved_post = next.improved_of(i, a_post, f_post);
        let event = CollisionEvent {
            t: next.t,
            kind,
            particle: i,
            p_pre,
            p_post: next.particles[i].p,
            piston_pre,
            piston_post: next.p,
            x: next.x,
            d_action: a_post - a_pre,
            d_improved: improved_post - improved_pre,
        };
        Ok((event, next))
    }

    fn sample(&self) -> PistonSample {
        let a = self.actions();
        PistonSample {
            t: self.t,
            x: self.x,
            eps_p: self.eps * self.p,
            energy: self.energy(),
            actions: a.actions,
            improved: a.improved,
        }
    }

    /// Runs collisions up to `t_end`, checking energy after every event.
    pub fn simulate(&self, t_end: f64, sampling: &Sampling) -> Result<PistonRun, PistonError> {
        self.validate()?;
        if !(t_end >= self.t) {
            return Err(PistonError::Invalid("t_end precedes the initial time".into()));
        }
        let e0 = self.energy();
        let t0 = self.t;
        let mut s = self.clone();
        let mut samples = Vec::new();
        let mut events = Vec::new();
        let grid_on = sampling.grid > 0;
        let stride = sampling.stride.max(1);
        if grid_on || sampling.events {
            samples.push(s.sample());
        }
        let mut k = 1;
        let mut collisions = 0usize;
        let mut max_drift: f64 = 0.0;
        loop {
            let (event, next) = s.next_collision()?;
            let limit = event.t.min(t_end);
            while grid_on && k <= sampling.grid {
                let tg = sampling.grid_time(t0, t_end, k);
                if tg > limit {
                    break;
                }
                let mut flown = s.clone();
                flown.advance(tg - s.t);
                flown.t = tg;
                samples.push(flown.sample());
                k += 1;
            }
            if event.t > t_end {
                let dt = t_end - s.t;
                s.advance(dt);
                s.t = t_end;
                break;
            }
            let drift = (next.energy() - e0).abs() / e0;
            max_drift = max_drift.max(drift);
            if drift > ENERGY_TOL {
                return Err(PistonError::EnergyDrift { t: next.t, drift });
            }
            if sampling.events && collisions.is_multiple_of(stride) {
                let mut pre = s.clone();
                pre.advance(event.t - s.t);
                pre.t = event.t;
                samples.push(pre.sample());
                samples.push(next.sample());
            }
            if sampling.keep_events {
                events.push(event);
            }
            collisions += 1;
            s = next;
        }
        if !grid_on && sampling.events {
            samples.push(s.sample());
        }
        Ok(PistonRun {
            events,
            samples,
            collisions,
            max_energy_drift: max_drift,
            final_state: s,
        })
    }

    /// The same configuration with every momentum reversed.
    pub fn reversed(&self) -> PistonSystem {
        let mut r = self.clone();
        r.p = -r.p;
        for q in &mut r.particles {
            q.p = -q.p;
        }
        r
    }

    /// Width and momentum in the frame of `side`, for the mirrored formulas.
    pub fn mirrored(&self, side: Side) -> (f64, f64) {
        mirror(side, self.length, self.x, self.p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_particle(eps: f64, x: f64, p: f64, left: (f64, f64), right: (f64, f64)) -> PistonSystem {
        PistonSystem {
            length: 2.0,
            eps,
            t: 0.0,
            x,
            p,
            particles: vec![
                Particle { side: Side::Left, x: left.0, p: left.1 },
                Particle { side: Side::Right, x: right.0, p: right.1 },
            ],
        }
    }

    #[test]
    fn equal_masses_swap_velocities() {
        let s = two_particle(1.0, 1.0, 0.3, (0.5, 1.0), (1.9, 0.05));
        let (ev, next) = s.next_collision().unwrap();
        assert_eq!(ev.kind, CollisionKind::ParticlePiston);
        assert_eq!(ev.particle, 0);
        assert!((next.p - 1.0).abs() < 1e-15);
        assert!((next.particles[0].p - 0.3).abs() < 1e-15);
    }

    #[test]
    fn heavy_piston_at_rest() {
        let s = two_particle(0.1, 1.0, 0.0, (0.5, 1.0), (1.5, 1.0));
        let (ev, next) = s.next_collision().unwrap();
        assert_eq!(ev.kind, CollisionKind::ParticlePiston);
        assert!((next.particles[0].p + 99.0 / 101.0).abs() < 1e-15);
        assert!((next.energy() - s.energy()).abs() < 1e-14);
    }

    #[test]
    fn wall_collision_keeps_action() {
        let s = two_particle(0.1, 1.0, 0.0, (0.2, -1.0), (1.5, 1.0));
        let (ev, next) = s.next_collision().unwrap();
        assert_eq!(ev.kind, CollisionKind::ParticleWall);
        assert!((ev.t - 0.2).abs() < 1e-15);
        assert_eq!(next.particles[0].p, 1.0);
        assert_eq!(ev.d_action, 0.0);
    }

    #[test]
    fn jump_formula_cases() {
        let m = 100.0;
        let v = action_jump_piston(1.0, 0.0, 1.0, m);
        assert!((v - 99.0 / 101.0).abs() < 1e-15);
        // Leading order for a very heavy piston.
        let eps: f64 = 1e-4;
        let m = 1.0 / (eps * eps);
        let p = 0.5 / eps;
        let lead = -2.0 * p * 1.3 / (PI * m);
        let exact = action_jump_piston(1.0, p, 1.3, m) - 1.0;
        assert!((exact - lead).abs() < 1e-3 * lead.abs());
        // Equal masses with the piston matching the particle: signed value -I.
        let x = 1.2;
        let i = 0.7;
        assert!((action_jump_piston(i, PI * i / x, x, 1.0) + i).abs() < 1e-15);
    }

    #[test]
    fn improved_action_values() {
        // Left particle at phi = pi/2 with X = 1, eps P = 0.5, eps = 0.01.
        let s = PistonSystem {
            length: 2.0,
            eps: 0.01,
            t: 0.0,
            x: 1.0,
            p: 50.0,
            particles: vec![Particle { side: Side::Left, x: 0.5, p: PI }],
        };
        let a = s.actions();
        assert!((a.actions[0] - 1.0).abs() < 1e-15);
        assert!((a.improved[0] - (1.0 - 0.01 * 0.5 / (2.0 * PI))).abs() < 1e-15);
        assert!((a.improved[0] - 0.999_204).abs() < 1e-6);
        let rest = PistonSystem { p: 0.0, ..s };
        assert_eq!(rest.actions().improved[0], rest.actions().actions[0]);
    }

    #[test]
    fn dual_paths_agree() {
        let mut s = two_particle(0.05, 0.9, 4.0, (0.3, 1.1), (1.4, -1.7));
        let m = s.mass();
        let mut checked = 0;
        for _ in 0..2000 {
            let (ev, next) = s.next_collision().unwrap();
            if ev.kind == CollisionKind::ParticlePiston {
                let side = s.particles[ev.particle].side;
                let (w, p) = mirror(side, next.length, ev.x, ev.piston_pre);
                let i_pre = ev.p_pre.abs() * w / PI;
                let i_post = ev.p_post.abs() * w / PI;
                assert!((action_jump_piston(i_pre, p, w, m) - i_post).abs() < 1e-12);
                assert!((matched_action_piston(i_pre, p, w, m) - i_post).abs() < 1e-12);
                assert!(piston_matching_residual(i_pre, i_post, p, w, m) < 1e-10);
                // The improved action does not jump at its own collision.
                assert!(ev.d_improved.abs() < 1e-12, "{}", ev.d_improved);
                checked += 1;
            }
            s = next;
        }
        assert!(checked > 100);
    }

    #[test]
    fn energy_is_conserved() {
        let s = two_particle(0.05, 0.9, 4.0, (0.3, 1.1), (1.4, -1.7));
        let run = s.simulate(2000.0, &Sampling::events_only()).unwrap();
        assert!(run.collisions > 1000);
        assert!(run.max_energy_drift < 1e-12);
    }

    #[test]
    fn reversal_returns() {
        let s = two_particle(0.1, 0.9, 2.0, (0.3, 1.1), (1.4, -1.7));
        let fwd = s.simulate(50.0, &Sampling::events_only()).unwrap().final_state;
        let mut back = fwd.reversed();
        back.t = 0.0;
        let ret = back.simulate(50.0, &Sampling::events_only()).unwrap().final_state;
        assert!((ret.x - s.x).abs() < 1e-8);
        assert!((ret.p + s.p).abs() < 1e-8);
        for (a, b) in ret.particles.iter().zip(&s.particles) {
            assert!((a.x - b.x).abs() < 1e-8);
            assert!((a.p + b.p).abs() < 1e-8);
        }
    }

    #[test]
    fn simultaneous_piston_hits_abort() {
        let s = two_particle(0.1, 1.0, 0.0, (0.5, 1.0), (1.5, -1.0));
        assert!(matches!(
            s.next_collision(),
            Err(PistonError::SimultaneousCollision { .. })
        ));
    }

    #[test]
    fn equilibria() {
        let pot = PistonPotential { sum_left: 1.0, sum_right: 1.0, length: 2.0 };
        assert!((pot.equilibrium().unwrap() - 1.0).abs() < 1e-14);
        let pot = PistonPotential { sum_left: 2.0, sum_right: 1.0, length: 3.0 };
        let x = pot.equilibrium().unwrap();
        let a = 2f64.powf(2.0 / 3.0);
        assert!((x / (3.0 - x) - a).abs() < 1e-10);
        assert!((x - 3.0 * a / (1.0 + a)).abs() < 1e-12);
        assert!(pot.force(x).abs() < 1e-9);
    }

    #[test]
    fn effective_energy_is_second_order() {
        let pot = PistonPotential { sum_left: 1.0, sum_right: 1.0, length: 2.0 };
        let eps = 0.01;
        let drift = |h: f64| {
            let tr = effective_piston(pot, eps, 0.0, 0.8, 0.0, 1.0 / eps, h, 1).unwrap();
            let e = |pt: &PhasePoint| 0.5 * pt.p * pt.p + pot.energy(pt.q);
            let e0 = e(&tr[0]);
            tr.iter().map(|pt| (e(pt) - e0).abs()).fold(0.0, f64::max)
        };
        let ratio = drift(2.0) / drift(1.0);
        assert!((3.0..5.0).contains(&ratio), "{ratio}");
    }
}
