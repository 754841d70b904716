//! Three small views of the simulations for a static web page. Every
//! operation returns a flat `f64` buffer so the page can draw it directly.

use adiabatic_core::fermi_ulam::{FermiState, FermiUlam};
use adiabatic_core::harness::{piston_comparison, Scenario};
use adiabatic_core::piston::{Particle, Side};
use adiabatic_core::profile::Profile;
use adiabatic_core::sampling::Sampling;
use adiabatic_core::waveguide::{RayState, Waveguide};

mod wasm;

const POINTS: usize = 400;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// `(t, I, I_hat)` triples of a particle between a fixed and a moving wall,
/// sampled on a uniform grid over slow time `[0, horizon]`.
pub fn fermi_series(profile: &str, eps: f64, x: f64, v: f64, horizon: f64) -> Result<Vec<f64>, String> {
    let sys = FermiUlam::new(Profile::parse(profile).map_err(err)?, eps, 0.0, horizon).map_err(err)?;
    let grid = Sampling {
        events: false,
        grid: POINTS,
        stride: 1,
        keep_events: false,
    };
    let run = sys
        .simulate(FermiState { t: 0.0, x, v, eps }, horizon / eps, &grid)
        .map_err(err)?;
    Ok(run
        .samples
        .iter()
        .flat_map(|s| [eps * s.t, s.action, s.improved])
        .collect())
}

/// Polyline of a ray, `(X, y, d(X))` at the launch and at every reflection,
/// with `X` the slow coordinate. The path stops after `max_bounces`.
pub fn ray_path(
    profile: &str,
    eps: f64,
    y: f64,
    angle: f64,
    horizon: f64,
    max_bounces: usize,
) -> Result<Vec<f64>, String> {
    let guide = Waveguide::new(Profile::parse(profile).map_err(err)?, eps, -1.05 * horizon, 1.05 * horizon)
        .map_err(err)?;
    let mut r = RayState {
        x: 0.0,
        y,
        px: angle.cos(),
        py: angle.sin(),
        eps,
        s: 0.0,
    };
    let mut out = Vec::new();
    let push = |r: &RayState, out: &mut Vec<f64>| -> Result<(), String> {
        let d = guide.wall(r.x).map_err(err)?.d;
        out.extend([eps * r.x, r.y, d]);
        Ok(())
    };
    push(&r, &mut out)?;
    let s_end = horizon / eps;
    for _ in 0..max_bounces {
        let (ev, next) = match guide.next_event(&r) {
            Ok(e) => e,
            // Leaving the validated range ends the path.
            Err(_) => break,
        };
        if ev.s > s_end {
            break;
        }
        push(&next, &mut out)?;
        r = next;
    }
    Ok(out)
}

/// `(t_slow, X_exact, X_effective)` triples for a piston between one left
/// and one right particle with actions `left` and `right`.
pub fn piston_tracks(eps: f64, x0: f64, left: f64, right: f64, horizon: f64) -> Result<Vec<f64>, String> {
    let length = 2.0;
    if !(x0 > 0.05 && x0 < length - 0.05) {
        return Err("X0 must lie inside (0.05, 1.95)".into());
    }
    let scenario = Scenario::Piston {
        length,
        x: x0,
        eps_p: 0.0,
        particles: vec![
            Particle {
                side: Side::Left,
                x: 0.37 * x0,
                p: std::f64::consts::PI * left / x0,
            },
            Particle {
                side: Side::Right,
                x: x0 + 0.61 * (length - x0),
                p: -std::f64::consts::PI * right / (length - x0),
            },
        ],
    };
    let (sys, t_end) = scenario.piston(eps, horizon);
    let grid = Sampling {
        events: false,
        grid: POINTS,
        stride: 1,
        keep_events: false,
    };
    let cmp = piston_comparison(&sys, t_end, &grid).map_err(err)?;
    let mut out = Vec::with_capacity(3 * cmp.exact.samples.len());
    let mut k = 0;
    for s in &cmp.exact.samples {
        while k + 1 < cmp.effective.len() && cmp.effective[k + 1].t <= s.t {
            k += 1;
        }
        let a = cmp.effective[k];
        let x_eff = match cmp.effective.get(k + 1) {
            Some(b) if b.t > a.t => a.q + (b.q - a.q) * (s.t - a.t) / (b.t - a.t),
            _ => a.q,
        };
        out.extend([eps * s.t, s.x, x_eff]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fermi_improved_is_flatter() {
        let s = fermi_series("2 + 0.5*sin(tau)", 0.01, 0.7, 1.3, 1.0).unwrap();
        assert_eq!(s.len() % 3, 0);
        let (i0, h0) = (s[1], s[2]);
        let raw = s.chunks(3).map(|c| (c[1] - i0).abs()).fold(0.0, f64::max);
        let imp = s.chunks(3).map(|c| (c[2] - h0).abs()).fold(0.0, f64::max);
        assert!(imp < 0.1 * raw);
    }

    #[test]
    fn ray_stays_inside() {
        let p = ray_path("1 + 0.3*sin(tau)", 0.05, 0.5, 0.6, 5.0, 500).unwrap();
        assert!(p.len() > 30);
        for c in p.chunks(3) {
            assert!(c[1] >= -1e-12 && c[1] <= c[2] + 1e-12);
        }
    }

    #[test]
    fn piston_tracks_align() {
        let t = piston_tracks(0.02, 0.7, 1.0, 1.0, 2.0).unwrap();
        assert!(t.len() > 300);
        for c in t.chunks(3) {
            assert!((c[1] - c[2]).abs() < 0.05);
        }
    }

    #[test]
    fn bad_profile_is_reported() {
        assert!(fermi_series("2 +", 0.01, 0.7, 1.3, 1.0).is_err());
    }
}
