//! Angle variable and the sawtooth `f(phi)` shared by all three systems.
//!
//! The angle is zero at the reference wall, reaches `pi` at the opposite
//! wall and returns to `2 pi` on the way back. `f(phi)` equals `phi` on the
//! outbound leg and `phi - 2 pi` on the return leg; it jumps from `pi` to
//! `-pi` at the far wall and is continuous at the reference wall.

use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPhase {
    /// Angle in `[0, 2 pi)`.
    pub phi: f64,
    /// One-sided sawtooth value, `[-pi, pi]`.
    pub f: f64,
}

/// Phase of a point at reduced distance `u = distance / width` from the
/// reference wall, moving away from it when `outbound`.
///
/// At `u = 1` the outbound side gives `f = pi` (just before reflection) and
/// the return side gives `f = -pi` (just after).
pub fn wall_phase(u: f64, outbound: bool) -> WallPhase {
    if outbound {
        WallPhase {
            phi: PI * u,
            f: PI * u,
        }
    } else {
        let phi = PI * (2.0 - u);
        WallPhase {
            phi: if phi >= TAU { phi - TAU } else { phi },
            f: -PI * u,
        }
    }
}

/// `f(phi)` away from the discontinuity at `phi = pi`.
pub fn sawtooth(phi: f64) -> f64 {
    let phi = phi.rem_euclid(TAU);
    if phi < PI {
        phi
    } else {
        phi - TAU
    }
}
