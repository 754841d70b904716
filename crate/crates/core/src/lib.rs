//! Exact event-driven simulation of three impact systems (a particle
//! between a fixed and a slowly moving wall, rays in a slowly irregular
//! planar waveguide, and a heavy piston in a gas of light particles), with
//! action-angle diagnostics, first-order improved adiabatic invariants and
//! averaged effective dynamics.

// Negated comparisons keep NaN on the rejecting side of every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fermi_ulam;
pub mod numerics;
pub mod phase;
pub mod profile;
pub mod sampling;
pub mod waveguide;
pub mod piston;
pub mod harness;
pub mod cli;
