//! Connectivity-preserving coordination of multi-agent networks with
//! time-varying communication delays.
//!
//! The crate covers the whole loop: building the static communication graph
//! from initial positions, the bounded connectivity potential and its
//! parameter calculus, bounded-delay channels, single-integrator and
//! two-link Euler–Lagrange agent models with proportional-plus-damping
//! control, a fixed-step delay integrator with Lyapunov/connectivity/consensus
//! monitors, and numeric checks of the damping-gain conditions and the
//! integral inequalities they rest on.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod delay;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod output;
pub mod potential;
pub mod report;
pub mod simulator;
pub mod verify;

pub use error::{Error, Result};
