//! Path following for underactuated mechanical systems by orbital
//! stabilization of an implicit curve.
//!
//! The crate is organised bottom-up:
//!
//! * [`curves`]: implicit Jordan curves `Φ(q) = 0` and their critical set.
//! * [`target`]: the planar oscillator whose attractive limit cycle is the curve.
//! * [`plants`]: port-Hamiltonian plant models (3-dof LTI benchmark, surface vessel).
//! * [`control`]: immersion-and-invariance feedback laws and manifold verifiers.
//! * [`sim`]: fixed-step RK4 closed-loop simulation and metrics.
//! * [`cli`]: scenario files, builtin scenarios, CSV/SVG/JSON output, sweeps.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod curves;
pub mod plants;
pub mod sim;
pub mod target;

pub use curves::{Aabb, CurveField, CurveShape, ImplicitCurve, Point};
