//! Steady-state heat transport through three qubits with a resonant
//! trilinear coupling, each qubit attached to its own thermal bath.
//!
//! The pipeline is [`model`] (parameters and baths) → [`eigen`] (closed-form
//! spectrum and dissipation channels) → [`steady`] (rate equations, steady
//! state, heat currents) → [`functions`] (amplifier, valve, rectifier,
//! stabilizer, switch). [`sweep`] and [`config`] drive parameter scans and
//! their CSV output.

// NaN-rejecting `!(x > 0.0)` checks and index loops over 8×8 matrices are intentional
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod dd;
pub mod config;
pub mod eigen;
pub mod error;
pub mod functions;
pub mod model;
pub mod steady;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};
pub use model::{validate_params, BathSpec, Device, DeviceParams, Spectrum, Terminal};
pub use steady::{evaluate, Evaluation, HeatCurrents, SteadyState};
