//! Capture into autoresonance for a pair of weakly coupled oscillators under
//! slowly chirped forcing.
//!
//! The crate is organised around the primary resonance equations
//!
//! ```text
//! A' = -i (2 t A + A* B / 2 + f)
//! B' = -i (4 t B + A^2 / 4)
//! ```
//!
//! * [`model`] holds every vector field (physical, slow, normalized,
//!   rotating-frame, leading envelope).
//! * [`reduction`] maps physical parameters to the normalized system.
//! * [`integrator`] is an adaptive Dormand–Prince 5(4) solver with dense output.
//! * [`asymptotics`] builds the algebraic expansions in powers of `1/t`.
//! * [`stability`] linearizes along those expansions.
//! * [`envelope`] analyses the oscillating neighbourhood of the bounded solution.
//! * [`experiments`] reproduces capture/non-capture runs, threshold scans and
//!   the neighbourhood run, and writes delimited output.

pub mod asymptotics;
pub mod envelope;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod model;
pub mod reduction;
pub mod stability;

mod dd;

pub use error::{Error, Result};
pub use num_complex::Complex64;
