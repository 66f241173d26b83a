//! Open-system simulation of the micromaser and of a voltage-biased
//! Josephson junction driving a microwave cavity.
//!
//! Units: every rate and energy is measured in the cavity damping rate
//! `gamma`, with `hbar = gamma = 1`.

pub mod error;
pub mod fock;
pub mod models;
pub mod observables;
pub mod semiclassical;
pub mod solvers;
pub mod special;
pub mod superop;

mod banded;
mod ode;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, FockSpace, Operator, C64};
pub use superop::Superoperator;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
