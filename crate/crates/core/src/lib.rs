//! FitzHugh-Nagumo monodomain equations under funnel output feedback.
//!
//! The crate provides a P1 finite element and a spectral Galerkin
//! semidiscretization, an adaptive Bogacki-Shampine integrator, the heart-beat
//! tracking experiment, and executable checks of the controller's guarantees.

pub mod closed_loop;
pub mod config;
pub mod error;
pub mod fem;
pub mod funnel;
pub mod integrate;
pub mod io;
pub mod model;
pub mod reference;
pub mod scenario;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
