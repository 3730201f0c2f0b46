//! Semidefinite relaxations of the quadratic assignment problem under a
//! signal-plus-noise model: instance generators, a conic solver, dual
//! certificates and a sweep harness.

pub mod assignment;
pub mod certificate;
pub mod error;
pub mod formulation;
pub mod harness;
pub mod instance;
pub mod io;
pub mod linalg;
pub mod plot;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
