//! Numerical laboratory for the vector Allen-Cahn equation with a
//! double-sphere potential: heteroclinic profiles, diffuse and sharp-interface
//! solvers, matched-asymptotic approximate solutions and spectral bounds.

pub mod diffuse;
pub mod error;
pub mod expansion;
pub mod fields;
pub mod harness;
pub mod numerics;
pub mod potential;
pub mod profile;
pub mod sharp;
pub mod spectral;

pub use error::{LabError, Result};
