//! Finite element solvers for Darcy flow in heterogeneous anisotropic media.

pub mod assembly;
pub mod cli;
pub mod dg;
pub mod error;
pub mod fem;
pub mod interface;
pub mod linsolve;
pub mod material;
pub mod mesh;
pub mod verification;

pub use error::{FemError, Result};
