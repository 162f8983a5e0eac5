//! Diffusion limits of scaled linear Boltzmann equations with oscillating
//! scattering kernels: cell problems, effective coefficients, the homogenized
//! drift-diffusion equation and a stiff kinetic reference solver.

pub mod error;
pub mod fft;
pub mod linalg;
pub mod mv_algebra;
pub mod phase_space;
pub mod collision;
pub mod cell_solver;
pub mod effective;
pub mod macro_solver;
pub mod kinetic;
pub mod harness;

pub use error::{Error, Result};
