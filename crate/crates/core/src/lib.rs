//! Explicit P1 finite-element solver for the time-domain Maxwell equation
//! for the electric field, written as a vector wave equation with divergence
//! penalization:
//!
//! ```text
//! (ε ∂ₜₜe, v) + (∇e, ∇v) + (∇·(εe), ∇·v) − (∇·e, ∇·v) + (∂ₜe, v)_∂Ω = (f, v)
//! ```
//!
//! Mass lumping turns both the interior and boundary mass matrices diagonal,
//! so the centered (leapfrog) time scheme needs no linear solves.
//!
//! Modules, bottom-up:
//! - [`mesh`]: simplicial meshes, the square/disk mesh family, mesh I/O
//! - [`fespace`]: permittivity fields, nodal vector fields, quadrature
//! - [`assembly`]: sparse and diagonal operators
//! - [`solver`]: the time stepper, CFL estimates and energy monitor
//! - [`verify`]: manufactured solution, error norms, convergence studies
//! - [`cli`]: command-line front end

pub mod error;
pub mod assembly;
pub mod cli;
pub mod fespace;
pub mod mesh;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
