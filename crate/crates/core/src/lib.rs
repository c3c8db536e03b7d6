//! Plane-wave ultra-weak variational formulation (UWVF) of the time-harmonic
//! Maxwell equations.
//!
//! The unknowns are impedance traces on element boundaries, represented in a
//! plane-wave basis on each element of an unstructured tetrahedral, wedge or
//! hexahedral mesh whose faces may be curved. The crate covers mesh topology,
//! surface quadrature, basis construction, assembly of the block system
//! `(I - D^-1 C) x = D^-1 b`, a BiCGstab solve in stored or matrix-free mode,
//! far-field post-processing and analytic reference solutions.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature; enable `libm` in that configuration to supply float intrinsics.
//! With `std`, assembly and the matrix-vector product run in parallel.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("uwvf-core needs either the `std` or the `libm` feature for float math");

pub mod assembly;
pub mod basis;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod par;
pub mod postprocess;
pub mod quadrature;
pub mod solver;

pub use num_complex::Complex64 as C64;

use thiserror::Error;

/// Crate-level error, one variant per pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh: {0}")]
    Mesh(#[from] mesh::MeshError),
    #[error("quadrature: {0}")]
    Quadrature(#[from] quadrature::QuadratureError),
    #[error("basis: {0}")]
    Basis(#[from] basis::BasisError),
    #[error("assembly: {0}")]
    Assembly(#[from] assembly::AssemblyError),
    #[error("solver: {0}")]
    Solver(#[from] solver::SolverError),
    #[error("postprocess: {0}")]
    Postprocess(#[from] postprocess::PostprocessError),
    #[error("oracle: {0}")]
    Oracle(#[from] oracle::OracleError),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
