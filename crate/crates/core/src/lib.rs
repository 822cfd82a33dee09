//! Oscillation and spectral analysis of Sturm–Liouville problems
//!
//! ```text
//! -(p y')' + (q - λ r) y = 0   on [0, 1]
//! ```
//!
//! with piecewise-constant `p > 0`, distributional `q` and `r` (piecewise
//! quadratic densities plus point masses) and self-adjoint separated
//! boundary conditions given by two angles.
//!
//! The crate offers two independent routes to every spectral quantity:
//! shooting on a regularized first-order system ([`shooting`]) and inertia
//! counts of Galerkin discretizations of the quadratic form ([`forms`]).
//! [`spectrum`] combines them to locate eigenvalues on both sides of a
//! positivity point and to check oscillation properties of eigenfunctions.

pub mod forms;
pub mod linalg;
pub mod omega;
pub mod par;
pub mod poly;
pub mod problem;
pub mod schema;
pub mod shooting;
pub mod spectrum;

pub use forms::{FormError, FormSet, Mesh};
pub use linalg::{Inertia, SymBandMatrix};
pub use omega::{build_omega, OmegaFunction};
pub use problem::{
    Atom, BoundaryAngles, DistributionalCoefficient, PiecewiseConstant, PiecewisePoly, Problem, ProblemError, Side,
};
pub use schema::{ProblemFile, SchemaError};
pub use shooting::{Direction, ShootConfig, ShootError, ShootResult};
pub use spectrum::{EigenvalueRecord, SpectrumConfig, SpectrumError, SpectrumReport, VerificationReport};

/// Any failure surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Shoot(#[from] ShootError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}
