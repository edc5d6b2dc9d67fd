//! Concentrating solutions of the magnetic nonlinear Schrödinger equation
//! `(i∇ + A(εy))²u + u = |u|^{p−1}u`: ground states, gauge fields, the
//! corrected multi-bump ansatz, its residual and energy, and a discrete
//! Lyapunov–Schmidt solver producing genuine discrete solutions.

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod ansatz;
pub mod energy;
pub mod error;
pub mod field;
pub mod fieldio;
pub mod grid;
pub mod krylov;
pub mod ode;
pub mod operators;
pub mod radial;
pub mod reduction;
pub mod residual;
pub mod stencil;

pub use ansatz::{BumpConfig, PatchGeometry};
pub use energy::{EnergyBreakdown, ExpansionConstants, ExpansionFit, GaugeCheck, GaugeRefinement, Landscape, ScalingReport};
pub use error::{Error, Result};
pub use field::{CriticalKind, CriticalPoint, CriticalScan, FieldMatrix, ParamValue, Params, PotentialModel};
pub use grid::{Grid, Patch, PatchedField, RealField};
pub use radial::RadialProfile;
pub use reduction::{OuterResult, ProjectedSolve, ReductionState, SolverSettings};
