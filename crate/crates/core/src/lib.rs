//! Characteristic flows, kinetic distance diagnostics, Poisson and VPME
//! field solvers and a particle Picard scheme for Vlasov–Poisson in
//! uniformly convex domains.

pub mod error;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod kinetic;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use field::{
    BoundaryCondition, DensitySpec, FieldModel, FieldSource, PoissonSolution, PolarGrid, VpmeMethod,
};
pub use flow::{advance, kinetic_distance, reflect, FlowOptions, PhaseState, ReflectionEvent, Trajectory};
pub use geometry::{ConvexDomain, Domain2, DomainKind, BOUNDARY_TOL};
pub use kinetic::{InitialDataSpec, ParticleEnsemble, Profile};
