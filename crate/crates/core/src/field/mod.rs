//! Densities and the fields they generate.

pub mod density;
pub mod green;
pub mod grid;
pub mod model;
pub mod poisson;

pub use density::{appendix_density, calibrate_bump, field_bound_estimate, DensityKind, DensitySpec};
pub use green::{disk_green_field, AdaptiveGreen, GreenField, GreenQuadrature};
pub use grid::{PolarGrid, RingBoundary, RingSolver};
pub use model::{FieldModel, FieldSource, OutgoingCertificate};
pub use poisson::{
    boundary_integral, grid_poisson_solve, vpme_poisson_solve, vpme_split_solve, BoundaryCondition,
    Equation, PoissonSolution, SolverStats, SplitParts, VpmeMethod, VpmeOptions,
};
