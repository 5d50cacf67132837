use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point is not on the boundary (|xi| = {xi:e})")]
    NotOnBoundary { xi: f64 },

    #[error("domain is not uniformly convex (sampled minimum Hessian eigenvalue {min_eigenvalue:e})")]
    NotUniformlyConvex { min_eigenvalue: f64 },

    #[error("{what} did not converge in {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("adaptive quadrature exceeded its budget of {budget} evaluations (estimated error {error_estimate:e})")]
    QuadratureFailure { budget: usize, error_estimate: f64 },

    #[error("Neumann data incompatible: boundary flux {flux:.12e} does not balance mass {mass:.12e}")]
    IncompatibleNeumannData { flux: f64, mass: f64 },

    #[error("Neumann data violates the VPME condition: {0}")]
    NeumannConditionViolated(String),

    #[error("solver diverged at step {step} (energy {energy:e}, residual {residual:e})")]
    SolverDivergence { step: usize, energy: f64, residual: f64 },

    #[error("trajectory reached the grazing set at t = {t} (alpha = {alpha:e})")]
    GrazingStall { t: f64, alpha: f64 },

    #[error("integration exceeded {steps} steps")]
    StepLimitExceeded { steps: usize },

    #[error("initial data has empty support on the sample")]
    EmptySupport,

    #[error("initial data is not flat below the grazing threshold: f0 ranges over [{min}, {max}]")]
    FlatnessViolated { min: f64, max: f64 },

    #[error("{count} particles stalled at the grazing set while the data is declared flat there")]
    StalledParticles { count: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotOnBoundary { .. } => "NotOnBoundary",
            Error::NotUniformlyConvex { .. } => "NotUniformlyConvex",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::IncompatibleNeumannData { .. } => "IncompatibleNeumannData",
            Error::NeumannConditionViolated(_) => "NeumannConditionViolated",
            Error::SolverDivergence { .. } => "SolverDivergence",
            Error::GrazingStall { .. } => "GrazingStall",
            Error::StepLimitExceeded { .. } => "StepLimitExceeded",
            Error::EmptySupport => "EmptySupport",
            Error::FlatnessViolated { .. } => "FlatnessViolated",
            Error::StalledParticles { .. } => "StalledParticles",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
