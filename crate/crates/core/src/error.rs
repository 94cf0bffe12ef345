use thiserror::Error;

use crate::geometry::Vec3;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad class of a failure, used by drivers to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data.
    Input,
    /// A physical admissibility condition is violated.
    Physics,
    /// A linear or fixed-point solve failed.
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel evaluated at coincident points {x:?} and {y:?}")]
    SingularEvaluation { x: Vec3, y: Vec3 },

    #[error("physical invariant violated: {0}")]
    Invariant(String),

    #[error("vanishing impedance denominator (h = -1) at {location}")]
    SingularImpedance { location: String },

    #[error(
        "infeasible density in cell {cell:?}: {count} particles force spacing {spacing:.3e} < {required:.3e} (d >= 10a)"
    )]
    InfeasibleDensity {
        cell: [usize; 3],
        count: usize,
        spacing: f64,
        required: f64,
    },

    #[error("compatibility bound violated at node {node}: (nu/c3)^(1/3) = {ratio:.4} > 0.1 (a/d must stay small)")]
    Compatibility { node: usize, ratio: f64 },

    #[error("particle count {count} exceeds the cap of {cap}")]
    TooManyParticles { count: usize, cap: usize },

    #[error("evaluation point {point:?} lies {distance:.3e} from a particle center, inside the exclusion radius {radius:.3e}")]
    NearField {
        point: Vec3,
        distance: f64,
        radius: f64,
    },

    #[error("iterative solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("ill-conditioned system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("non-contraction: iterate change grew for 3 consecutive steps (last change {change:.3e} at iteration {iteration}); reduce nu")]
    NonContraction { iteration: usize, change: f64 },

    #[error("infeasible design at {} node(s), first {:?}: {reason}", nodes.len(), nodes.first())]
    InfeasibleDesign { nodes: Vec<usize>, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) | Error::Serde(_) | Error::Io(_) | Error::Csv(_) => {
                ErrorClass::Input
            }
            Error::Invariant(_)
            | Error::SingularImpedance { .. }
            | Error::InfeasibleDensity { .. }
            | Error::Compatibility { .. }
            | Error::TooManyParticles { .. }
            | Error::NearField { .. }
            | Error::InfeasibleDesign { .. } => ErrorClass::Physics,
            Error::SingularEvaluation { .. }
            | Error::NonConvergence { .. }
            | Error::IllConditioned { .. }
            | Error::NonContraction { .. } => ErrorClass::Solver,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::SingularEvaluation { .. } => "singular_evaluation",
            Error::Invariant(_) => "invariant",
            Error::SingularImpedance { .. } => "singular_impedance",
            Error::InfeasibleDensity { .. } => "infeasible_density",
            Error::Compatibility { .. } => "compatibility",
            Error::TooManyParticles { .. } => "too_many_particles",
            Error::NearField { .. } => "near_field",
            Error::NonConvergence { .. } => "non_convergence",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NonContraction { .. } => "non_contraction",
            Error::InfeasibleDesign { .. } => "infeasible_design",
            Error::Io(_) => "io",
            Error::Serde(_) => "serde",
            Error::Csv(_) => "csv",
        }
    }
}
