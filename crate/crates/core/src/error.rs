use thiserror::Error;

/// Failure modes surfaced by the core solvers and builders.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A bump-function admissibility invariant failed (support, positivity,
    /// or critical points outside the inner patch).
    #[error("eta admissibility: {0}")]
    Admissibility(String),

    /// A stored weight value was non-finite at an interior time node.
    #[error("weight overflow: {0}")]
    Overflow(String),

    /// A caller-supplied parameter violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The background temperature failed the vertical-structure requirement.
    #[error("trajectory structure: {0}")]
    Structure(String),

    /// Explicit advection stability bound exceeded.
    #[error("CFL violation: max speed {max_speed:.3e} with dt {dt:.3e}, h {h:.3e} gives {number:.3} > 1")]
    Cfl {
        max_speed: f64,
        dt: f64,
        h: f64,
        number: f64,
    },

    /// Result emission failed.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
