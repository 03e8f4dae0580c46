use thiserror::Error;

/// Errors raised by the algebra, expectation, basis and angle routines.
///
/// Variants that carry a `residual` report the size of the violated
/// identity, measured in operator norm unless stated otherwise.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("containment error: {0}")]
    Containment(String),

    #[error("size bound exceeded: {0}")]
    Size(String),

    #[error("construction failed: {axiom} violated (residual {residual:.3e})")]
    Construction { axiom: String, residual: f64 },

    #[error("invariant violated: {name} (residual {residual:.3e})")]
    Invariant { name: String, residual: f64 },

    #[error("intermediate algebra is not compatible with the expectation (residual {residual:.3e})")]
    Incompatible { residual: f64 },

    #[error("degenerate denominator: intermediate coincides with the base algebra")]
    DegenerateDenominator,

    #[error("exterior angle undefined: first-floor algebra not compatible with the dual expectation (residual {residual:.3e})")]
    ExteriorAngleUndefined { residual: f64 },

    #[error("definition and quasi-basis paths disagree by {disagreement:.3e}")]
    PathDisagreement { disagreement: f64 },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invariant(name: impl Into<String>, residual: f64) -> Self {
        Error::Invariant {
            name: name.into(),
            residual,
        }
    }

    pub(crate) fn construction(axiom: impl Into<String>, residual: f64) -> Self {
        Error::Construction {
            axiom: axiom.into(),
            residual,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
