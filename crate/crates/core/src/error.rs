use thiserror::Error;

/// Errors raised by the simulator.
///
/// Variants are grouped so that front-ends can map them onto distinct exit
/// statuses with [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("operator is not Hermitian on this state: imaginary residue {residue:e}")]
    HermiticityViolation { residue: f64 },

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("boundary leak at t = {time}: boundary density {ratio:e} of peak exceeds {threshold:e}")]
    BoundaryLeak {
        time: f64,
        ratio: f64,
        threshold: f64,
    },

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error("unsupported post-selection basis: {0}")]
    UnsupportedBasis(String),

    #[error("post-selection density is below the floor everywhere")]
    AllMasked,

    #[error("masked density weight {weight:e} exceeds the allowed {limit:e}")]
    MaskWeight { weight: f64, limit: f64 },

    #[error("ancilla calibration failed: {0}")]
    Calibration(String),

    #[error("pointer support overflow: {0}")]
    SupportOverflow(String),

    #[error("degenerate binning: {0}")]
    DegenerateBinning(String),

    #[error("insufficient horizon: {0}")]
    InsufficientHorizon(String),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: parameters, preconditions, grids.
    Config,
    /// A physical or numerical invariant failed during a run.
    Physics,
    /// The wavefunction reached the edge of the periodic domain.
    BoundaryLeak,
    /// Not enough samples or horizon to produce an estimate.
    Statistics,
    /// File system or encoding failure.
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidParameter(_)
            | DomainViolation(_)
            | Resolution(_)
            | GridMismatch(_)
            | UnsupportedOperator(_)
            | UnsupportedBasis(_)
            | SupportOverflow(_)
            | DegenerateBinning(_) => ErrorKind::Config,
            HermiticityViolation { .. }
            | Degenerate(_)
            | AllMasked
            | MaskWeight { .. }
            | Calibration(_)
            | InvariantViolation(_) => ErrorKind::Physics,
            BoundaryLeak { .. } => ErrorKind::BoundaryLeak,
            InsufficientHorizon(_) | InsufficientStatistics(_) => ErrorKind::Statistics,
            Format(_) | Io(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
