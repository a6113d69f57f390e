//! Error type shared across the crate.

use crate::kernels::Kernel;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("{t} is outside the domain of the {kernel:?} kernel")]
    OutOfDomain { kernel: Kernel, t: f64 },

    /// The clip kernel's dual second derivative is set-valued at |s| = 1.
    #[error("dual second derivative of {0:?} is set-valued at |s| = 1")]
    NondifferentiablePoint(Kernel),

    #[error("operation is not defined for the {0:?} kernel")]
    UnsupportedKernel(Kernel),

    #[error("problem does not provide {0}")]
    CapabilityMissing(&'static str),

    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("optimal value required but not available")]
    MissingOptimum,

    #[error("bound requires the isotropic cosh reference function")]
    WrongKernel,

    #[error("non-finite objective or gradient at iteration {0}")]
    NonFiniteIterate(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
