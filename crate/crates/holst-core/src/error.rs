use alloc::string::String;

/// Failure modes shared across the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("grade exceeds 4")]
    GradeOverflow,
    #[error("gamma must be nonzero")]
    ZeroGamma,
    #[error("gamma must be finite or flagged as infinite, got {0}")]
    NonFiniteGamma(f64),
    #[error("twist map is not invertible for this gamma and signature")]
    TwistNotInvertible,
    #[error("top form: exterior derivative of a 3-form on a 3-torus")]
    TopForm,
    #[error("invalid grid size {n}: {reason}")]
    InvalidGrid { n: usize, reason: &'static str },
    #[error("non-periodic spec: wavenumber {0} is not an integer")]
    NonPeriodic(f64),
    #[error("field shape mismatch: {0}")]
    Shape(String),
    #[error("grid mismatch between fields")]
    GridMismatch,
    #[error("degenerate coframe at site {site}: smallest singular value ratio {ratio:e}")]
    DegenerateCoframe { site: usize, ratio: f64 },
    #[error("degenerate boundary metric at site {site}")]
    DegenerateMetric { site: usize },
    #[error("unsupported wedge shape ({0},{1})")]
    UnsupportedShape(usize, usize),
    #[error("ill-conditioned rank decision: singular-value gap {gap:e}")]
    IllConditionedRank { gap: f64 },
    #[error("phi_e singular: boundary metric degenerate? (site {site})")]
    PhiSingular { site: usize },
    #[error("numerical conditioning failure at site {site}: condition number {cond:e}")]
    Conditioning { site: usize, cond: f64 },
    #[error("unattainable boundary signature {0:?} for the chosen metric")]
    UnattainableSignature([i8; 3]),
    #[error("richardson sequence does not converge: estimates {0:e} and {1:e}")]
    Richardson(f64, f64),
    #[error("state is off shell: residual {0:e}")]
    OffShell(f64),
    #[error("adjoint solve failed at site {site}")]
    AdjointSolve { site: usize },
    #[error("non-invertible triad at site {site}")]
    NonInvertibleTriad { site: usize },
    #[error("extrinsic tensor not symmetric: antisymmetric part {0:e}")]
    AsymmetricK(f64),
}

pub type Result<T> = core::result::Result<T, Error>;
