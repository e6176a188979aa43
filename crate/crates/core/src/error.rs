use thiserror::Error;

pub type Result<T> = std::result::Result<T, GaudinError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaudinError {
    #[error("system must contain at least one spin")]
    EmptySystem,
    #[error("epsilons {i} and {j} are closer than {gap_tol:e}")]
    DuplicateEpsilon { i: usize, j: usize, gap_tol: f64 },
    #[error("non-finite parameter: {0}")]
    NonFinite(&'static str),
    #[error("site {site} out of range for {n} spins")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("spectral parameter {u} within {gap_tol:e} of epsilon {site}")]
    SpectralCollision { u: crate::C64, site: usize, gap_tol: f64 },
    #[error("the in-plane field vanishes; the common-frame ansatz degenerates")]
    ZeroInPlaneField,
    #[error("the field vanishes")]
    ZeroField,
    #[error("operator dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Jacobian is singular (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },
    #[error("continuation stalled at |B| = {field} for label {label}")]
    ContinuationStall { label: String, field: f64 },
    #[error("labels {a} and {b} converged to the same solution (distance {distance:e})")]
    DuplicateSolution { a: String, b: String, distance: f64 },
    #[error("operation expects a {expected} frame solution")]
    WrongFrame { expected: &'static str },
    #[error("polynomial coefficient system is singular (condition estimate {condition:e})")]
    SingularConversion { condition: f64 },
    #[error("root reconstruction round trip failed (relative error {error:e})")]
    RoundTripFailure { error: f64 },
    #[error("roots {p} and {q} coincide")]
    CoincidentRoots { p: usize, q: usize },
    #[error("invalid site set: {0}")]
    BadUpSet(String),
    #[error("basis is incomplete: sum of |c|^2 deviates from 1 by {deviation:e}")]
    IncompleteBasis { deviation: f64 },
    #[error("observable is not Hermitian")]
    NonHermitianObservable,
    #[error("expectation value at t = {t} has imaginary part {imag:e}")]
    ImaginaryExpectation { t: f64, imag: f64 },
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
}

impl GaudinError {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            GaudinError::EmptySystem => "EmptySystem",
            GaudinError::DuplicateEpsilon { .. } => "DuplicateEpsilon",
            GaudinError::NonFinite(_) => "NonFinite",
            GaudinError::SiteOutOfRange { .. } => "SiteOutOfRange",
            GaudinError::SpectralCollision { .. } => "SpectralCollision",
            GaudinError::ZeroInPlaneField => "ZeroInPlaneField",
            GaudinError::ZeroField => "ZeroField",
            GaudinError::DimensionMismatch(..) => "DimensionMismatch",
            GaudinError::LengthMismatch { .. } => "LengthMismatch",
            GaudinError::NoConvergence { .. } => "NoConvergence",
            GaudinError::SingularJacobian { .. } => "SingularJacobian",
            GaudinError::ContinuationStall { .. } => "ContinuationStall",
            GaudinError::DuplicateSolution { .. } => "DuplicateSolution",
            GaudinError::WrongFrame { .. } => "WrongFrame",
            GaudinError::SingularConversion { .. } => "SingularConversion",
            GaudinError::RoundTripFailure { .. } => "RoundTripFailure",
            GaudinError::CoincidentRoots { .. } => "CoincidentRoots",
            GaudinError::BadUpSet(_) => "BadUpSet",
            GaudinError::IncompleteBasis { .. } => "IncompleteBasis",
            GaudinError::NonHermitianObservable => "NonHermitianObservable",
            GaudinError::ImaginaryExpectation { .. } => "ImaginaryExpectation",
            GaudinError::Eigensolver(_) => "Eigensolver",
        }
    }
}
