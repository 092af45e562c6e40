use thiserror::Error;

/// Failures raised by the numerical library.
///
/// Every variant carries the offending quantity so a caller (or the CLI) can
/// report it without re-deriving anything.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThsError {
    #[error("NonConvergence: {0}")]
    NonConvergence(String),

    #[error("DegenerateSpectrum: eigenvalues {a} and {b} are closer than {tol:e}")]
    DegenerateSpectrum { a: String, b: String, tol: f64 },

    #[error("NotPositiveDefinite: eigenvalue {eigenvalue:e} is not above {tol:e}")]
    NotPositiveDefinite { eigenvalue: f64, tol: f64 },

    #[error("SingularMap: condition number {condition:e} at t = {t} exceeds {limit:e}")]
    SingularMap { t: f64, condition: f64, limit: f64 },

    #[error("ComplexSpectrum: eigenvalue {eigenvalue} has |Im| > {tol:e}")]
    ComplexSpectrum { eigenvalue: String, tol: f64 },

    #[error("NonHermitianInput: residual {residual:e} exceeds {limit:e} ({context})")]
    NonHermitianInput { context: String, residual: f64, limit: f64 },

    #[error("NormDrift: relative norm drift {drift:e} exceeds {limit:e}")]
    NormDrift { drift: f64, limit: f64 },

    #[error("NonFiniteState: non-finite component at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("PositivityLoss: metric eigenvalue fell below {threshold:e} at t = {t}")]
    PositivityLoss { t: f64, threshold: f64 },

    #[error("CountMismatch: expected {expected} {what}, got {actual}")]
    CountMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("DegenerateState: S-norm {s_norm:e} is not positive")]
    DegenerateState { s_norm: f64 },

    #[error("NoImprovement: zero ascent direction at fidelity {fidelity} (gradient norm {gradient_norm:e})")]
    NoImprovement { fidelity: f64, gradient_norm: f64 },

    #[error("ConditionsViolated: residuals {residuals:?} exceed {tol:e}")]
    ConditionsViolated { residuals: Vec<f64>, tol: f64 },

    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),

    #[error("InvalidInput: {0}")]
    InvalidInput(String),

    #[error("VerificationFailed: {0}")]
    VerificationFailed(String),
}

impl ThsError {
    /// The bare variant name, as printed by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            ThsError::NonConvergence(_) => "NonConvergence",
            ThsError::DegenerateSpectrum { .. } => "DegenerateSpectrum",
            ThsError::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            ThsError::SingularMap { .. } => "SingularMap",
            ThsError::ComplexSpectrum { .. } => "ComplexSpectrum",
            ThsError::NonHermitianInput { .. } => "NonHermitianInput",
            ThsError::NormDrift { .. } => "NormDrift",
            ThsError::NonFiniteState { .. } => "NonFiniteState",
            ThsError::PositivityLoss { .. } => "PositivityLoss",
            ThsError::CountMismatch { .. } => "CountMismatch",
            ThsError::DegenerateState { .. } => "DegenerateState",
            ThsError::NoImprovement { .. } => "NoImprovement",
            ThsError::ConditionsViolated { .. } => "ConditionsViolated",
            ThsError::DimensionMismatch(_) => "DimensionMismatch",
            ThsError::InvalidInput(_) => "InvalidInput",
            ThsError::VerificationFailed(_) => "VerificationFailed",
        }
    }
}

pub type Result<T, E = ThsError> = std::result::Result<T, E>;
