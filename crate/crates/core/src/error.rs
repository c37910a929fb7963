use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is not symmetric within tolerance ({context}, max asymmetry {asymmetry:e})")]
    Asymmetric { context: &'static str, asymmetry: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("Riccati iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    Convergence { iterations: usize, last_step: f64 },

    #[error("Riccati solution is not stabilizing: spectral radius of A+BL is {spectral_radius}")]
    NotStabilizing { spectral_radius: f64 },

    #[error("structure violation: {0}")]
    Structure(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("information violation: vehicle {vehicle} at step {step} lacks {missing}")]
    InformationViolation {
        vehicle: usize,
        step: usize,
        missing: String,
    },

    #[error("closed loop diverged at step {step}: |x|_inf = {norm:e} exceeds guard {guard:e}")]
    Instability { step: usize, norm: f64, guard: f64 },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dims(
    context: &'static str,
    expected: (usize, usize),
    got: (usize, usize),
) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        });
    }
    Ok(())
}
