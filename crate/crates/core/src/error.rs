use crate::collocation::IntegrabilityReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("inertia matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    SingularInertia { condition: f64 },

    #[error("actuation is not collocated: {}", .0.summary())]
    NotCollocated(Box<IntegrabilityReport>),

    #[error("no nonsingular actuated block at the requested configuration (smallest singular value {sigma_min:.3e})")]
    SingularConfiguration { sigma_min: f64 },

    #[error("sampling domain is empty or invalid: {0}")]
    EmptyDomain(String),

    #[error("timestamps must be strictly increasing (t[{index}] = {t})")]
    NonMonotoneTime { index: usize, t: f64 },

    #[error("tendon {tendon} has a degenerate routing: {reason}")]
    DegenerateRouting { tendon: usize, reason: String },

    #[error("tendon tangent is undefined at X = {x:.6} (norm {norm:.3e})")]
    DegenerateTangent { x: f64, norm: f64 },

    #[error("invalid gains: {0}")]
    InvalidGains(String),

    #[error("actuation matrix is rank deficient at the requested configuration")]
    RankDeficient,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
