use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid alignment: {0}")]
    GridAlignment(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("monotonicity violation on path {path} at node {node}: {prev} -> {next}")]
    Monotonicity {
        path: usize,
        node: usize,
        prev: f64,
        next: f64,
    },

    #[error("singular regression system: {0}")]
    Singular(String),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("numeric overflow in {0} (is beta * A(T) too large?)")]
    NumericOverflow(String),

    #[error("generator `{name}` returned a non-finite value at t = {t}, path {path}")]
    Generator { name: String, t: f64, path: usize },

    #[error("backward induction blew up at step {step}")]
    Blowup { step: usize },

    #[error(
        "Picard iteration did not contract: {iterations} iterations, last ratio {last_ratio:.4e}, mu_lambda {mu_lambda:.4e}"
    )]
    NonContraction {
        iterations: usize,
        last_ratio: f64,
        mu_lambda: f64,
    },

    #[error("assumption check failed: {0}")]
    AssumptionFailed(String),

    #[error("perturbation family invalid: member {member}: {reason}")]
    FamilyInvalid { member: String, reason: String },

    #[error("unknown {kind} `{name}` (registered: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("invalid parameter for `{generator}`: {message}")]
    Parameter { generator: String, message: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(generator: &str, message: impl Into<String>) -> Self {
        Error::Parameter {
            generator: generator.to_string(),
            message: message.into(),
        }
    }
}
