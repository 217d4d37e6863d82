use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("{inequality} violated: lhs = {lhs}, rhs = {rhs}; witness: {witness}")]
    InequalityViolation { inequality: String, lhs: String, rhs: String, witness: String },

    #[error("observable does not belong to the algebra of {system}: {detail}")]
    AlgebraMismatch { system: String, detail: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("hypothesis `{name}` not satisfied: {detail}")]
    Hypothesis { name: String, detail: String },

    #[error("identity check failed: {0}")]
    IdentityViolation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn hypothesis(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Hypothesis { name: name.into(), detail: detail.into() }
    }

    pub fn inequality(
        inequality: impl Into<String>,
        lhs: impl ToString,
        rhs: impl ToString,
        witness: impl Into<String>,
    ) -> Self {
        Error::InequalityViolation {
            inequality: inequality.into(),
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
            witness: witness.into(),
        }
    }

    /// Process exit code used by the command line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InequalityViolation { .. } | Error::IdentityViolation(_) | Error::InvariantViolation(_) => 1,
            Error::Hypothesis { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
