use thiserror::Error;

/// Errors raised by operators, solvers and bound evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("normal equations are not positive definite (pivot {index} = {pivot:e})")]
    SingularSystem { index: usize, pivot: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("operator is rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),

    #[error("Gauss-Newton step is singular: Jacobian is rank deficient")]
    SingularStep,

    #[error("bound not applicable: epsilon * kappa = {0} >= 1")]
    BoundInvalid(f64),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
