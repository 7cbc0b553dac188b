use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point is off the hyperboloid (relative residual {0:.3e})")]
    ConstraintViolation(f64),
    #[error("point does not belong to the {0} chart")]
    ChartMismatch(&'static str),
    #[error("momentum is not tangent to the hyperboloid (residual {0:.3e})")]
    NotTangent(f64),
    #[error("singular state: {0}")]
    Singular(String),
    #[error("no classical motion for E = {e}, L^2 = {l_sq}: {reason}")]
    Inadmissible { e: f64, l_sq: f64, reason: String },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("constraint drift {residual:.3e} exceeds the budget at t = {t}")]
    ConstraintDrift { t: f64, residual: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("interval crosses a turning point: {0}")]
    CrossesTurningPoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
