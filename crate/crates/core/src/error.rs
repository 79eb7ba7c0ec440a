use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("parameter `{0}` must be strictly positive")]
    NonPositiveParameter(&'static str),

    #[error("parameter `{0}` is not a finite number")]
    NonFinite(&'static str),

    #[error("cost function is not strictly convex on [0, 1] (f''({at}) = {value:e})")]
    CostNotConvex { at: f64, value: f64 },

    #[error("cost function is not strictly increasing on [0, 1] (f'({at}) = {value:e})")]
    CostNotIncreasing { at: f64, value: f64 },

    #[error("cost function must vanish at zero reserve (f(0) = {0:e})")]
    CostNotNormalized(f64),

    #[error("{what} = {value} is outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("quadratic in alpha^2 has non-positive discriminant {0:e}")]
    DegenerateDiscriminant(f64),

    #[error("characteristic residual {residual:e} at alpha = {alpha} exceeds tolerance")]
    ResidualTooLarge { alpha: f64, residual: f64 },

    #[error("cross-check failed for {what}: {lhs} vs {rhs}")]
    CrossCheckFailed {
        what: &'static str,
        lhs: f64,
        rhs: f64,
    },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("{what}: argument {value} outside the domain {domain}")]
    DomainError {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("parameter assumptions fail in both regime labelings: {0}")]
    AssumptionViolated(String),

    #[error("smooth-fit equation has no sign change on the bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("smooth-fit residuals too large: G1 = {g1:e}, G2 = {g2:e}")]
    SmoothFitResidual { g1: f64, g2: f64 },

    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    QuadratureNotConverged { a: f64, b: f64 },

    #[error(
        "verification failed ({check}): residual {residual:e} at x = {x}, y = {y}, regime {regime}"
    )]
    VerificationFailed {
        check: &'static str,
        x: f64,
        y: f64,
        regime: u8,
        residual: f64,
    },

    #[error("boundary ordering violated at x = {x}: {detail}")]
    OrderingViolated { x: f64, detail: String },

    #[error("Skorokhod reflection violated at step {step}: {detail}")]
    SrpViolated { step: usize, detail: String },

    #[error("invalid simulation setting: {0}")]
    InvalidSimConfig(String),
}
