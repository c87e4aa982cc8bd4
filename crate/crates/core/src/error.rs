use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite integrand value at x = {x}")]
    NonFinite { x: f64 },

    #[error("quadrature did not reach tolerance {tolerance:e} on [{lo}, {hi}] (estimate {estimate:e})")]
    QuadratureNotConverged {
        lo: f64,
        hi: f64,
        estimate: f64,
        tolerance: f64,
    },

    /// An exponential moment or disutility is not representable in f64.
    #[error("out-of-range evaluation in {context}: exponent {exponent}")]
    Overflow { context: &'static str, exponent: f64 },

    #[error("convolution would produce {atoms} atoms, above the cap of {cap}")]
    AtomCap { atoms: usize, cap: usize },

    #[error("retention is infeasible at x = {x}: r(x) = {retained}")]
    Infeasible { x: f64, retained: f64 },

    #[error("perturbation support is not interior at x = {x}: r(x) = {retained}")]
    SupportViolation { x: f64, retained: f64 },

    #[error("expected indemnity is zero; the policy insures nothing")]
    ZeroIndemnity,

    #[error("operation requires a finite risk tolerance")]
    RequiresFiniteRiskTolerance,

    /// Two algebraically equivalent computations disagree.
    #[error("{context}: {first} and {second} disagree")]
    CrossCheck {
        context: &'static str,
        first: f64,
        second: f64,
    },

    #[error("descent budget of {iterations} iterations exhausted (residual {residual:e})")]
    DescentBudget { iterations: usize, residual: f64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
