use thiserror::Error;

/// Errors produced anywhere in the kernel pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidWeight(String),

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integrand is not finite at node x = {node}")]
    NonFinite { node: f64 },

    #[error("recurrence table too short: need size {needed}, have {available}")]
    TableTooShort { needed: usize, available: usize },

    #[error("polynomial index {k} out of range (table size {max})")]
    IndexOutOfRange { k: usize, max: usize },

    #[error("norm h_{k} lost positivity during the Stieltjes procedure; use a larger discretization")]
    PositivityLost { k: usize },

    #[error("exponent {exponent:.3} exceeds the overflow guard of 700")]
    OverflowGuard { exponent: f64 },

    #[error(
        "matrix B is singular to working precision (condition estimate {condition:e}); \
         B is invertible for distinct nonzero sources, so increase the quadrature size or separate the sources"
    )]
    SingularB { condition: f64 },

    #[error("Gram matrix is singular (condition estimate {condition:e}); duplicate sources or quadrature failure")]
    SingularGram { condition: f64 },

    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    #[error("quadrature did not reach doubling stability up to {max_nodes} nodes (last relative change {change:e})")]
    QuadratureUnconverged { max_nodes: usize, change: f64 },

    #[error("symmetric eigensolver did not converge after {iterations} iterations")]
    EigenUnconverged { iterations: usize },

    #[error("could not place the Fredholm truncation point: tail mass still {tail:e} at T = {truncation}")]
    FredholmTruncation { truncation: f64, tail: f64 },

    #[error("Fredholm determinant {value} lies outside [0, 1] beyond rounding")]
    FredholmRange { value: f64 },

    #[error("Nystrom discretization did not converge up to m = {max_nodes} (last change {change:e})")]
    FredholmUnconverged { max_nodes: usize, change: f64 },

    #[error("sampling requires the Gaussian potential V(x) = x^2")]
    NonGaussianWeight,

    #[error("coefficient identities are limited to n <= 12 (got n = {n}); monomial coefficients are unstable beyond")]
    CoefficientInstability { n: usize },
}

impl Error {
    /// True for errors caused by user input rather than numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidWeight(_)
                | Error::InvalidSource(_)
                | Error::InvalidArgument(_)
                | Error::NonGaussianWeight
                | Error::CoefficientInstability { .. }
                | Error::OverflowGuard { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
