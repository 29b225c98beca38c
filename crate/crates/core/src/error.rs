use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("{name} = {value} is out of domain: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    /// The observation did not pass the selection threshold it is being
    /// conditioned on.
    #[error("observation {value} does not pass the selection threshold {threshold}")]
    SelectionViolation { value: f64, threshold: f64 },
    /// Bisection ran out of iterations. The last bracket is kept.
    #[error("solver did not converge after {iterations} iterations (bracket [{lo}, {hi}])")]
    NoConvergence { iterations: usize, lo: f64, hi: f64 },
    #[error("root is not bracketed in [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },
    #[error("conditional CDF is not monotone in theta on [{lo}, {hi}]")]
    NonMonotone { lo: f64, hi: f64 },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("mixture fit failed: {0}")]
    Fit(&'static str),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain { name, value, reason }
    }

    /// True for errors raised by a numerical solver, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::NotBracketed { .. } | Error::NonMonotone { .. }
        )
    }
}
