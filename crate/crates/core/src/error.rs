use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input violates a documented precondition.
    Validation(String),
    /// Configuration is incomplete or inconsistent (missing table entries etc).
    Config(String),
    /// A requested allocation exceeds the configured budget.
    Resource { what: &'static str, requested: usize, budget: usize },
    /// NaN or Inf appeared while solving.
    Divergence { equation: &'static str, iteration: usize },
    /// Bisection bracket does not straddle the target.
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64, target: f64 },
    /// A post-condition the discretisation guarantees was violated.
    Internal(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(m) => write!(f, "validation error: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Resource { what, requested, budget } => {
                write!(f, "{what} of {requested} exceeds the budget of {budget}")
            }
            Error::Divergence { equation, iteration } => {
                write!(f, "solution diverged in the {equation} equation at iteration {iteration}")
            }
            Error::Bracket { lo, hi, f_lo, f_hi, target } => write!(
                f,
                "bracket [{lo}, {hi}] does not straddle {target}: forward({lo}) = {f_lo}, forward({hi}) = {f_hi}"
            ),
            Error::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl core::error::Error for Error {}
