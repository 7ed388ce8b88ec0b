use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("zero denominator")]
    ZeroDenominator,

    #[error("domain error: {0}")]
    Domain(String),

    /// The reduced period of a quadratic phase is too long to sum.
    #[error("period {period} exceeds the summation limit {limit}")]
    PeriodTooLarge { period: BigUint, limit: u64 },

    /// Coefficient expansion would materialize more terms than allowed.
    #[error("expansion needs {} terms but the cap is {cap}", abbreviate(needed))]
    TooManyTerms { needed: BigUint, cap: u64 },

    #[error("no integer level count satisfies the window for delta = {delta}; nearest feasible delta is {nearest}")]
    InfeasibleDelta { delta: f64, nearest: f64 },
}

/// Short decimal form of a count that may have thousands of digits.
fn abbreviate(v: &BigUint) -> String {
    let s = v.to_string();
    if s.len() <= 24 {
        s
    } else {
        format!("{}.{}e{}", &s[..1], &s[1..4], s.len() - 1)
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
