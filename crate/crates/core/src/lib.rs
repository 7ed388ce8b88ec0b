//! Nonnegative cosine polynomials whose spectrum lies in the perfect squares,
//! together with the exact and brute-force oracles used to check them.
//!
//! * [`arith`]: rational points of the circle and fixed-point `e(x)`.
//! * [`expsum`]: quadratic exponential sums, Gauss sums, leading terms.
//! * [`weights`]: per-prime exponent ladders and the weight scheme.
//! * [`approx`]: continued-fraction approximation and error schedules.
//! * [`construct`]: the averaged polynomial, its coefficients and grid checks.
//! * [`oracle`]: the extremal free coefficient by linear programming.
//! * [`modular`]: positive definite functions and square-free sets in Z/nZ.

pub mod approx;
pub mod arith;
pub mod construct;
pub mod error;
pub mod modular;
pub mod oracle;
pub mod expsum;
pub mod serde_big;
pub mod simplex;
pub mod weights;

pub use error::{Error, Result};
