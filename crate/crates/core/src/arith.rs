//! Exact integer arithmetic, rational points of the circle and fixed-point
//! evaluation of `e(x) = exp(2πix)`.
//!
//! Every evaluation point in this crate is a reduced fraction `p/q` taken
//! modulo 1. Unit values `e(p/q)` are produced as fixed-point complex numbers
//! (`BigInt` mantissas scaled by `2^-frac_bits`), so long sums of them are
//! exact integer additions and the only rounding is per term.

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extra fractional bits carried on top of the requested precision.
pub const GUARD_BITS: u32 = 40;

/// Extra bits used inside the series evaluation of sine and cosine.
const SERIES_GUARD: u32 = 24;

/// Working precision in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Precision(u32);

impl Precision {
    pub const MIN_BITS: u32 = 53;
    pub const DEFAULT: Precision = Precision(128);

    pub fn new(bits: u32) -> Result<Self> {
        if bits < Self::MIN_BITS {
            return Err(Error::domain(format!(
                "precision must be at least {} bits, got {bits}",
                Self::MIN_BITS
            )));
        }
        Ok(Precision(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Fractional bits of the fixed-point values produced at this precision.
    pub fn frac_bits(self) -> u32 {
        self.0 + GUARD_BITS
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::DEFAULT
    }
}

impl TryFrom<u32> for Precision {
    type Error = Error;
    fn try_from(bits: u32) -> Result<Self> {
        Precision::new(bits)
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.0
    }
}

/// A point `p/q` of the circle `[0, 1)` with `gcd(p, q) = 1` and `0 <= p < q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RationalAngle {
    num: BigUint,
    den: BigUint,
}

/// Reduces `p/q` modulo 1 to lowest terms.
pub fn reduce(p: &BigInt, q: &BigInt) -> Result<RationalAngle> {
    if q.is_zero() {
        return Err(Error::ZeroDenominator);
    }
    let (p, q) = if q.is_negative() { (-p, -q) } else { (p.clone(), q.clone()) };
    let r = p.mod_floor(&q);
    let g = r.gcd(&q);
    let num = (r / &g).to_biguint().expect("nonnegative remainder");
    let den = (q / &g).to_biguint().expect("positive denominator");
    Ok(RationalAngle { num, den })
}

impl RationalAngle {
    pub fn new(p: impl Into<BigInt>, q: impl Into<BigInt>) -> Result<Self> {
        reduce(&p.into(), &q.into())
    }

    pub fn zero() -> Self {
        RationalAngle { num: BigUint::zero(), den: BigUint::one() }
    }

    /// The point `i/n` for a grid of `n` equally spaced points.
    pub fn grid_point(i: u64, n: u64) -> Result<Self> {
        Self::new(i, n)
    }

    pub fn numer(&self) -> &BigUint {
        &self.num
    }

    pub fn denom(&self) -> &BigUint {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.num, &self.den)
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num.clone()), BigInt::from(self.den.clone()))
    }

    /// `self + other (mod 1)`.
    pub fn add(&self, other: &RationalAngle) -> RationalAngle {
        let num = &self.num * &other.den + &other.num * &self.den;
        let den = &self.den * &other.den;
        reduce(&num.into(), &den.into()).expect("nonzero denominator")
    }

    /// `-self (mod 1)`, i.e. the mirror point `1 - x`.
    pub fn reflect(&self) -> RationalAngle {
        if self.num.is_zero() {
            return self.clone();
        }
        RationalAngle { num: &self.den - &self.num, den: self.den.clone() }
    }

    /// `c * self (mod 1)` for a nonnegative integer `c`.
    pub fn scale(&self, c: &BigUint) -> RationalAngle {
        let num = (c % &self.den) * &self.num % &self.den;
        let g = num.gcd(&self.den);
        RationalAngle { num: num / &g, den: &self.den / &g }
    }
}

impl fmt::Display for RationalAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for RationalAngle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::domain(format!("cannot parse `{s}` as p/q"));
        let (p, q) = match s.split_once('/') {
            Some((p, q)) => (p.trim(), q.trim()),
            None => (s, "1"),
        };
        let p: BigInt = p.parse().map_err(|_| bad())?;
        let q: BigInt = q.parse().map_err(|_| bad())?;
        reduce(&p, &q)
    }
}

impl Serialize for RationalAngle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RationalAngle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The fractional part of `k² L² x`, computed exactly.
pub fn frac_quadratic(k: &BigInt, l: &BigInt, x: &RationalAngle) -> RationalAngle {
    let q = BigInt::from(x.den.clone());
    let km = k.mod_floor(&q);
    let lm = l.mod_floor(&q);
    let c = (&km * &km).mod_floor(&q) * (&lm * &lm).mod_floor(&q);
    let num = c * BigInt::from(x.num.clone());
    reduce(&num, &q).expect("denominator is positive")
}

/// A complex number `(re + i im) 2^-frac_bits` with integer mantissas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedComplex {
    pub re: BigInt,
    pub im: BigInt,
    pub frac_bits: u32,
}

impl FixedComplex {
    pub fn zero(frac_bits: u32) -> Self {
        FixedComplex { re: BigInt::zero(), im: BigInt::zero(), frac_bits }
    }

    pub fn one(frac_bits: u32) -> Self {
        FixedComplex { re: BigInt::one() << frac_bits, im: BigInt::zero(), frac_bits }
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(fixed_to_f64(&self.re, self.frac_bits), fixed_to_f64(&self.im, self.frac_bits))
    }

    pub fn re_f64(&self) -> f64 {
        fixed_to_f64(&self.re, self.frac_bits)
    }

    /// Multiplies by the exact rational `num / den` with rounding to nearest.
    pub fn mul_ratio(&self, num: &BigInt, den: &BigInt) -> FixedComplex {
        FixedComplex {
            re: div_round(&(&self.re * num), den),
            im: div_round(&(&self.im * num), den),
            frac_bits: self.frac_bits,
        }
    }

    pub fn conj(&self) -> FixedComplex {
        FixedComplex { re: self.re.clone(), im: -&self.im, frac_bits: self.frac_bits }
    }
}

impl AddAssign<&FixedComplex> for FixedComplex {
    fn add_assign(&mut self, rhs: &FixedComplex) {
        debug_assert_eq!(self.frac_bits, rhs.frac_bits);
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

/// Converts a fixed-point mantissa to the nearest double (up to one ulp).
pub fn fixed_to_f64(v: &BigInt, frac_bits: u32) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        v.to_f64().unwrap_or(0.0) * 2f64.powi(-(frac_bits as i32))
    } else {
        let shift = bits - 64;
        let top = v >> shift;
        top.to_f64().unwrap_or(0.0) * 2f64.powf(shift as f64 - frac_bits as f64)
    }
}

/// Rounds `n / d` to the nearest integer (ties upward); `d > 0`.
pub fn div_round(n: &BigInt, d: &BigInt) -> BigInt {
    debug_assert!(d.is_positive());
    let two_n: BigInt = n << 1u32;
    (two_n + d).div_floor(&(d << 1u32))
}

fn shr_round(v: &BigInt, bits: u32) -> BigInt {
    if bits == 0 {
        return v.clone();
    }
    let half = BigInt::one() << (bits - 1);
    (v + half) >> bits
}

/// `π · 2^bits`, rounded, from Machin's formula.
pub fn fixed_pi(bits: u32) -> BigInt {
    let w = bits + 16;
    let pi = atan_inverse(5, w) * 16 - atan_inverse(239, w) * 4;
    shr_round(&pi, 16)
}

/// `atan(1/x) · 2^bits` by its alternating series.
fn atan_inverse(x: u32, bits: u32) -> BigInt {
    let x = BigInt::from(x);
    let x2 = &x * &x;
    let mut power = (BigInt::one() << bits) / &x;
    let mut sum = power.clone();
    let mut n: u64 = 1;
    loop {
        power /= &x2;
        if power.is_zero() {
            break;
        }
        let term = &power / (2 * n + 1);
        if n % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
        n += 1;
    }
    sum
}

/// Cosine and sine of `theta · 2^-bits` for `0 <= theta <= π/4`.
fn sincos_fixed(theta: &BigInt, bits: u32) -> (BigInt, BigInt) {
    let one = BigInt::one() << bits;
    let theta2 = (theta * theta) >> bits;

    let mut cos = one.clone();
    let mut term = one;
    let mut n: u64 = 1;
    loop {
        term = (&term * &theta2) >> bits;
        term /= (2 * n - 1) * (2 * n);
        if term.is_zero() {
            break;
        }
        if n % 2 == 1 {
            cos -= &term;
        } else {
            cos += &term;
        }
        n += 1;
    }

    let mut sin = theta.clone();
    let mut term = theta.clone();
    let mut n: u64 = 1;
    loop {
        term = (&term * &theta2) >> bits;
        term /= (2 * n) * (2 * n + 1);
        if term.is_zero() {
            break;
        }
        if n % 2 == 1 {
            sin -= &term;
        } else {
            sin += &term;
        }
        n += 1;
    }
    (cos, sin)
}

/// `e(x) = exp(2πix)` at a rational point, accurate to well below
/// `2^(1 - precision)`. The result carries `precision.frac_bits()` bits.
pub fn exp_unit(x: &RationalAngle, precision: Precision) -> FixedComplex {
    let out_bits = precision.frac_bits();
    let w = out_bits + SERIES_GUARD;
    let q = &x.den;

    // x = quadrant/4 + rem/(4q) with 0 <= rem < q.
    let (quadrant, rem) = (&x.num << 2u32).div_rem(q);
    let quadrant = quadrant.to_u32().expect("quadrant below 4");
    let mirrored = &rem << 1u32 > *q;
    let rem = if mirrored { q - &rem } else { rem };

    // theta = 2π rem/(4q) = π rem/(2q) lies in [0, π/4].
    let (mut c, mut s) = if rem.is_zero() {
        (BigInt::one() << w, BigInt::zero())
    } else {
        let theta = div_round(&(fixed_pi(w) * BigInt::from(rem)), &BigInt::from(q << 1u32));
        sincos_fixed(&theta, w)
    };
    if mirrored {
        std::mem::swap(&mut c, &mut s);
    }
    let (re, im) = match quadrant {
        0 => (c, s),
        1 => (-s, c),
        2 => (-c, -s),
        _ => (s, -c),
    };
    FixedComplex {
        re: shr_round(&re, SERIES_GUARD),
        im: shr_round(&im, SERIES_GUARD),
        frac_bits: out_bits,
    }
}

/// Natural logarithm of a positive big integer.
pub fn ln_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        v.to_f64().map(f64::ln).unwrap_or(f64::NEG_INFINITY)
    } else {
        let shift = bits - 64;
        let top = v >> shift;
        top.to_f64().unwrap_or(1.0).ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// `num / den` as a double, valid for operands far beyond `f64` range.
pub fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    if num.bits() <= 1000 && den.bits() <= 1000 {
        return num.to_f64().unwrap_or(f64::INFINITY) / den.to_f64().unwrap_or(f64::INFINITY);
    }
    (ln_biguint(num) - ln_biguint(den)).exp()
}

/// Natural logarithm of a positive rational.
pub fn ln_rational(v: &BigRational) -> f64 {
    let n = v.numer().magnitude();
    let d = v.denom().magnitude();
    ln_biguint(n) - ln_biguint(d)
}

/// Decimal digit count of a positive integer.
pub fn decimal_digits(v: &BigUint) -> usize {
    if v.is_zero() {
        1
    } else {
        v.to_str_radix(10).len()
    }
}

/// An element `a + b√2` of the field `Q(√2)`, used for exact weights `2^(-j/2)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadSurd {
    pub rational: BigRational,
    pub surd: BigRational,
}

impl QuadSurd {
    pub fn new(rational: BigRational, surd: BigRational) -> Self {
        QuadSurd { rational, surd }
    }

    pub fn zero() -> Self {
        Self::new(BigRational::zero(), BigRational::zero())
    }

    pub fn one() -> Self {
        Self::new(BigRational::one(), BigRational::zero())
    }

    pub fn from_rational(r: BigRational) -> Self {
        Self::new(r, BigRational::zero())
    }

    /// `2^(-1/2) = √2 / 2`.
    pub fn inv_sqrt2() -> Self {
        Self::new(BigRational::zero(), BigRational::new(BigInt::one(), BigInt::from(2)))
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.surd.is_zero()
    }

    pub fn add(&self, o: &QuadSurd) -> QuadSurd {
        Self::new(&self.rational + &o.rational, &self.surd + &o.surd)
    }

    pub fn mul(&self, o: &QuadSurd) -> QuadSurd {
        let two = BigRational::from_integer(BigInt::from(2));
        Self::new(
            &self.rational * &o.rational + two * &self.surd * &o.surd,
            &self.rational * &o.surd + &self.surd * &o.rational,
        )
    }

    pub fn scale(&self, r: &BigRational) -> QuadSurd {
        Self::new(&self.rational * r, &self.surd * r)
    }

    /// Multiplicative inverse via the conjugate `a - b√2`.
    pub fn inv(&self) -> Result<QuadSurd> {
        let two = BigRational::from_integer(BigInt::from(2));
        let norm = &self.rational * &self.rational - two * &self.surd * &self.surd;
        if norm.is_zero() {
            return Err(Error::domain("inverse of zero in Q(sqrt 2)"));
        }
        Ok(Self::new(&self.rational / &norm, -&self.surd / &norm))
    }

    pub fn pow(&self, e: u32) -> QuadSurd {
        (0..e).fold(QuadSurd::one(), |acc, _| acc.mul(self))
    }

    pub fn to_f64(&self) -> f64 {
        self.rational.to_f64().unwrap_or(0.0) + self.surd.to_f64().unwrap_or(0.0) * std::f64::consts::SQRT_2
    }

    /// `self · 2^bits`, rounded.
    pub fn to_fixed(&self, bits: u32) -> BigInt {
        let w = bits + 8;
        let scale = BigInt::one() << w;
        let sqrt2: BigInt = BigInt::from((BigUint::from(2u32) << (2 * w)).sqrt());
        let a = div_round(&(self.rational.numer() * &scale), self.rational.denom());
        let b = div_round(&(self.surd.numer() * sqrt2), self.surd.denom());
        shr_round(&(a + b), 8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn angle(p: i64, q: i64) -> RationalAngle {
        RationalAngle::new(p, q).unwrap()
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(angle(6, 4), angle(1, 2));
        assert_eq!(angle(6, 4).to_string(), "1/2");
        assert_eq!(angle(-1, 3).to_string(), "2/3");
        assert_eq!(angle(7, 7).to_string(), "0/1");
        assert_eq!(angle(3, -4).to_string(), "1/4");
        assert_eq!(RationalAngle::new(1, 0), Err(Error::ZeroDenominator));
    }

    #[test]
    fn parse_and_display() {
        let x: RationalAngle = "4687/33102".parse().unwrap();
        assert_eq!(x.to_string(), "4687/33102");
        let y: RationalAngle = " 5 ".parse().unwrap();
        assert!(y.is_zero());
        assert!("1/0".parse::<RationalAngle>().is_err());
        assert!("a/b".parse::<RationalAngle>().is_err());
    }

    #[test]
    fn frac_quadratic_examples() {
        let b = |v: i64| BigInt::from(v);
        assert_eq!(frac_quadratic(&b(3), &b(1), &angle(1, 4)), angle(1, 4));
        assert_eq!(frac_quadratic(&b(12345), &b(678), &RationalAngle::zero()), RationalAngle::zero());
        assert_eq!(frac_quadratic(&b(1), &b(2), &angle(1, 8)), angle(1, 2));
    }

    #[test]
    fn pi_digits() {
        let pi = fixed_pi(200);
        let approx = fixed_to_f64(&pi, 200);
        assert_eq!(approx, std::f64::consts::PI);
        // 50 decimal digits of π.
        let digits: BigInt = "314159265358979323846264338327950288419716939937510".parse().unwrap();
        let scaled = (&pi * BigInt::from(10u32).pow(50)) >> 200u32;
        assert!((scaled - digits).abs() <= BigInt::one());
    }

    #[test]
    fn exp_unit_examples() {
        let p = Precision::DEFAULT;
        let z = exp_unit(&RationalAngle::zero(), p);
        assert_eq!(z, FixedComplex::one(p.frac_bits()));
        let i = exp_unit(&angle(1, 4), p);
        assert_eq!(i.re, BigInt::zero());
        assert_eq!(i.im, BigInt::one() << p.frac_bits());
        let w = exp_unit(&angle(1, 3), p).to_c64();
        assert!((w.re + 0.5).abs() < 1e-15);
        assert!((w.im - 0.8660254037844386).abs() < 1e-15);
    }

    #[test]
    fn exp_unit_high_precision_against_identity() {
        // e(1/8) = (1 + i)/√2: compare mantissas against an integer square root.
        let p = Precision::new(256).unwrap();
        let v = exp_unit(&angle(1, 8), p);
        let bits = p.frac_bits();
        let half_sqrt2 = BigInt::from((BigUint::from(1u32) << (2 * bits - 1)).sqrt());
        assert!((&v.re - &half_sqrt2).abs() <= BigInt::from(2));
        assert!((&v.im - &half_sqrt2).abs() <= BigInt::from(2));
    }

    #[test]
    fn precision_floor() {
        assert!(Precision::new(52).is_err());
        assert_eq!(Precision::new(53).unwrap().bits(), 53);
    }

    #[test]
    fn quad_surd_weights() {
        let lam = QuadSurd::inv_sqrt2();
        let half = lam.pow(2);
        assert_eq!(half, QuadSurd::from_rational(BigRational::new(1.into(), 2.into())));
        assert!((lam.pow(3).to_f64() - 2f64.powf(-1.5)).abs() < 1e-16);
        let inv = lam.inv().unwrap();
        assert!((inv.to_f64() - std::f64::consts::SQRT_2).abs() < 1e-15);
        let fixed = lam.to_fixed(100);
        assert!((fixed_to_f64(&fixed, 100) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-16);
    }

    #[test]
    fn huge_logs() {
        let big = BigUint::from(3u32).pow(5000);
        assert!((ln_biguint(&big) - 5000.0 * 3f64.ln()).abs() < 1e-6);
        let r = ratio_to_f64(&BigUint::from(3u32).pow(2001), &BigUint::from(3u32).pow(2000));
        assert!((r - 3.0).abs() < 1e-9);
        assert_eq!(decimal_digits(&BigUint::from(2520u32)), 4);
    }

    proptest! {
        #[test]
        fn exp_unit_is_a_character(a in 0i64..1000, b in 1i64..1000, c in 0i64..1000, d in 1i64..1000) {
            let p = Precision::DEFAULT;
            let x = angle(a, b);
            let y = angle(c, d);
            let (u, v) = (exp_unit(&x, p), exp_unit(&y, p));
            let w = exp_unit(&x.add(&y), p);
            let bits = p.frac_bits();
            let re = (&u.re * &v.re - &u.im * &v.im) >> bits;
            let im = (&u.re * &v.im + &u.im * &v.re) >> bits;
            // 4 · 2^-precision expressed in units of 2^-frac_bits.
            let tol = BigInt::from(4u32) << (bits - p.bits());
            prop_assert!((re - &w.re).abs() <= tol);
            prop_assert!((im - &w.im).abs() <= tol);
            let unit = exp_unit(&x, p).to_c64().norm();
            prop_assert!((unit - 1.0).abs() < 2.0 * f64::EPSILON);
        }

        #[test]
        fn frac_quadratic_is_additive(k in -50i64..50, l in 1i64..20, a in 0i64..500, c in 0i64..500, q in 1i64..500) {
            let x1 = angle(a, q);
            let x2 = angle(c, q);
            let (k, l) = (BigInt::from(k), BigInt::from(l));
            let sum = frac_quadratic(&k, &l, &x1.add(&x2));
            let parts = frac_quadratic(&k, &l, &x1).add(&frac_quadratic(&k, &l, &x2));
            prop_assert_eq!(sum, parts);
        }

        #[test]
        fn reduce_is_idempotent(p in -10_000i64..10_000, q in 1i64..10_000) {
            let once = angle(p, q);
            let twice = reduce(&BigInt::from(once.numer().clone()), &BigInt::from(once.denom().clone())).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
