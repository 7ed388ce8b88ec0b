//! Quadratic exponential sums `S(x, L, M) = (1/M) Σ_{k≤M} e(k² L² x)` at
//! rational points, the exact leading terms ϑ_L(q) and τ_L(q), and the error
//! envelope that bounds their difference.
//!
//! At `x = p/q` the phase `k ↦ k² L² x (mod 1)` is periodic with period equal
//! to the reduced denominator `q'` of `L² x`. A sum of any length is therefore
//! `⌊M/q'⌋` complete periods plus one partial period, and costs `O(q')`
//! additions regardless of how large `M` is.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{exp_unit, ln_biguint, ln_rational, FixedComplex, Precision, RationalAngle};
use crate::error::{Error, Result};

/// Longest period that is summed term by term.
pub const MAX_PERIOD: u64 = 1 << 24;

/// Table of the roots of unity `e(t/den)`, `0 <= t < den`.
#[derive(Clone, Debug)]
pub struct RootTable {
    den: u64,
    re: Vec<BigInt>,
    im: Vec<BigInt>,
    frac_bits: u32,
}

impl RootTable {
    pub fn new(den: u64, precision: Precision) -> Self {
        assert!(den >= 1, "root table needs a positive denominator");
        let n = den as usize;
        let mut re = vec![BigInt::zero(); n];
        let mut im = vec![BigInt::zero(); n];
        for t in 0..=n / 2 {
            let v = exp_unit(&RationalAngle::new(t as u64, den).expect("den >= 1"), precision);
            if t != 0 && t != n - t {
                re[n - t] = v.re.clone();
                im[n - t] = -&v.im;
            }
            re[t] = v.re;
            im[t] = v.im;
        }
        RootTable { den, re, im, frac_bits: precision.frac_bits() }
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn get(&self, t: u64) -> FixedComplex {
        let t = (t % self.den) as usize;
        FixedComplex { re: self.re[t].clone(), im: self.im[t].clone(), frac_bits: self.frac_bits }
    }
}

/// One full period of `Σ e(k² a/q)` together with its prefixes at `cuts`.
#[derive(Clone, Debug)]
pub struct PeriodSums {
    pub complete: FixedComplex,
    /// `prefixes[i] = Σ_{k=1}^{cuts[i]} e(k² a/q)`.
    pub prefixes: Vec<FixedComplex>,
}

/// Walks `k = 1..=q` once, where `q = table.den()`. Every cut must be `< q`.
pub fn period_sums(a: u64, table: &RootTable, cuts: &[u64]) -> PeriodSums {
    let q = table.den;
    let bits = table.frac_bits;
    let wanted: BTreeSet<u64> = cuts.iter().copied().filter(|&c| c > 0).collect();
    let mut snapshots: Vec<(u64, FixedComplex)> = Vec::with_capacity(wanted.len());
    let mut next = wanted.iter().copied().peekable();

    let mut re = BigInt::zero();
    let mut im = BigInt::zero();
    let a = a % q;
    // phase = k² a mod q, updated through (k+1)² = k² + 2k + 1.
    let mut phase = a;
    let step_base = a as u128;
    for k in 1..=q {
        re += &table.re[phase as usize];
        im += &table.im[phase as usize];
        if next.peek() == Some(&k) {
            next.next();
            snapshots.push((k, FixedComplex { re: re.clone(), im: im.clone(), frac_bits: bits }));
        }
        let step = ((2 * k as u128 + 1) * step_base % q as u128) as u64;
        phase = (phase + step) % q;
    }
    let prefixes = cuts
        .iter()
        .map(|&c| {
            if c == 0 {
                FixedComplex::zero(bits)
            } else {
                let i = snapshots.binary_search_by_key(&c, |s| s.0).expect("cut below period");
                snapshots[i].1.clone()
            }
        })
        .collect();
    PeriodSums { complete: FixedComplex { re, im, frac_bits: bits }, prefixes }
}

pub(crate) fn period_of(q: &BigUint) -> Result<u64> {
    match q.to_u64() {
        Some(v) if v <= MAX_PERIOD => Ok(v),
        _ => Err(Error::PeriodTooLarge { period: q.clone(), limit: MAX_PERIOD }),
    }
}

/// `S(x, L, M)`, evaluated through the period decomposition
/// `S = (⌊M/q'⌋·C + P_{M mod q'}) / M`.
pub fn partial_sum(x: &RationalAngle, l: &BigUint, m: &BigUint, precision: Precision) -> Result<FixedComplex> {
    if m.is_zero() {
        return Err(Error::domain("sum length M must be at least 1"));
    }
    let y = x.scale(&(l * l));
    let q = period_of(y.denom())?;
    let a = y.numer().to_u64().expect("numerator below denominator");
    let (whole, rest) = m.div_rem(&BigUint::from(q));
    let rest = rest.to_u64().expect("remainder below period");
    let table = RootTable::new(q, precision);
    let sums = period_sums(a, &table, &[rest]);
    let whole = BigInt::from(whole);
    let mut total = FixedComplex {
        re: &sums.complete.re * &whole,
        im: &sums.complete.im * &whole,
        frac_bits: table.frac_bits,
    };
    total += &sums.prefixes[0];
    Ok(total.mul_ratio(&BigInt::one(), &BigInt::from(m.clone())))
}

/// `(1/q) Σ_{k=1}^{q} e(k² L² p/q)`, summed over the full unreduced period.
pub fn complete_gauss_sum(p: &BigInt, q: &BigUint, l: &BigUint, precision: Precision) -> Result<FixedComplex> {
    if q.is_zero() {
        return Err(Error::ZeroDenominator);
    }
    let qi = BigInt::from(q.clone());
    if !p.gcd(&qi).is_one() {
        return Err(Error::domain(format!("numerator {p} is not coprime to {q}")));
    }
    let n = period_of(q)?;
    let c = (BigInt::from(l * l) * p).mod_floor(&qi).to_u64().expect("residue below q");
    let table = RootTable::new(n, precision);
    let mut acc = FixedComplex::zero(table.frac_bits);
    for k in 1..=n {
        let t = ((k as u128 * k as u128 % n as u128) * c as u128 % n as u128) as u64;
        acc += &table.get(t);
    }
    Ok(acc.mul_ratio(&BigInt::one(), &qi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadingCase {
    /// `q | L²`.
    Divides,
    /// `q/(q, L²) ≡ 2 (mod 4)`.
    Vanishes,
    /// Magnitude `r^(-1/2)` with `r = q/(q, 2L²)`.
    Generic,
}

/// The exact leading term of `S(p/q, L, M)` for large `M`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeadingTerm {
    pub value: f64,
    pub case: LeadingCase,
    #[serde(with = "crate::serde_big::biguint")]
    pub r: BigUint,
}

fn inv_sqrt(r: &BigUint) -> f64 {
    match r.to_u64() {
        Some(v) if v < (1 << 53) => 1.0 / (v as f64).sqrt(),
        _ => (-0.5 * ln_biguint(r)).exp(),
    }
}

fn classify_u64(l_mod_q: u64, q: u64) -> (LeadingCase, u64) {
    let q128 = q as u128;
    let l2 = (l_mod_q as u128 * l_mod_q as u128 % q128) as u64;
    let u = q / q.gcd(&l2);
    let r = q / q.gcd(&((2 * l2 as u128 % q128) as u64));
    if u == 1 {
        (LeadingCase::Divides, r)
    } else if u % 4 == 2 {
        (LeadingCase::Vanishes, r)
    } else {
        (LeadingCase::Generic, r)
    }
}

fn classify(l: &BigUint, q: &BigUint) -> (LeadingCase, BigUint) {
    assert!(!q.is_zero(), "denominator q must be positive");
    if let Some(qs) = q.to_u64() {
        let lm = (l % qs).to_u64().expect("residue fits");
        let (case, r) = classify_u64(lm, qs);
        return (case, BigUint::from(r));
    }
    let lm = l % q;
    let l2 = &lm * &lm % q;
    let u = q / q.gcd(&l2);
    let r = q / q.gcd(&((&l2 << 1u32) % q));
    let case = if u.is_one() {
        LeadingCase::Divides
    } else if (&u % 4u32) == BigUint::from(2u32) {
        LeadingCase::Vanishes
    } else {
        LeadingCase::Generic
    };
    (case, r)
}

fn leading(l: &BigUint, q: &BigUint, generic_sign: f64) -> LeadingTerm {
    let (case, r) = classify(l, q);
    let value = match case {
        LeadingCase::Divides => 1.0,
        LeadingCase::Vanishes => 0.0,
        LeadingCase::Generic => generic_sign * inv_sqrt(&r),
    };
    LeadingTerm { value, case, r }
}

/// ϑ_L(q): 1 if `q | L²`, 0 if `q/(q,L²) ≡ 2 (mod 4)`, `r^(-1/2)` otherwise.
pub fn vartheta(l: &BigUint, q: &BigUint) -> LeadingTerm {
    leading(l, q, 1.0)
}

/// τ_L(q): as [`vartheta`] with the generic case negated.
pub fn tau(l: &BigUint, q: &BigUint) -> LeadingTerm {
    leading(l, q, -1.0)
}

/// τ_L(q) for `q` that fits a machine word, given `L mod q`.
pub fn tau_value_u64(l_mod_q: u64, q: u64) -> f64 {
    match classify_u64(l_mod_q, q) {
        (LeadingCase::Divides, _) => 1.0,
        (LeadingCase::Vanishes, _) => 0.0,
        (LeadingCase::Generic, r) => -1.0 / (r as f64).sqrt(),
    }
}

/// `E_{L,M}(q, ε) = min{c1 (√log q/√M + √(q log q)/M + L²M²ε), 2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub c1: f64,
    pub value: f64,
}

/// `√(log q)/√M + √(q log q)/M` with natural logarithms and `log 1 = 0`.
pub fn weyl_terms(q: &BigUint, m: &BigUint) -> f64 {
    if q <= &BigUint::one() {
        return 0.0;
    }
    let ln_q = ln_biguint(q);
    let ln_m = ln_biguint(m);
    let ln_ln_q = ln_q.ln();
    (0.5 * ln_ln_q - 0.5 * ln_m).exp() + (0.5 * ln_q + 0.5 * ln_ln_q - ln_m).exp()
}

pub fn error_envelope(l: &BigUint, m: &BigUint, q: &BigUint, eps: &BigRational, c1: f64) -> ErrorEnvelope {
    let mut sum = weyl_terms(q, m);
    if !eps.is_zero() && !l.is_zero() && !m.is_zero() {
        sum += (2.0 * ln_biguint(l) + 2.0 * ln_biguint(m) + ln_rational(eps)).exp();
    }
    let value = (c1 * sum).min(2.0);
    ErrorEnvelope { c1, value }
}

fn direct_weighted_sum(x: &RationalAngle, m: u64, weight: impl Fn(u64) -> BigInt, precision: Precision) -> Result<(FixedComplex, BigInt)> {
    let q = period_of(x.denom())?;
    let p = x.numer().to_u64().expect("numerator below denominator");
    let table = RootTable::new(q, precision);
    let mut re = BigInt::zero();
    let mut im = BigInt::zero();
    let mut total = BigInt::zero();
    for k in 1..=m {
        let w = weight(k);
        if w.is_zero() {
            continue;
        }
        let t = ((k as u128 * k as u128 % q as u128) * p as u128 % q as u128) as usize;
        re += &table.re[t] * &w;
        im += &table.im[t] * &w;
        total += w;
    }
    Ok((FixedComplex { re, im, frac_bits: table.frac_bits }, total))
}

fn direct_length(m: &BigUint) -> Result<u64> {
    const MAX_DIRECT: u64 = 1 << 26;
    match m.to_u64() {
        Some(v) if v <= MAX_DIRECT => Ok(v),
        _ => Err(Error::domain(format!("weighted sums are summed directly; M = {m} exceeds {MAX_DIRECT}"))),
    }
}

/// `(1/M') Σ_{k≤M} 2k e(k² x)` with `M' = M(M+1)`.
pub fn dirichlet_weighted_sum(x: &RationalAngle, m: &BigUint, precision: Precision) -> Result<FixedComplex> {
    let m = direct_length(m)?;
    if m == 0 {
        return Err(Error::domain("sum length M must be at least 1"));
    }
    let (acc, total) = direct_weighted_sum(x, m, |k| BigInt::from(2 * k), precision)?;
    debug_assert_eq!(total, BigInt::from(m) * BigInt::from(m + 1));
    Ok(acc.mul_ratio(&BigInt::one(), &total))
}

/// `(1/M'') Σ_{k≤M} k(1 - k²/M²) e(k² x)`, normalized to 1 at integers.
pub fn fejer_weighted_sum(x: &RationalAngle, m: &BigUint, precision: Precision) -> Result<FixedComplex> {
    let m = direct_length(m)?;
    if m <= 1 {
        return Err(Error::domain("Fejér weights vanish identically for M <= 1"));
    }
    let mm = BigInt::from(m) * BigInt::from(m);
    // Weights scaled by M², which cancels in the normalization.
    let (acc, total) = direct_weighted_sum(x, m, |k| BigInt::from(k) * (&mm - BigInt::from(k) * BigInt::from(k)), precision)?;
    Ok(acc.mul_ratio(&BigInt::one(), &total))
}

/// Largest `q` of the calibration sweep.
pub const CALIBRATION_Q_MAX: u64 = 2000;
/// Sum lengths of the calibration sweep.
pub const CALIBRATION_LENGTHS: [u64; 3] = [100, 1_000, 10_000];
pub const CALIBRATION_SEED: u64 = 0x5e_edc1;
pub const CALIBRATION_SAFETY: f64 = 1.25;

/// Error constant `c1` of the envelope, measured by [`calibrate_c1`] over the
/// default sweep and multiplied by [`CALIBRATION_SAFETY`].
pub const DEFAULT_C1: f64 = 0.2555;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    /// Largest observed `||S(p/q,1,M)| - ϑ_1(q)| / weyl_terms(q, M)`.
    pub max_ratio: f64,
    pub c1: f64,
    pub worst_p: u64,
    pub worst_q: u64,
    pub worst_m: u64,
    pub samples: usize,
}

/// Numerators sampled for denominator `q`: every unit below 40, otherwise
/// `1`, `q - 1` and four seeded random units.
pub fn calibration_numerators(q: u64, seed: u64) -> Vec<u64> {
    if q <= 40 {
        return (1..q.max(2)).filter(|p| p.gcd(&q) == 1).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ q.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut ps = vec![1, q - 1];
    while ps.len() < 6 {
        let p = rng.gen_range(2..q - 1);
        if p.gcd(&q) == 1 && !ps.contains(&p) {
            ps.push(p);
        }
    }
    ps
}

/// Measures the worst ratio between the true deviation `||S| - ϑ_1(q)|` and
/// the Weyl terms over `2 <= q <= q_max`, sampled numerators, and the given
/// sum lengths.
pub fn calibrate_c1(q_max: u64, lengths: &[u64], seed: u64, precision: Precision) -> Calibration {
    let per_q: Vec<(f64, u64, u64, u64, usize)> = (2..=q_max)
        .into_par_iter()
        .map(|q| {
            let table = RootTable::new(q, precision);
            let theta = vartheta(&BigUint::one(), &BigUint::from(q)).value;
            let cuts: Vec<u64> = lengths.iter().map(|m| m % q).collect();
            let mut worst = (f64::NEG_INFINITY, 0, q, 0, 0usize);
            for p in calibration_numerators(q, seed) {
                let sums = period_sums(p, &table, &cuts);
                for (i, &m) in lengths.iter().enumerate() {
                    let whole = BigInt::from(m / q);
                    let mut s = FixedComplex {
                        re: &sums.complete.re * &whole,
                        im: &sums.complete.im * &whole,
                        frac_bits: table.frac_bits,
                    };
                    s += &sums.prefixes[i];
                    let value = s.to_c64().norm() / m as f64;
                    let ratio = (value - theta).abs() / weyl_terms(&BigUint::from(q), &BigUint::from(m));
                    worst.4 += 1;
                    if ratio > worst.0 {
                        worst = (ratio, p, q, m, worst.4);
                    }
                }
            }
            worst
        })
        .collect();
    let samples = per_q.iter().map(|w| w.4).sum();
    let worst = per_q
        .into_iter()
        .fold((f64::NEG_INFINITY, 0, 0, 0, 0), |acc, w| if w.0 > acc.0 { w } else { acc });
    Calibration {
        max_ratio: worst.0,
        c1: worst.0 * CALIBRATION_SAFETY,
        worst_p: worst.1,
        worst_q: worst.2,
        worst_m: worst.3,
        samples,
    }
}

/// Oracle-versus-formula comparison for one `(q, L)`: every unit `p mod q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussRow {
    pub q: u64,
    pub l: u64,
    pub vartheta: f64,
    pub case: LeadingCase,
    pub numerators: usize,
    /// `max_p ||complete_gauss_sum(p, q, L)| - ϑ_L(q)|`.
    pub max_error: f64,
}

/// Runs the comparison for `1 <= q <= q_max` and every `L` in `ls`. The
/// complete sum depends on `p L² mod q` only, so each residue is summed once.
pub fn gauss_rows(q_max: u64, ls: &[u64], precision: Precision) -> Vec<GaussRow> {
    (1..=q_max)
        .into_par_iter()
        .flat_map_iter(|q| {
            let table = RootTable::new(q, precision);
            let units: Vec<u64> = (0..q).filter(|p| p.gcd(&q) == 1).collect();
            let mut cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
            let rows: Vec<GaussRow> = ls
                .iter()
                .map(|&l| {
                    let lead = vartheta(&BigUint::from(l), &BigUint::from(q));
                    let l2 = (l as u128 * l as u128 % q as u128) as u64;
                    let max_error = units
                        .iter()
                        .map(|&p| {
                            let c = (p as u128 * l2 as u128 % q as u128) as u64;
                            let norm = *cache.entry(c).or_insert_with(|| {
                                period_sums(c, &table, &[]).complete.to_c64().norm() / q as f64
                            });
                            (norm - lead.value).abs()
                        })
                        .fold(0.0, f64::max);
                    GaussRow { q, l, vartheta: lead.value, case: lead.case, numerators: units.len(), max_error }
                })
                .collect();
            rows
        })
        .collect()
}
