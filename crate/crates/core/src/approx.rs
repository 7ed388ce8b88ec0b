//! Rational approximation by continued-fraction convergents, and the error
//! schedule `M_k = L^(2(m+k))`, `R_k = L^(4(m+k))` that keeps the averaged
//! envelope `(1/m) Σ_k E_{L,M_k}(q_k, ε_k)` small.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::arith::{ln_biguint, RationalAngle};
use crate::error::{Error, Result};
use crate::expsum::error_envelope;

/// A convergent `p/q` of `x` with `q <= R` and `|x - p/q| <= 1/(qR)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DirichletApprox {
    #[serde(with = "crate::serde_big::biguint")]
    pub p: BigUint,
    #[serde(with = "crate::serde_big::biguint")]
    pub q: BigUint,
    #[serde(serialize_with = "ser_rational")]
    pub eps: BigRational,
    #[serde(with = "crate::serde_big::biguint")]
    pub r: BigUint,
}

fn ser_rational<S: serde::Serializer>(v: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&format_args!("{}/{}", v.numer(), v.denom()))
}

impl DirichletApprox {
    /// Whether `1 <= q <= R` and `ε <= 1/(qR)`.
    pub fn satisfies_bound(&self) -> bool {
        let qr = BigInt::from(&self.q * &self.r);
        !self.q.is_zero() && self.q <= self.r && &self.eps * BigRational::from_integer(qr) <= BigRational::one()
    }
}

/// All convergents `p_i/q_i` of `x ∈ [0, 1)`, ending with `x` itself.
pub fn convergents(x: &RationalAngle) -> Vec<(BigUint, BigUint)> {
    let (mut a, mut b) = (x.numer().clone(), x.denom().clone());
    // (p_{i-1}, q_{i-1}) and (p_{i-2}, q_{i-2}).
    let (mut p1, mut q1) = (BigUint::one(), BigUint::zero());
    let (mut p2, mut q2) = (BigUint::zero(), BigUint::one());
    let mut out = Vec::new();
    while !b.is_zero() {
        let (c, rem) = a.div_rem(&b);
        let p = &c * &p1 + &p2;
        let q = &c * &q1 + &q2;
        out.push((p.clone(), q.clone()));
        p2 = std::mem::replace(&mut p1, p);
        q2 = std::mem::replace(&mut q1, q);
        a = std::mem::replace(&mut b, rem);
    }
    out
}

fn approx_from(x: &RationalAngle, conv: &[(BigUint, BigUint)], r: &BigUint) -> DirichletApprox {
    // Denominators strictly increase after the first term, and q_0 = 1 <= R.
    let idx = conv.partition_point(|(_, q)| q <= r).max(1) - 1;
    let (p, q) = conv[idx].clone();
    let diff = x.to_rational() - BigRational::new(BigInt::from(p.clone()), BigInt::from(q.clone()));
    DirichletApprox { p, q, eps: diff.abs(), r: r.clone() }
}

/// The last convergent of `x` with denominator at most `R`.
pub fn dirichlet_approx(x: &RationalAngle, r: &BigUint) -> Result<DirichletApprox> {
    if r.is_zero() {
        return Err(Error::domain("approximation bound R must be at least 1"));
    }
    Ok(approx_from(x, &convergents(x), r))
}

/// [`dirichlet_approx`] for several bounds, sharing one expansion of `x`.
pub fn dirichlet_approx_many(x: &RationalAngle, rs: &[BigUint]) -> Result<Vec<DirichletApprox>> {
    if rs.iter().any(Zero::is_zero) {
        return Err(Error::domain("approximation bound R must be at least 1"));
    }
    let conv = convergents(x);
    Ok(rs.iter().map(|r| approx_from(x, &conv, r)).collect())
}

/// Smallest integer `m` with `m >= 8/δ`.
pub fn schedule_length(delta: f64) -> Result<u32> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    // Guard against 8/δ landing a hair above an integer through rounding.
    let m = (8.0 / delta - 1e-9).ceil().max(1.0);
    Ok(m as u32)
}

/// `M_k = L^(2(m+k))` for `k = 1..=m`.
pub fn schedule_moduli(l: &BigUint, m: u32) -> Vec<BigUint> {
    let base = l.pow(2 * m);
    let step = l * l;
    let mut out = Vec::with_capacity(m as usize);
    let mut cur = base;
    for _ in 0..m {
        cur *= &step;
        out.push(cur.clone());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub k: u32,
    #[serde(with = "crate::serde_big::biguint")]
    pub m_k: BigUint,
    /// The raw approximation with bound `R_k`.
    pub dirichlet: DirichletApprox,
    /// The frozen `p_k/q_k` actually used, and its `ε_k`.
    #[serde(with = "crate::serde_big::biguint")]
    pub p: BigUint,
    #[serde(with = "crate::serde_big::biguint")]
    pub q: BigUint,
    #[serde(serialize_with = "ser_rational")]
    pub eps: BigRational,
    pub envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorSchedule {
    pub delta: f64,
    pub c1: f64,
    pub m: u32,
    /// Largest `k` with `q'_k <= L^(4m)`, or 0.
    pub pivot: u32,
    pub rows: Vec<ScheduleRow>,
    pub average: f64,
    /// Number of `k` with `E_k > δ/4`.
    pub exceed_count: usize,
    /// `log q_k <= L^(1/2)` for every `k`.
    pub log_q_hypothesis: bool,
    /// `3 L^(-1/2) <= δ/4`.
    pub tail_hypothesis: bool,
}

impl ErrorSchedule {
    pub fn average_ok(&self) -> bool {
        self.average <= self.delta / 2.0
    }
}

pub fn build_error_schedule(x: &RationalAngle, l: &BigUint, delta: f64, c1: f64) -> Result<ErrorSchedule> {
    if l < &BigUint::from(2u32) {
        return Err(Error::domain("L must be at least 2"));
    }
    if !(delta > 0.0 && delta <= 0.56) {
        return Err(Error::domain(format!("delta must lie in (0, 0.56], got {delta}")));
    }
    let m = schedule_length(delta)?;
    let moduli = schedule_moduli(l, m);
    let rs: Vec<BigUint> = moduli.iter().map(|mk| mk * mk).collect();
    let raw = dirichlet_approx_many(x, &rs)?;

    let cap = l.pow(4 * m);
    let pivot = raw.iter().take_while(|a| a.q <= cap).count() as u32;
    let xr = x.to_rational();
    let frozen = |k: u32| -> &DirichletApprox {
        let idx = if k <= pivot { pivot } else { pivot + 1 };
        &raw[idx.clamp(1, m) as usize - 1]
    };

    let ln_l = ln_biguint(l);
    let sqrt_l = (0.5 * ln_l).exp();
    let mut rows = Vec::with_capacity(m as usize);
    for k in 1..=m {
        let f = frozen(k);
        let eps = (&xr - BigRational::new(BigInt::from(f.p.clone()), BigInt::from(f.q.clone()))).abs();
        let envelope = error_envelope(l, &moduli[k as usize - 1], &f.q, &eps, c1).value;
        rows.push(ScheduleRow {
            k,
            m_k: moduli[k as usize - 1].clone(),
            dirichlet: raw[k as usize - 1].clone(),
            p: f.p.clone(),
            q: f.q.clone(),
            eps,
            envelope,
        });
    }
    let average = rows.iter().map(|r| r.envelope).sum::<f64>() / m as f64;
    let exceed_count = rows.iter().filter(|r| r.envelope > delta / 4.0).count();
    let log_q_hypothesis = rows.iter().all(|r| r.q.is_one() || ln_biguint(&r.q) <= sqrt_l);
    let tail_hypothesis = 3.0 * (-0.5 * ln_l).exp() <= delta / 4.0;
    Ok(ErrorSchedule { delta, c1, m, pivot, rows, average, exceed_count, log_q_hypothesis, tail_hypothesis })
}
