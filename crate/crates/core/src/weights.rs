//! Geometric weights `λ^j = 2^(-j/2)` over a divisibility chain
//! `1 = L_0 | L_1 | … | L_l` chosen so that the weighted leading terms
//! `(1/Λ) Σ_j λ^j τ(L_j, q)` never drop below `-δ/2`.
//!
//! Every prime `p < 2^l` gets an exponent ladder `d_0 <= … <= d_l` that rises
//! by one every `e = ⌊log2 p⌋` levels, and `L_j = Π_p p^(d_j)`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{ln_biguint, QuadSurd};
use crate::error::{Error, Result};
use crate::expsum::{tau, tau_value_u64};

/// The weight ratio `λ = 2^(-1/2)`.
pub const LAMBDA: f64 = FRAC_1_SQRT_2;

/// Tag used for `λ` in serialized schemes.
pub const LAMBDA_TAG: &str = "2^-1/2";

/// Constant of the bound `log lcm(1..n) <= 1.04 n`.
pub const LCM_CONSTANT: f64 = 1.04;

/// Largest δ accepted by the polynomial construction.
pub const MAX_CONSTRUCTION_DELTA: f64 = 0.56;

/// Primes below `n`, by sieve.
pub fn primes_below(n: u64) -> Vec<u64> {
    if n < 3 {
        return Vec::new();
    }
    let n = n as usize;
    let mut composite = vec![false; n];
    let mut out = Vec::new();
    for i in 2..n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j < n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Trial-division factorization into `(prime, exponent)` pairs.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            let mut e = 0;
            while n.is_multiple_of(d) {
                n /= d;
                e += 1;
            }
            out.push((d, e));
        }
        d += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

fn tau_prime_power(p: u64, j: u32, k: u32) -> f64 {
    tau(&BigUint::from(p).pow(j), &BigUint::from(p).pow(k)).value
}

/// `Σ_{j=0}^{n} μ^j τ(p^j, p^k)`. Requires `p^(-1/2) <= μ < 1`.
pub fn lemma1_lhs(p: u64, mu: f64, n: u32, k: u32) -> Result<f64> {
    let floor = (p as f64).powf(-0.5);
    if !(mu < 1.0 && mu >= floor * (1.0 - 1e-12)) {
        return Err(Error::domain(format!("mu = {mu} outside [{floor}, 1) for p = {p}")));
    }
    Ok((0..=n).map(|j| mu.powi(j as i32) * tau_prime_power(p, j, k)).sum())
}

/// The right-hand side `-μ^(n+1)/(1-μ)`.
pub fn lemma1_bound(mu: f64, n: u32) -> f64 {
    -mu.powi(n as i32 + 1) / (1.0 - mu)
}

/// `e` with `2^e <= p < 2^(e+1)`.
fn binary_width(p: u64) -> u32 {
    63 - p.leading_zeros()
}

/// Exponent ladder `[d_0, …, d_l]` of the prime `p`: `d_j = ⌊j/e⌋` with
/// `e = ⌊log2 p⌋`. Primes `p >= 2^l` get the all-zero ladder.
pub fn prime_exponents(p: u64, l: u32) -> Vec<u32> {
    if p < 2 || (l < 64 && p >= 1u64 << l) {
        return vec![0; l as usize + 1];
    }
    let e = binary_width(p);
    (0..=l).map(|j| j / e).collect()
}

/// `B_l(p, k) = Σ_{j=0}^{l} λ^j τ(p^(d_j), p^k)` for the ladder of `p`.
pub fn lemma2_lhs(p: u64, l: u32, k: u32) -> f64 {
    prime_exponents(p, l)
        .iter()
        .enumerate()
        .map(|(j, &d)| LAMBDA.powi(j as i32) * tau_prime_power(p, d, k))
        .sum()
}

/// The right-hand side `-5 λ^l`.
pub fn lemma2_bound(l: u32) -> f64 {
    -5.0 * LAMBDA.powi(l as i32)
}

/// Whether `p^(d_l) < 2^(2l)` for the ladder of `p`.
pub fn ladder_cap_holds(p: u64, l: u32) -> bool {
    let top = *prime_exponents(p, l).last().expect("ladder is nonempty");
    BigUint::from(p).pow(top) < BigUint::one() << (2 * l)
}

/// Smallest `l` with `δ/20 <= 2^(-l/2) <= δ/10`.
pub fn level_count(delta: f64) -> Result<u32> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    for l in 0..=256u32 {
        let v = 2f64.powf(-(l as f64) / 2.0);
        if v < delta / 20.0 {
            break;
        }
        if v <= delta / 10.0 {
            return Ok(l);
        }
    }
    // The window has width 2 in l, so this is only reachable through rounding.
    let l = (2.0 * (10.0 / delta).log2()).round().max(0.0);
    Err(Error::InfeasibleDelta { delta, nearest: 10.0 * 2f64.powf(-l / 2.0) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightScheme {
    pub delta: f64,
    pub l: u32,
    /// `Λ = Σ_{j=0}^{l} λ^j`.
    pub big_lambda: f64,
    /// `L_0 = 1, …, L_l = L_max`.
    pub chain: Vec<BigUint>,
    /// Ladders of every prime below `2^l`.
    pub ladders: BTreeMap<u64, Vec<u32>>,
}

pub fn build_scheme(delta: f64) -> Result<WeightScheme> {
    let l = level_count(delta)?;
    let ladders: BTreeMap<u64, Vec<u32>> = primes_below(1u64 << l)
        .into_iter()
        .map(|p| (p, prime_exponents(p, l)))
        .collect();
    let chain = (0..=l as usize)
        .map(|j| {
            ladders
                .iter()
                .fold(BigUint::one(), |acc, (&p, d)| acc * BigUint::from(p).pow(d[j]))
        })
        .collect();
    Ok(WeightScheme { delta, l, big_lambda: big_lambda(l), chain, ladders })
}

fn big_lambda(l: u32) -> f64 {
    (0..=l).map(|j| LAMBDA.powi(j as i32)).sum()
}

/// `(1/Λ) Σ_j λ^j τ(L_j, q)`.
pub fn weighted_tau(q: &BigUint, scheme: &WeightScheme) -> f64 {
    scheme.weighted_tau(q)
}

impl WeightScheme {
    pub fn l_max(&self) -> &BigUint {
        self.chain.last().expect("chain is nonempty")
    }

    /// Ladder of any prime; zero for primes outside the table.
    pub fn ladder(&self, p: u64) -> Vec<u32> {
        self.ladders.get(&p).cloned().unwrap_or_else(|| vec![0; self.l as usize + 1])
    }

    /// The exact weight ratio `λ` as an element of `Q(√2)`.
    pub fn exact_lambda(&self) -> QuadSurd {
        QuadSurd::inv_sqrt2()
    }

    /// `λ^j / Λ`.
    pub fn level_weight(&self, j: usize) -> f64 {
        LAMBDA.powi(j as i32) / self.big_lambda
    }

    pub fn weighted_tau(&self, q: &BigUint) -> f64 {
        if let Some(q) = q.to_u64() {
            return self.weighted_tau_u64(q);
        }
        let s: f64 = self
            .chain
            .iter()
            .enumerate()
            .map(|(j, lj)| LAMBDA.powi(j as i32) * tau(lj, q).value)
            .sum();
        s / self.big_lambda
    }

    pub fn weighted_tau_u64(&self, q: u64) -> f64 {
        assert!(q >= 1, "q must be positive");
        let s: f64 = self
            .chain
            .iter()
            .enumerate()
            .map(|(j, lj)| {
                let lm = (lj % q).to_u64().expect("residue below q");
                LAMBDA.powi(j as i32) * tau_value_u64(lm, q)
            })
            .sum();
        s / self.big_lambda
    }

    /// The per-prime lower bound `(1/Λ) Σ_j λ^j τ(p^(d_j), p^k)`.
    pub fn prime_bound(&self, p: u64, k: u32) -> f64 {
        let s: f64 = self
            .ladder(p)
            .iter()
            .enumerate()
            .map(|(j, &d)| LAMBDA.powi(j as i32) * tau_prime_power(p, d, k))
            .sum();
        s / self.big_lambda
    }

    /// A prime `p | q` (or `p = 2` when `q = 1`) such that
    /// `τ(L_j, q) >= τ(p^(d_j), p^(v_p(q)))` for every level `j`.
    pub fn reducing_prime(&self, factors: &[(u64, u32)]) -> Option<u64> {
        let q = factors
            .iter()
            .fold(BigUint::one(), |acc, &(p, k)| acc * BigUint::from(p).pow(k));
        let actual: Vec<f64> = self.chain.iter().map(|lj| tau(lj, &q).value).collect();
        let candidates: Vec<(u64, u32)> = if factors.is_empty() { vec![(2, 0)] } else { factors.to_vec() };
        candidates.into_iter().find_map(|(p, k)| {
            let ladder = self.ladder(p);
            let ok = actual
                .iter()
                .zip(&ladder)
                .all(|(&t, &d)| t >= tau_prime_power(p, d, k) - 1e-12);
            ok.then_some(p)
        })
    }

    /// Human-readable list of broken invariants; empty when the scheme is sound.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let v = 2f64.powf(-(self.l as f64) / 2.0);
        if !(self.delta / 20.0 <= v && v <= self.delta / 10.0) {
            bad.push(format!("2^(-l/2) = {v} outside [δ/20, δ/10] for δ = {}", self.delta));
        }
        if self.chain.len() != self.l as usize + 1 {
            bad.push(format!("chain has {} levels, expected {}", self.chain.len(), self.l + 1));
        }
        if !self.chain.first().is_some_and(|c| c.is_one()) {
            bad.push("L_0 is not 1".into());
        }
        for (j, w) in self.chain.windows(2).enumerate() {
            if !w[1].is_multiple_of(&w[0]) {
                bad.push(format!("L_{j} does not divide L_{}", j + 1));
            }
        }
        for (&p, ladder) in &self.ladders {
            if p >= 1u64 << self.l {
                bad.push(format!("prime {p} is not below 2^l"));
            }
            if ladder.windows(2).any(|w| w[0] > w[1]) {
                bad.push(format!("ladder of {p} decreases"));
            }
            if !(BigUint::from(p).pow(*ladder.last().unwrap_or(&0)) < BigUint::one() << (2 * self.l)) {
                bad.push(format!("p^d_l >= 2^(2l) for p = {p}"));
            }
        }
        for (j, lj) in self.chain.iter().enumerate() {
            let expect = self
                .ladders
                .iter()
                .fold(BigUint::one(), |acc, (&p, d)| acc * BigUint::from(p).pow(d[j]));
            if &expect != lj {
                bad.push(format!("L_{j} differs from its prime factorization"));
            }
        }
        bad
    }

    pub fn to_document(&self) -> SchemeDocument {
        SchemeDocument {
            delta: self.delta,
            l: self.l,
            lambda: LAMBDA_TAG.to_string(),
            big_lambda: self.big_lambda,
            chain: self.chain.clone(),
            ladders: self.ladders.iter().map(|(p, d)| (p.to_string(), d.clone())).collect(),
        }
    }

    pub fn from_document(doc: &SchemeDocument) -> Result<Self> {
        if doc.lambda != LAMBDA_TAG {
            return Err(Error::domain(format!("unsupported weight ratio `{}`", doc.lambda)));
        }
        let ladders = doc
            .ladders
            .iter()
            .map(|(p, d)| {
                p.parse::<u64>()
                    .map(|p| (p, d.clone()))
                    .map_err(|_| Error::domain(format!("bad prime key `{p}`")))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let scheme = WeightScheme {
            delta: doc.delta,
            l: doc.l,
            big_lambda: big_lambda(doc.l),
            chain: doc.chain.clone(),
            ladders,
        };
        match scheme.invariant_violations().first() {
            Some(v) => Err(Error::domain(format!("invalid scheme: {v}"))),
            None => Ok(scheme),
        }
    }
}

/// JSON form of a [`WeightScheme`]; big integers are decimal strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeDocument {
    pub delta: f64,
    pub l: u32,
    pub lambda: String,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(with = "crate::serde_big::biguint_vec")]
    pub chain: Vec<BigUint>,
    pub ladders: BTreeMap<String, Vec<u32>>,
}

/// Outcome of a sweep of the weighted leading-term contract.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractSweep {
    pub checked: usize,
    pub min_value: f64,
    /// Decimal form of the `q` attaining the minimum.
    pub argmin: String,
    pub violations: usize,
    pub threshold: f64,
}

/// Checks `weighted_tau(q) >= -δ/2` for every `1 <= q <= q_max`.
pub fn sweep_contract(scheme: &WeightScheme, q_max: u64) -> ContractSweep {
    let threshold = -scheme.delta / 2.0;
    let values: Vec<(u64, f64)> = (1..=q_max)
        .into_par_iter()
        .map(|q| (q, scheme.weighted_tau_u64(q)))
        .collect();
    summarize(values.into_iter().map(|(q, v)| (q.to_string(), v)), threshold)
}

/// Checks the contract on moduli `q = Π p^(a_p)` built from the given factorizations.
pub fn sweep_contract_structured(scheme: &WeightScheme, moduli: &[Vec<(u64, u32)>]) -> ContractSweep {
    let threshold = -scheme.delta / 2.0;
    let values: Vec<(String, f64)> = moduli
        .par_iter()
        .map(|f| {
            let q = f.iter().fold(BigUint::one(), |acc, &(p, k)| acc * BigUint::from(p).pow(k));
            (q.to_string(), scheme.weighted_tau(&q))
        })
        .collect();
    summarize(values.into_iter(), threshold)
}

fn summarize(values: impl Iterator<Item = (String, f64)>, threshold: f64) -> ContractSweep {
    let mut out = ContractSweep { checked: 0, min_value: f64::INFINITY, argmin: String::new(), violations: 0, threshold };
    for (q, v) in values {
        out.checked += 1;
        if v < threshold {
            out.violations += 1;
        }
        if v < out.min_value {
            out.min_value = v;
            out.argmin = q;
        }
    }
    out
}

/// Random factorization with one to four distinct primes below `2^l`,
/// each raised to an exponent in `1..=max_exponent`.
pub fn random_structured_modulus<R: Rng>(rng: &mut R, l: u32, max_exponent: u32) -> Vec<(u64, u32)> {
    let primes = primes_below(1u64 << l);
    let count = rng.gen_range(1..=4usize.min(primes.len()));
    let mut picked: Vec<(u64, u32)> = Vec::with_capacity(count);
    while picked.len() < count {
        // Bias toward small primes, where the leading terms are largest.
        let idx = if rng.gen_bool(0.6) { rng.gen_range(0..primes.len().min(8)) } else { rng.gen_range(0..primes.len()) };
        let p = primes[idx];
        if picked.iter().all(|&(q, _)| q != p) {
            picked.push((p, rng.gen_range(1..=max_exponent)));
        }
    }
    picked.sort_unstable();
    picked
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LcmCheck {
    pub n: u64,
    #[serde(with = "crate::serde_big::biguint")]
    pub lcm: BigUint,
    pub ln_lcm: f64,
    pub ok: bool,
}

/// `K = lcm(1..n)` and whether `log K <= 1.04 n`.
pub fn lcm_bound_check(n: u64) -> LcmCheck {
    let lcm = (1..=n.max(1)).fold(BigUint::one(), |acc, i| acc.lcm(&BigUint::from(i)));
    let ln_lcm = ln_biguint(&lcm);
    LcmCheck { n, ok: ln_lcm <= LCM_CONSTANT * n as f64, lcm, ln_lcm }
}

/// `(n, log lcm(1..n))` for every `n <= n_max`, computed incrementally.
pub fn lcm_log_table(n_max: u64) -> Vec<(u64, f64)> {
    let mut k = BigUint::one();
    (1..=n_max)
        .map(|n| {
            k = k.lcm(&BigUint::from(n));
            (n, ln_biguint(&k))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The closed-form table of τ(p^j, p^k) for a single shared prime.
    fn tau_table(p: u64, j: u32, k: u32) -> f64 {
        let diff = j as f64 - k as f64 / 2.0;
        if diff >= 0.0 {
            1.0
        } else if p == 2 && diff == -0.5 {
            0.0
        } else if p == 2 {
            -(2f64.powf(diff + 0.5))
        } else {
            -((p as f64).powf(diff))
        }
    }

    #[test]
    fn prime_power_tau_matches_table() {
        for p in [2u64, 3, 5, 7, 13, 31] {
            for j in 0..8 {
                for k in 0..20 {
                    let got = tau_prime_power(p, j, k);
                    let want = tau_table(p, j, k);
                    assert!((got - want).abs() < 1e-14, "p={p} j={j} k={k}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn lemma1_examples() {
        let mu = 0.6;
        let v = lemma1_lhs(5, mu, 4, 0).unwrap();
        assert!((v - (0..=4).map(|j| mu.powi(j)).sum::<f64>()).abs() < 1e-15);

        let mu3 = 3f64.powf(-0.5);
        let v = lemma1_lhs(3, mu3, 0, 2).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-15);
        assert!(v >= lemma1_bound(mu3, 0));
        assert!((lemma1_bound(mu3, 0) + 1.366).abs() < 1e-3);

        let v = lemma1_lhs(2, LAMBDA, 1, 1).unwrap();
        assert!((v - LAMBDA).abs() < 1e-15);

        assert!(lemma1_lhs(2, 0.5, 3, 3).is_err());
        assert!(lemma1_lhs(2, 1.0, 3, 3).is_err());
    }

    #[test]
    fn ladder_examples() {
        assert_eq!(prime_exponents(2, 4), vec![0, 1, 2, 3, 4]);
        assert_eq!(prime_exponents(5, 4), vec![0, 0, 1, 1, 2]);
        assert_eq!(prime_exponents(11, 4), vec![0, 0, 0, 1, 1]);
        assert_eq!(prime_exponents(17, 4), vec![0; 5]);
        assert!(ladder_cap_holds(3, 9));
    }

    #[test]
    fn lemma2_examples() {
        let v = lemma2_lhs(7, 5, 0);
        assert!((v - big_lambda(5)).abs() < 1e-15);
        // Ladder [0, 1, 2] against 2^6: every level sits strictly below k/2.
        let v = lemma2_lhs(2, 2, 6);
        let want = tau_table(2, 0, 6) + LAMBDA * tau_table(2, 1, 6) + 0.5 * tau_table(2, 2, 6);
        assert!((v - want).abs() < 1e-15);
        assert!(v >= lemma2_bound(2));
        assert!((lemma2_bound(2) + 2.5).abs() < 1e-12);
    }

    #[test]
    fn lemma2_small_sweep() {
        for l in 1..=8u32 {
            for p in primes_below(1 << l) {
                assert!(ladder_cap_holds(p, l));
                for k in 0..=4 * l {
                    assert!(lemma2_lhs(p, l, k) >= lemma2_bound(l) - 1e-12, "l={l} p={p} k={k}");
                }
            }
        }
    }

    #[test]
    fn scheme_levels() {
        assert_eq!(level_count(0.4).unwrap(), 10);
        assert_eq!(level_count(0.5).unwrap(), 9);
        assert_eq!(level_count(0.7).unwrap(), 8);
        assert!(level_count(0.0).is_err());
        assert!(level_count(1.0).is_err());
    }

    #[test]
    fn scheme_invariants() {
        let s = build_scheme(0.5).unwrap();
        assert_eq!(s.l, 9);
        assert!(s.chain[0].is_one());
        assert_eq!(s.ladders.len(), 97);
        assert!(s.invariant_violations().is_empty(), "{:?}", s.invariant_violations());
        let k = lcm_bound_check(1 << s.l).lcm;
        assert!(s.l_max() <= &(&k * &k));
        assert_eq!(s.ladder(1009), vec![0; 10]);
    }

    #[test]
    fn weighted_tau_examples() {
        let s = build_scheme(0.5).unwrap();
        assert!((s.weighted_tau_u64(1) - 1.0).abs() < 1e-15);
        assert!(s.weighted_tau_u64(2) >= -0.25);
        let sweep = sweep_contract(&s, 5000);
        assert_eq!(sweep.violations, 0, "{sweep:?}");
        let big = BigUint::from(3u32).pow(40) * BigUint::from(2u32).pow(30);
        let direct: f64 = s
            .chain
            .iter()
            .enumerate()
            .map(|(j, lj)| LAMBDA.powi(j as i32) * tau(lj, &big).value)
            .sum::<f64>()
            / s.big_lambda;
        assert!((weighted_tau(&big, &s) - direct).abs() < 1e-15);
    }

    #[test]
    fn reducing_prime_exists() {
        let s = build_scheme(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let f = random_structured_modulus(&mut rng, s.l, 8);
            let p = s.reducing_prime(&f).unwrap_or_else(|| panic!("no prime for {f:?}"));
            let k = f.iter().find(|x| x.0 == p).map_or(0, |x| x.1);
            let q = f.iter().fold(BigUint::one(), |acc, &(p, k)| acc * BigUint::from(p).pow(k));
            assert!(s.weighted_tau(&q) >= s.prime_bound(p, k) - 1e-12);
        }
        assert_eq!(s.reducing_prime(&[]), Some(2));
        for q in 2..2000u64 {
            assert!(s.reducing_prime(&factorize(q)).is_some(), "q = {q}");
        }
    }

    #[test]
    fn lcm_examples() {
        let c = lcm_bound_check(1);
        assert!(c.lcm.is_one() && c.ok);
        let c = lcm_bound_check(10);
        assert_eq!(c.lcm, BigUint::from(2520u32));
        assert!((c.ln_lcm - 2520f64.ln()).abs() < 1e-12);
        assert!(c.ok);
        let table = lcm_log_table(300);
        assert!(table.iter().all(|&(n, ln)| ln <= LCM_CONSTANT * n as f64));
        assert!((table[9].1 - 2520f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn document_round_trip() {
        let s = build_scheme(0.5).unwrap();
        let json = serde_json::to_string(&s.to_document()).unwrap();
        assert!(json.contains("\"2^-1/2\""));
        let doc: SchemeDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(WeightScheme::from_document(&doc).unwrap(), s);

        let mut broken = doc.clone();
        broken.chain.swap(1, 2);
        assert!(WeightScheme::from_document(&broken).is_err());
    }

    #[test]
    fn primes_and_factors() {
        assert_eq!(primes_below(20), vec![2, 3, 5, 7, 11, 13, 17, 19]);
        assert_eq!(factorize(360), vec![(2, 3), (3, 2), (5, 1)]);
        assert!(factorize(1).is_empty());
        assert!(is_prime(97) && !is_prime(91));
    }
}
