//! The averaged polynomial
//!
//! `T(x) = (1/(mΛ)) Σ_{j=0}^{l} Σ_{k=1}^{m} λ^j Re S(x, L_j, M_k)`,
//!
//! whose spectrum is the set of squares `(L_j t)²`, `t <= M_k`. It is
//! evaluated exactly at rational points through complete periods, so the
//! cost depends on the reduced denominators of `L_j² x` and not on `M_k`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{schedule_length, schedule_moduli};
use crate::arith::{decimal_digits, fixed_to_f64, ln_biguint, Precision, QuadSurd, RationalAngle};
use crate::error::{Error, Result};
use crate::expsum::{period_of, period_sums, RootTable};
use crate::weights::{build_scheme, WeightScheme, MAX_CONSTRUCTION_DELTA};

/// Root tables above this size are rebuilt on demand instead of cached.
const CACHED_TABLE_LIMIT: u64 = 1 << 16;

/// Default cap on materialized coefficients.
pub const DEFAULT_TERM_CAP: u64 = 1 << 22;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstructionSchedule {
    pub delta: f64,
    /// Weight ratio; `2^(-1/2)` for real constructions.
    pub lambda: QuadSurd,
    /// `L_0 | L_1 | … | L_l`.
    pub chain: Vec<BigUint>,
    /// `M_1 < … < M_m`.
    pub moduli: Vec<BigUint>,
    pub scheme: Option<WeightScheme>,
}

pub fn build_construction(delta: f64) -> Result<ConstructionSchedule> {
    if !(delta > 0.0 && delta <= MAX_CONSTRUCTION_DELTA) {
        return Err(Error::domain(format!("delta must lie in (0, {MAX_CONSTRUCTION_DELTA}], got {delta}")));
    }
    let scheme = build_scheme(delta)?;
    let m = schedule_length(delta)?;
    let moduli = schedule_moduli(scheme.l_max(), m);
    Ok(ConstructionSchedule {
        delta,
        lambda: QuadSurd::inv_sqrt2(),
        chain: scheme.chain.clone(),
        moduli,
        scheme: Some(scheme),
    })
}

impl ConstructionSchedule {
    /// A hand-made schedule, e.g. for toy checks or altered weights.
    pub fn custom(delta: f64, lambda: QuadSurd, chain: Vec<BigUint>, moduli: Vec<BigUint>) -> Result<Self> {
        if chain.is_empty() || moduli.is_empty() {
            return Err(Error::domain("chain and moduli must be nonempty"));
        }
        if chain.iter().chain(&moduli).any(Zero::is_zero) {
            return Err(Error::domain("chain entries and moduli must be positive"));
        }
        if lambda.to_f64() <= 0.0 {
            return Err(Error::domain("weight ratio must be positive"));
        }
        Ok(ConstructionSchedule { delta, lambda, chain, moduli, scheme: None })
    }

    /// The same schedule with the weight ratio replaced.
    pub fn with_lambda(&self, lambda: QuadSurd) -> Result<Self> {
        Self::custom(self.delta, lambda, self.chain.clone(), self.moduli.clone())
    }

    pub fn m(&self) -> usize {
        self.moduli.len()
    }

    /// Number of levels `l + 1`.
    pub fn levels(&self) -> usize {
        self.chain.len()
    }

    pub fn l_max(&self) -> &BigUint {
        self.chain.last().expect("nonempty chain")
    }

    pub fn m_max(&self) -> &BigUint {
        self.moduli.iter().max().expect("nonempty moduli")
    }

    /// `λ^j/(mΛ)` as exact elements of `Q(√2)`.
    pub fn exact_level_weights(&self) -> Vec<QuadSurd> {
        let powers: Vec<QuadSurd> = (0..self.levels()).map(|j| self.lambda.pow(j as u32)).collect();
        let big_lambda = powers.iter().fold(QuadSurd::zero(), |acc, p| acc.add(p));
        let inv = big_lambda
            .scale(&BigRational::from_integer(BigInt::from(self.m())))
            .inv()
            .expect("positive weights");
        powers.iter().map(|p| p.mul(&inv)).collect()
    }

    pub fn level_weights(&self) -> Vec<f64> {
        let lambda = self.lambda.to_f64();
        let powers: Vec<f64> = (0..self.levels()).map(|j| lambda.powi(j as i32)).collect();
        let norm = self.m() as f64 * powers.iter().sum::<f64>();
        powers.into_iter().map(|p| p / norm).collect()
    }

    /// The declared degree `n = M_max² L_max²`.
    pub fn degree(&self) -> BigUint {
        let v = self.m_max() * self.l_max();
        &v * &v
    }

    pub fn ln_degree(&self) -> f64 {
        2.0 * (ln_biguint(self.m_max()) + ln_biguint(self.l_max()))
    }

    /// `B = 2π Σ_d d a_d`, the Lipschitz constant of `T`, when it fits an `f64`.
    pub fn derivative_bound(&self) -> Option<f64> {
        let weights = self.level_weights();
        let mut total = 0.0;
        for (w, lj) in weights.iter().zip(&self.chain) {
            for mk in &self.moduli {
                // Σ_{t<=M} (L t)² / M = L² (M+1)(2M+1)/6.
                let ln = 2.0 * ln_biguint(lj) + ln_biguint(&(mk + 1u32)) + ln_biguint(&(mk * 2u32 + 1u32)) - 6f64.ln();
                total += w * ln.exp();
            }
        }
        let b = 2.0 * PI * total;
        b.is_finite().then_some(b)
    }
}

/// JSON form of a schedule: `λ = a + b√2` as rational strings and the
/// chain and moduli as decimal strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    pub delta: f64,
    pub lambda: [String; 2],
    #[serde(with = "crate::serde_big::biguint_vec")]
    pub chain: Vec<BigUint>,
    #[serde(with = "crate::serde_big::biguint_vec")]
    pub moduli: Vec<BigUint>,
}

impl ConstructionSchedule {
    pub fn to_document(&self) -> ScheduleDocument {
        ScheduleDocument {
            delta: self.delta,
            lambda: [self.lambda.rational.to_string(), self.lambda.surd.to_string()],
            chain: self.chain.clone(),
            moduli: self.moduli.clone(),
        }
    }

    /// Rebuilds the schedule; the weight scheme is recovered when the
    /// document matches `build_construction(delta)`.
    pub fn from_document(doc: &ScheduleDocument) -> Result<Self> {
        let parse = |s: &str| s.parse::<BigRational>().map_err(|e| Error::domain(format!("bad rational {s:?}: {e}")));
        let lambda = QuadSurd::new(parse(&doc.lambda[0])?, parse(&doc.lambda[1])?);
        let cons = Self::custom(doc.delta, lambda, doc.chain.clone(), doc.moduli.clone())?;
        match build_construction(doc.delta) {
            Ok(real) if real.lambda == cons.lambda && real.chain == cons.chain && real.moduli == cons.moduli => Ok(real),
            _ => Ok(cons),
        }
    }
}

/// Anything that can be evaluated exactly at rational points of the circle.
pub trait CosineEval: Sync {
    fn eval_at(&self, x: &RationalAngle) -> Result<f64>;
}

/// Cached evaluator of `T` for one schedule. Safe to share across threads.
pub struct Evaluator<'a> {
    cons: &'a ConstructionSchedule,
    precision: Precision,
    weights: Vec<f64>,
    moduli_f64: Vec<f64>,
    roots: RwLock<HashMap<u64, Arc<RootTable>>>,
    residues: RwLock<HashMap<u64, Arc<Vec<u64>>>>,
    levels: RwLock<HashMap<(u64, u64), f64>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(cons: &'a ConstructionSchedule, precision: Precision) -> Self {
        Evaluator {
            cons,
            precision,
            weights: cons.level_weights(),
            moduli_f64: cons.moduli.iter().map(|m| m.to_f64().unwrap_or(f64::INFINITY)).collect(),
            roots: RwLock::default(),
            residues: RwLock::default(),
            levels: RwLock::default(),
        }
    }

    fn root_table(&self, q: u64) -> Arc<RootTable> {
        if let Some(t) = self.roots.read().expect("lock").get(&q) {
            return t.clone();
        }
        let table = Arc::new(RootTable::new(q, self.precision));
        if q <= CACHED_TABLE_LIMIT {
            self.roots.write().expect("lock").insert(q, table.clone());
        }
        table
    }

    /// `M_k mod q` for every `k`.
    fn residues(&self, q: u64) -> Arc<Vec<u64>> {
        if let Some(r) = self.residues.read().expect("lock").get(&q) {
            return r.clone();
        }
        let r: Arc<Vec<u64>> =
            Arc::new(self.cons.moduli.iter().map(|m| (m % q).to_u64().expect("residue below q")).collect());
        self.residues.write().expect("lock").insert(q, r.clone());
        r
    }

    /// `Σ_k Re S` at the reduced point `a/q`, using
    /// `S_k = C/q + (q P_r - r C)/(q M_k)` with `r = M_k mod q`.
    fn level_value(&self, a: u64, q: u64) -> f64 {
        let m = self.cons.m() as f64;
        if q == 1 {
            return m;
        }
        // Re S is even in a.
        let key = (a.min(q - a), q);
        if let Some(&v) = self.levels.read().expect("lock").get(&key) {
            return v;
        }
        let table = self.root_table(q);
        let residues = self.residues(q);
        let sums = period_sums(key.0, &table, &residues);
        let bits = table.frac_bits();
        let c_re = &sums.complete.re;
        let qb = BigInt::from(q);
        let mut v = fixed_to_f64(c_re, bits) / q as f64 * m;
        for ((&r, p), mk) in residues.iter().zip(&sums.prefixes).zip(&self.moduli_f64) {
            if r == 0 {
                continue;
            }
            let num = &qb * &p.re - BigInt::from(r) * c_re;
            v += fixed_to_f64(&num, bits) / q as f64 / mk;
        }
        self.levels.write().expect("lock").insert(key, v);
        v
    }

    pub fn eval(&self, x: &RationalAngle) -> Result<f64> {
        let mut total = 0.0;
        for (lj, w) in self.cons.chain.iter().zip(&self.weights) {
            let y = x.scale(&(lj * lj));
            let q = period_of(y.denom())?;
            let a = y.numer().to_u64().expect("numerator below denominator");
            total += w * self.level_value(a, q);
        }
        Ok(total)
    }
}

impl CosineEval for Evaluator<'_> {
    fn eval_at(&self, x: &RationalAngle) -> Result<f64> {
        self.eval(x)
    }
}

/// One-off evaluation of `T(x)`.
pub fn eval_t(x: &RationalAngle, cons: &ConstructionSchedule, precision: Precision) -> Result<f64> {
    Evaluator::new(cons, precision).eval(x)
}

/// `a_0 + Σ a_d cos(2π d x)` with every `d` a perfect square.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCosinePolynomial {
    pub a0: f64,
    pub coeffs: BTreeMap<BigUint, f64>,
    pub degree: BigUint,
}

fn is_square(d: &BigUint) -> bool {
    let r = d.sqrt();
    &(&r * &r) == d
}

impl SparseCosinePolynomial {
    pub fn new(a0: f64, coeffs: BTreeMap<BigUint, f64>) -> Result<Self> {
        if let Some(d) = coeffs.keys().find(|d| d.is_zero() || !is_square(d)) {
            return Err(Error::domain(format!("frequency {d} is not a positive square")));
        }
        let degree = coeffs.keys().next_back().cloned().unwrap_or_default();
        Ok(SparseCosinePolynomial { a0, coeffs, degree })
    }

    pub fn constant(a0: f64) -> Self {
        SparseCosinePolynomial { a0, coeffs: BTreeMap::new(), degree: BigUint::zero() }
    }

    /// `T(0) = a_0 + Σ a_d`.
    pub fn value_at_zero(&self) -> f64 {
        self.a0 + self.coeffs.values().sum::<f64>()
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.a0
            + self
                .coeffs
                .iter()
                .map(|(d, a)| {
                    let t = (d.to_f64().unwrap_or(f64::INFINITY) * x).rem_euclid(1.0);
                    a * (2.0 * PI * t).cos()
                })
                .sum::<f64>()
    }

    /// `2π Σ d |a_d|`.
    pub fn derivative_bound(&self) -> f64 {
        2.0 * PI * self.coeffs.iter().map(|(d, a)| d.to_f64().unwrap_or(f64::INFINITY) * a.abs()).sum::<f64>()
    }

    pub fn to_document(&self) -> PolynomialDocument {
        PolynomialDocument {
            a0: self.a0,
            degree: self.degree.to_string(),
            coefficients: self.coeffs.iter().map(|(d, a)| (d.to_string(), *a)).collect(),
        }
    }

    pub fn from_document(doc: &PolynomialDocument) -> Result<Self> {
        let coeffs = doc
            .coefficients
            .iter()
            .map(|(d, a)| {
                d.parse::<BigUint>()
                    .map(|d| (d, *a))
                    .map_err(|_| Error::domain(format!("bad frequency `{d}`")))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::new(doc.a0, coeffs)
    }
}

impl CosineEval for SparseCosinePolynomial {
    fn eval_at(&self, x: &RationalAngle) -> Result<f64> {
        let mut total = self.a0;
        for (d, a) in &self.coeffs {
            let t = x.scale(d);
            total += a * (2.0 * PI * t.to_f64()).cos();
        }
        Ok(total)
    }
}

/// JSON form: frequencies as decimal strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialDocument {
    pub a0: f64,
    pub degree: String,
    pub coefficients: Vec<(String, f64)>,
}

/// Largest common denominator handled in exact arithmetic during expansion.
const EXACT_DENOMINATOR_BITS: u64 = 4096;

/// `c / d` correctly scaled for arbitrarily large operands.
fn quotient_f64(c: &BigUint, d: &BigUint) -> f64 {
    let shift = (d.bits() + 64).saturating_sub(c.bits());
    let q = (c << shift) / d;
    let mut v = q.to_f64().unwrap_or(f64::INFINITY);
    let mut rest = shift as i64;
    while rest > 0 {
        let step = rest.min(1000);
        v *= 2f64.powi(-(step as i32));
        rest -= step;
    }
    v
}

/// Number of pairs `(j, t)` with `t <= M_k` and `(L_j t)² <= cap`.
fn term_count(cons: &ConstructionSchedule, cap: Option<&BigUint>) -> BigUint {
    let root = cap.map(|c| c.sqrt());
    let mut n = BigUint::zero();
    for lj in &cons.chain {
        for mk in &cons.moduli {
            n += match &root {
                Some(r) => (r / lj).min(mk.clone()),
                None => mk.clone(),
            };
        }
    }
    n
}

/// Coefficients of `T`, optionally restricted to frequencies `d <= cap`.
/// Weights are accumulated exactly and rounded once at the end.
pub fn expand_coefficients(
    cons: &ConstructionSchedule,
    cap: Option<&BigUint>,
    term_cap: u64,
) -> Result<SparseCosinePolynomial> {
    let needed = term_count(cons, cap);
    if needed > BigUint::from(term_cap) {
        return Err(Error::TooManyTerms { needed, cap: term_cap });
    }
    let root = cap.map(|c| c.sqrt());
    // Put every 1/M_k over the common denominator D so that the per-level
    // multiplicities are integers; rationals with huge denominators are
    // only formed once per frequency.
    let common = cons.moduli.iter().fold(BigUint::one(), |d, mk| if (&d % mk).is_zero() { d } else { d.lcm(mk) });
    let mut acc: BTreeMap<BigUint, BTreeMap<usize, BigUint>> = BTreeMap::new();
    for (j, lj) in cons.chain.iter().enumerate() {
        for mk in &cons.moduli {
            let share = &common / mk;
            let top = match &root {
                Some(r) => (r / lj).min(mk.clone()),
                None => mk.clone(),
            };
            let mut t = BigUint::one();
            while t <= top {
                let f = lj * &t;
                *acc.entry(&f * &f).or_default().entry(j).or_default() += &share;
                t += 1u32;
            }
        }
    }
    let weights = cons.exact_level_weights();
    let coeffs = if common.bits() <= EXACT_DENOMINATOR_BITS {
        let inv_common = BigRational::new(BigInt::one(), BigInt::from(common));
        acc.into_iter()
            .map(|(d, counts)| {
                let v = counts.iter().fold(QuadSurd::zero(), |v, (&j, c)| {
                    v.add(&weights[j].scale(&BigRational::from_integer(BigInt::from(c.clone()))))
                });
                (d, v.scale(&inv_common).to_f64())
            })
            .collect()
    } else {
        // Gigantic denominators: round each level share once instead.
        let w: Vec<f64> = weights.iter().map(QuadSurd::to_f64).collect();
        acc.into_iter()
            .map(|(d, counts)| (d, counts.iter().map(|(&j, c)| w[j] * quotient_f64(c, &common)).sum()))
            .collect()
    };
    SparseCosinePolynomial::new(0.0, coeffs)
}

/// `(T + δ)/(1 + δ)`: value 1 at zero and free coefficient `(a_0 + δ)/(1 + δ)`.
pub fn shift_normalize(poly: &SparseCosinePolynomial, delta: f64) -> Result<SparseCosinePolynomial> {
    if !(delta >= 0.0) {
        return Err(Error::domain(format!("shift must be nonnegative, got {delta}")));
    }
    let s = 1.0 + delta;
    Ok(SparseCosinePolynomial {
        a0: (poly.a0 + delta) / s,
        coeffs: poly.coeffs.iter().map(|(d, a)| (d.clone(), a / s)).collect(),
        degree: poly.degree.clone(),
    })
}

/// Values at `i/G`, `i = 0..G`, computed in parallel and returned in order.
/// Evenness `T(x) = T(1-x)` halves the work.
pub fn grid_values<E: CosineEval>(f: &E, grid: u64) -> Result<Vec<f64>> {
    if grid < 2 {
        return Err(Error::domain(format!("grid size must be at least 2, got {grid}")));
    }
    let half: Vec<f64> = (0..=grid / 2)
        .into_par_iter()
        .map(|i| f.eval_at(&RationalAngle::grid_point(i, grid)?))
        .collect::<Result<_>>()?;
    Ok((0..grid).map(|i| half[i.min(grid - i) as usize]).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMin {
    pub min: f64,
    pub argmin: RationalAngle,
}

/// Smallest grid value; ties go to the smallest `i`.
pub fn grid_min<E: CosineEval>(f: &E, grid: u64) -> Result<GridMin> {
    let values = grid_values(f, grid)?;
    Ok(min_of(&values, grid))
}

fn min_of(values: &[f64], grid: u64) -> GridMin {
    let (i, &min) = values
        .iter()
        .enumerate()
        .fold((0, &f64::INFINITY), |best, (i, v)| if *v < *best.1 { (i, v) } else { best });
    GridMin { min, argmin: RationalAngle::grid_point(i as u64, grid).expect("grid >= 2") }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub x: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub delta: f64,
    pub grid: u64,
    pub min: f64,
    pub argmin: String,
    /// `min + δ`; nonnegative on success.
    pub margin: f64,
    pub pass: bool,
    pub worst: Vec<GridPoint>,
    pub value_at_zero: f64,
    pub m: usize,
    pub levels: usize,
    pub m_within_9_over_delta: bool,
    pub four_m_within_36_over_delta: bool,
    pub degree_digits: usize,
    pub ln_degree: f64,
    /// `B/(2G)`, the largest possible dip between grid points.
    pub derivative_slack: Option<f64>,
    /// `min - B/(2G) >= -δ`: the bound holds on the whole circle.
    pub certified: bool,
}

pub fn verify_bound(cons: &ConstructionSchedule, grid: u64, precision: Precision) -> Result<BoundReport> {
    let ev = Evaluator::new(cons, precision);
    let values = grid_values(&ev, grid)?;
    Ok(bound_report(cons, grid, &values))
}

/// Builds the report from precomputed grid values.
pub fn bound_report(cons: &ConstructionSchedule, grid: u64, values: &[f64]) -> BoundReport {
    let delta = cons.delta;
    let gm = min_of(values, grid);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let worst = order
        .iter()
        .take(5)
        .map(|&i| GridPoint { x: format!("{i}/{grid}"), value: values[i] })
        .collect();
    let m = cons.m();
    let slack = cons.derivative_bound().map(|b| b / (2.0 * grid as f64));
    let pass = gm.min >= -delta;
    BoundReport {
        delta,
        grid,
        min: gm.min,
        argmin: gm.argmin.to_string(),
        margin: gm.min + delta,
        pass,
        worst,
        value_at_zero: values[0],
        m,
        levels: cons.levels(),
        m_within_9_over_delta: m as f64 <= 9.0 / delta + 1e-9,
        four_m_within_36_over_delta: 4.0 * m as f64 <= 36.0 / delta + 1e-9,
        degree_digits: decimal_digits(&cons.degree()),
        ln_degree: cons.ln_degree(),
        derivative_slack: slack,
        certified: slack.is_some_and(|s| gm.min - s >= -delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::exp_unit;
    use proptest::prelude::*;

    fn toy() -> ConstructionSchedule {
        ConstructionSchedule::custom(
            0.5,
            QuadSurd::inv_sqrt2(),
            vec![BigUint::one(), BigUint::from(2u32)],
            vec![BigUint::from(3u32)],
        )
        .unwrap()
    }

    fn small(levels: &[u32], moduli: &[u32]) -> ConstructionSchedule {
        ConstructionSchedule::custom(
            0.5,
            QuadSurd::inv_sqrt2(),
            levels.iter().map(|&v| BigUint::from(v)).collect(),
            moduli.iter().map(|&v| BigUint::from(v)).collect(),
        )
        .unwrap()
    }

    /// Direct double loop over `j`, `k` and `t <= M_k`.
    fn naive_t(cons: &ConstructionSchedule, x: &RationalAngle) -> f64 {
        let w = cons.level_weights();
        let mut total = 0.0;
        for (lj, wj) in cons.chain.iter().zip(&w) {
            for mk in &cons.moduli {
                let mk = mk.to_u64().unwrap();
                let s: f64 = (1..=mk)
                    .map(|t| {
                        let d = lj * BigUint::from(t);
                        exp_unit(&x.scale(&(&d * &d)), Precision::DEFAULT).re_f64()
                    })
                    .sum();
                total += wj * s / mk as f64;
            }
        }
        total
    }

    #[test]
    fn construction_arithmetic() {
        let c = build_construction(0.5).unwrap();
        assert_eq!(c.levels(), 10);
        assert_eq!(c.m(), 16);
        assert_eq!(c.moduli[0], c.l_max().pow(34));
        assert_eq!(c.m_max(), &c.l_max().pow(64));
        assert_eq!(c.degree(), c.l_max().pow(130));
        assert!((c.ln_degree() - 130.0 * ln_biguint(c.l_max())).abs() < 1e-6 * c.ln_degree());
        assert!(build_construction(0.7).is_err());
    }

    #[test]
    fn toy_expansion() {
        let p = expand_coefficients(&toy(), None, 1000).unwrap();
        let keys: Vec<u32> = p.coeffs.keys().map(|d| d.to_u32().unwrap()).collect();
        assert_eq!(keys, vec![1, 4, 9, 16, 36]);
        assert!(p.coeffs.values().all(|&a| a > 0.0));
        assert!((p.value_at_zero() - 1.0).abs() < 1e-15);
        assert_eq!(p.degree, BigUint::from(36u32));
        assert_eq!(p.degree, toy().degree());
        // 4 = (1·2)² = (2·1)² collects both level weights.
        let w = toy().level_weights();
        assert!((p.coeffs[&BigUint::from(4u32)] - (w[0] + w[1]) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn expansion_caps() {
        let c = build_construction(0.5).unwrap();
        assert!(matches!(expand_coefficients(&c, None, DEFAULT_TERM_CAP), Err(Error::TooManyTerms { .. })));
        let p = expand_coefficients(&c, Some(&BigUint::from(10_000u32)), DEFAULT_TERM_CAP).unwrap();
        assert!(p.coeffs.keys().all(|d| d <= &BigUint::from(10_000u32)));
        assert!(p.coeffs.values().all(|&a| a >= 0.0));
    }

    #[test]
    fn toy_evaluation_matches_expansion_and_naive() {
        for cons in [toy(), small(&[1, 2, 6], &[5, 7, 11]), small(&[1, 3], &[40, 41])] {
            let ev = Evaluator::new(&cons, Precision::DEFAULT);
            let poly = expand_coefficients(&cons, None, 10_000).unwrap();
            for (p, q) in [(0u64, 1u64), (1, 2), (1, 3), (2, 7), (5, 12), (13, 97), (1, 1000)] {
                let x = RationalAngle::new(p, q).unwrap();
                let v = ev.eval(&x).unwrap();
                assert!((v - naive_t(&cons, &x)).abs() < 1e-9);
                assert!((v - poly.eval_at(&x).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn construction_value_at_zero_and_half() {
        let c = build_construction(0.5).unwrap();
        let ev = Evaluator::new(&c, Precision::DEFAULT);
        assert!((ev.eval(&RationalAngle::zero()).unwrap() - 1.0).abs() < 1e-12);
        let half = ev.eval(&RationalAngle::new(1u32, 2u32).unwrap()).unwrap();
        assert!(half >= -0.5, "T(1/2) = {half}");
    }

    #[test]
    fn shifted_toy_is_nonnegative() {
        let cons = toy();
        let poly = expand_coefficients(&cons, None, 1000).unwrap();
        // A toy is far from the real schedule; shift by its own grid minimum.
        let gm = grid_min(&poly, 4096).unwrap();
        assert!(gm.min < 0.0);
        let delta = -gm.min;
        let shifted = shift_normalize(&poly, delta).unwrap();
        assert!((shifted.a0 - delta / (1.0 + delta)).abs() < 1e-15);
        assert!(shifted.a0 < delta);
        assert!((shifted.value_at_zero() - 1.0).abs() < 1e-15);
        assert!(grid_min(&shifted, 4096).unwrap().min >= -1e-15);
    }

    #[test]
    fn big_quotients() {
        assert!((quotient_f64(&BigUint::one(), &BigUint::from(3u32)) - 1.0 / 3.0).abs() < 1e-16);
        let huge = BigUint::one() << 1100u32;
        assert!((quotient_f64(&huge, &(&huge * 3u32)) - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(quotient_f64(&BigUint::one(), &(BigUint::one() << 5000u32)), 0.0);
        assert!((quotient_f64(&BigUint::one(), &(BigUint::one() << 1000u32)) - 2f64.powi(-1000)).abs() < 1e-310);
    }

    #[test]
    fn grid_min_zero_polynomial() {
        let gm = grid_min(&SparseCosinePolynomial::constant(0.0), 16).unwrap();
        assert_eq!(gm.min, 0.0);
        assert!(gm.argmin.is_zero());
        assert!(grid_min(&SparseCosinePolynomial::constant(0.0), 1).is_err());
    }

    #[test]
    fn toy_report_is_certified() {
        let mut cons = small(&[1, 2], &[3, 4]);
        cons.delta = 0.85;
        let r = verify_bound(&cons, 1 << 12, Precision::DEFAULT).unwrap();
        assert!(r.pass && r.certified, "{r:?}");
        assert_eq!(r.worst.len(), 5);
        assert!((r.value_at_zero - 1.0).abs() < 1e-12);
    }

    #[test]
    fn document_round_trip() {
        let p = expand_coefficients(&toy(), None, 1000).unwrap();
        let doc = p.to_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back: PolynomialDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(SparseCosinePolynomial::from_document(&back).unwrap(), p);
        let mut bad = doc;
        bad.coefficients.push(("5".into(), 0.1));
        assert!(SparseCosinePolynomial::from_document(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn toy_values_are_even(i in 0u64..997) {
            let cons = small(&[1, 2, 6], &[5, 9]);
            let ev = Evaluator::new(&cons, Precision::DEFAULT);
            let a = ev.eval(&RationalAngle::grid_point(i, 997).unwrap()).unwrap();
            let b = ev.eval(&RationalAngle::grid_point((997 - i) % 997, 997).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn grids_nest(g in 2u64..200, f in 2u64..5) {
            let cons = small(&[1, 2], &[3, 5]);
            let ev = Evaluator::new(&cons, Precision::DEFAULT);
            let coarse = grid_min(&ev, g).unwrap().min;
            let fine = grid_min(&ev, g * f).unwrap().min;
            prop_assert!(fine <= coarse + 1e-12);
        }
    }

    #[test]
    fn schedule_document_round_trip() {
        let t = toy();
        let back = ConstructionSchedule::from_document(&serde_json::from_str(&serde_json::to_string(&t.to_document()).unwrap()).unwrap()).unwrap();
        assert_eq!(back, t);
        let real = build_construction(0.5).unwrap();
        let back = ConstructionSchedule::from_document(&real.to_document()).unwrap();
        assert!(back.scheme.is_some());
        assert_eq!(back, real);
    }
}
