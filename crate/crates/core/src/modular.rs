//! Functions on `Z/nZ`: squares modulo `n`, positive definite functions and
//! the density `ρ(f) = f̂(0)/(n f(0))`, the function `g` built from a
//! nonnegative cosine polynomial, and search for sets whose difference set
//! avoids the squares.
//!
//! Transforms use `f̂(k) = Σ_α f(α) e(-kα/n)` and are summed directly.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::construct::SparseCosinePolynomial;
use crate::error::{Error, Result};
use crate::oracle::{default_grid, solve_extremal, ExtremalProblem, SignMode};
use crate::simplex::LpStatus;

/// Largest `n` searched exhaustively unless asked otherwise.
pub const EXHAUSTIVE_THRESHOLD: u64 = 24;
/// Bitmask search handles at most this many residues.
pub const MAX_EXHAUSTIVE_N: u64 = 64;

fn roots(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n).map(|t| Complex64::from_polar(1.0, sign * 2.0 * PI * t as f64 / n as f64)).collect()
}

fn transform(values: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = values.len();
    let w = roots(n, sign);
    (0..n)
        .map(|k| values.iter().enumerate().map(|(a, v)| v * w[(k * a) % n]).sum())
        .collect()
}

pub fn dft(values: &[Complex64]) -> Vec<Complex64> {
    transform(values, -1.0)
}

pub fn inverse_dft(hat: &[Complex64]) -> Vec<Complex64> {
    let n = hat.len() as f64;
    transform(hat, 1.0).into_iter().map(|v| v / n).collect()
}

/// A function on `Z/nZ` together with its transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ModularFunction {
    values: Vec<Complex64>,
    hat: Vec<Complex64>,
}

impl ModularFunction {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("a function on Z/nZ needs n >= 1"));
        }
        let hat = dft(&values);
        Ok(ModularFunction { values, hat })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn n(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn transform(&self) -> &[Complex64] {
        &self.hat
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest deviation of the inverse transform from the values.
    pub fn round_trip_error(&self) -> f64 {
        inverse_dft(&self.hat).iter().zip(&self.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn vanishes_on(&self, set: &SquareSet, tol: f64) -> bool {
        set.members.iter().all(|&a| self.values[a as usize].norm() <= tol)
    }

    pub fn default_tolerance(&self) -> f64 {
        1e-9 * self.n() as f64 * self.max_abs()
    }
}

/// `{α : α ≡ ±k² (mod n), k >= 1, k² < n/2}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SquareSet {
    pub n: u64,
    pub members: BTreeSet<u64>,
}

pub fn squares_mod(n: u64) -> Result<SquareSet> {
    if n < 2 {
        return Err(Error::domain(format!("need n >= 2, got {n}")));
    }
    let mut members = BTreeSet::new();
    let mut k = 1u64;
    while 2 * k * k < n {
        let s = k * k % n;
        members.insert(s);
        members.insert((n - s) % n);
        k += 1;
    }
    Ok(SquareSet { n, members })
}

impl SquareSet {
    pub fn contains(&self, a: u64) -> bool {
        self.members.contains(&(a % self.n))
    }
}

/// `(1_A * 1_{-A})(α) = #{(x, y) ∈ A² : x - y ≡ α}`.
pub fn autocorrelation(n: u64, set: &[u64]) -> Result<ModularFunction> {
    if n == 0 {
        return Err(Error::domain("n must be positive"));
    }
    let mut v = vec![0.0; n as usize];
    for &x in set {
        for &y in set {
            v[((x + n - y % n) % n) as usize] += 1.0;
        }
    }
    ModularFunction::from_real(&v)
}

/// Every transform line real and nonnegative up to `tol`
/// (default `1e-9 · n · max|f|`).
pub fn is_positive_definite(f: &ModularFunction, tol: Option<f64>) -> bool {
    let tol = tol.unwrap_or_else(|| f.default_tolerance());
    f.hat.iter().all(|h| h.im.abs() <= tol && h.re >= -tol)
}

pub fn density(f: &ModularFunction) -> Result<f64> {
    if f.max_abs() == 0.0 {
        return Err(Error::domain("density of the zero function is undefined"));
    }
    if !is_positive_definite(f, None) {
        return Err(Error::domain("density needs a positive definite function"));
    }
    Ok(f.hat[0].re / (f.n() as f64 * f.values[0].re))
}

/// `g(0) = a_0`, `g(±d) = a_d/2`, zero elsewhere, so that `ĝ(k) = T(k/n)`.
/// Every frequency must satisfy `2d < n`.
pub fn build_g(poly: &SparseCosinePolynomial, n: u64) -> Result<ModularFunction> {
    if n < 2 {
        return Err(Error::domain(format!("need n >= 2, got {n}")));
    }
    let mut v = vec![0.0; n as usize];
    v[0] = poly.a0;
    for (d, &a) in &poly.coeffs {
        let d = d.to_u64().filter(|&d| 2 * d < n).ok_or_else(|| {
            Error::domain(format!("frequency {d} is not below n/2 = {}", n as f64 / 2.0))
        })?;
        v[d as usize] += a / 2.0;
        v[(n - d) as usize] += a / 2.0;
    }
    let g = ModularFunction::from_real(&v)?;
    let tol = 1e-9 * (poly.a0.abs() + poly.coeffs.values().map(|a| a.abs()).sum::<f64>()).max(1.0);
    if let Some((k, h)) = g.hat.iter().enumerate().find(|(_, h)| h.re < -tol) {
        return Err(Error::domain(format!("polynomial is negative at {k}/{n}: {}", h.re)));
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorollaryVerdict {
    pub n: u64,
    pub applicable: bool,
    pub reason: Option<String>,
    /// `g(0)`, the free coefficient of the polynomial.
    pub delta: f64,
    pub rho: f64,
    /// `Σ_α f(α) g(α)`.
    pub inner: f64,
    /// `(1/n) Σ_k f̂(k) ĝ(-k)`.
    pub parseval: f64,
    pub parseval_error: f64,
    /// `δ f(0)`.
    pub lhs: f64,
    /// `f̂(0)/n`.
    pub rhs: f64,
    /// `δ f(0) = f·g >= f̂(0)/n`, hence `ρ(f) <= δ`.
    pub holds: bool,
}

/// Evaluates the chain `δ f(0) = f·g = (1/n) Σ f̂(k) ĝ(-k) >= f̂(0)/n`.
pub fn corollary_check(f: &ModularFunction, poly: &SparseCosinePolynomial, squares: &SquareSet) -> Result<CorollaryVerdict> {
    let n = f.n();
    if squares.n != n {
        return Err(Error::domain(format!("square set is mod {} but f is mod {n}", squares.n)));
    }
    let g = build_g(poly, n)?;
    let rho = density(f)?;
    let delta = poly.a0;
    let inner: f64 = f.values.iter().zip(&g.values).map(|(a, b)| (a * b).re).sum();
    let parseval: f64 = (0..n as usize)
        .map(|k| (f.hat[k] * g.hat[(n as usize - k) % n as usize]).re)
        .sum::<f64>()
        / n as f64;
    let lhs = delta * f.values[0].re;
    let rhs = f.hat[0].re / n as f64;
    let tol = 1e-9 * f.max_abs().max(1.0);
    let vanishes = f.vanishes_on(squares, tol);
    let reason = (!vanishes).then(|| "f does not vanish on the squares".to_string());
    Ok(CorollaryVerdict {
        n,
        applicable: vanishes,
        reason,
        delta,
        rho,
        inner,
        parseval,
        parseval_error: (inner - parseval).abs(),
        lhs,
        rhs,
        holds: !vanishes || ((lhs - inner).abs() <= tol && inner >= rhs - tol && rho <= delta + tol),
    })
}

/// The nonnegative-coefficient optimum over squares `d` with `2d < n`,
/// solved on a grid that contains every point `k/n`.
pub fn lp_polynomial(n: u64) -> Result<SparseCosinePolynomial> {
    let spectrum: Vec<u64> = (1..).map(|k: u64| k * k).take_while(|&d| 2 * d < n).collect();
    let Some(&top) = spectrum.last() else {
        return Ok(SparseCosinePolynomial::constant(1.0));
    };
    let grid = default_grid(top).div_ceil(n) * n;
    let sol = solve_extremal(&ExtremalProblem::from_spectrum(spectrum, SignMode::Nonnegative, grid)?)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::domain(format!("extremal problem for n = {n} ended with {:?}", sol.status)));
    }
    Ok(sol.to_polynomial())
}

/// Whether `(A - A) mod n` avoids every square.
pub fn is_square_difference_free(set: &[u64], squares: &SquareSet) -> bool {
    let n = squares.n;
    set.iter().all(|&x| set.iter().all(|&y| x == y || !squares.contains((x + n - y % n) % n)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchBudget {
    /// Largest `n` searched exhaustively.
    pub exhaustive_limit: u64,
    /// Local-search restarts above the limit.
    pub restarts: u64,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { exhaustive_limit: EXHAUSTIVE_THRESHOLD, restarts: 2000, seed: 0x5eed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SquareFreeSet {
    pub n: u64,
    pub size: usize,
    pub witness: Vec<u64>,
    /// Proven maximum (exhaustive search) rather than best found.
    pub exact: bool,
}

/// Largest `A ⊆ Z/nZ` with `A - A` free of squares. The difference graph is
/// invariant under translation, so `0 ∈ A` is assumed in exact mode.
pub fn max_squarefree_set(n: u64, budget: &SearchBudget) -> Result<SquareFreeSet> {
    let squares = squares_mod(n)?;
    let exact = n <= budget.exhaustive_limit.min(MAX_EXHAUSTIVE_N);
    let witness = if exact { exhaustive(n, &squares) } else { local_search(n, &squares, budget) };
    debug_assert!(is_square_difference_free(&witness, &squares));
    if !is_square_difference_free(&witness, &squares) {
        return Err(Error::domain("search produced an invalid witness"));
    }
    Ok(SquareFreeSet { n, size: witness.len(), witness, exact })
}

fn compatible_masks(n: u64, squares: &SquareSet) -> Vec<u64> {
    (0..n)
        .map(|x| {
            (0..n)
                .filter(|&y| y != x && !squares.contains((x + n - y) % n))
                .fold(0u64, |m, y| m | (1 << y))
        })
        .collect()
}

fn mask_to_vec(mask: u64) -> Vec<u64> {
    (0..64).filter(|b| mask >> b & 1 == 1).collect()
}

/// Branch and bound over candidates in increasing order; the first maximum
/// found is the lexicographically smallest.
fn branch(chosen: u64, cand: u64, compat: &[u64], best: &mut u64) {
    if cand == 0 {
        if chosen.count_ones() > best.count_ones() {
            *best = chosen;
        }
        return;
    }
    if chosen.count_ones() + cand.count_ones() <= best.count_ones() {
        return;
    }
    let v = cand.trailing_zeros() as usize;
    let rest = cand & !(1 << v);
    branch(chosen | 1 << v, rest & compat[v], compat, best);
    branch(chosen, rest, compat, best);
}

fn exhaustive(n: u64, squares: &SquareSet) -> Vec<u64> {
    let compat = compatible_masks(n, squares);
    let cand0 = compat[0] & !1;
    // Split on the second element; each subtree is searched independently.
    let firsts = mask_to_vec(cand0);
    let mut results: Vec<(u32, u64, u64)> = firsts
        .par_iter()
        .map(|&v| {
            let below = (1u64 << v) - 1;
            let chosen = 1 | 1 << v;
            let mut best = chosen;
            branch(chosen, cand0 & compat[v as usize] & !below & !(1 << v), &compat, &mut best);
            (best.count_ones(), v, best)
        })
        .collect();
    results.push((1, u64::MAX, 1));
    let best = results
        .into_iter()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .expect("nonempty");
    mask_to_vec(best.2)
}

fn local_search(n: u64, squares: &SquareSet, budget: &SearchBudget) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed ^ n);
    let mut order: Vec<u64> = (0..n).collect();
    let mut best: Vec<u64> = vec![0];
    for _ in 0..budget.restarts.max(1) {
        order.shuffle(&mut rng);
        let mut set: Vec<u64> = Vec::new();
        for &x in &order {
            if set.iter().all(|&y| !squares.contains((x + n - y) % n)) {
                set.push(x);
            }
        }
        // One-for-one swaps that open room for another element.
        for _ in 0..4 * n {
            let out = rng.gen_range(0..set.len());
            let trial: Vec<u64> = set.iter().copied().enumerate().filter(|&(i, _)| i != out).map(|(_, v)| v).collect();
            let free: Vec<u64> = (0..n)
                .filter(|x| !trial.contains(x) && trial.iter().all(|&y| !squares.contains((x + n - y) % n)))
                .collect();
            if free.len() >= 2 {
                let mut grown = trial;
                for x in free {
                    if grown.iter().all(|&y| !squares.contains((x + n - y) % n)) {
                        grown.push(x);
                    }
                }
                if grown.len() > set.len() {
                    set = grown;
                }
            }
        }
        if set.len() > best.len() {
            best = set;
        }
    }
    best.sort_unstable();
    best
}
