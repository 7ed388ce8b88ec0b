//! The extremal free coefficient
//!
//! `γ(n) = inf { a_0 : T = a_0 + Σ_{d ∈ Q_n} a_d cos(2π d x) >= 0, T(0) = 1 }`
//!
//! over a grid, by linear programming. Writing `a_0 = 1 - Σ a_d`, the
//! constraint `T(x_i) >= 0` reads `Σ a_d (1 - cos 2π d x_i) <= 1` and the
//! objective becomes `max Σ a_d`. Grid points are added by cutting planes.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_bigint::BigUint;
use num_integer::Roots;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::construct::{expand_coefficients, grid_min, ConstructionSchedule, SparseCosinePolynomial, DEFAULT_TERM_CAP};
use crate::error::{Error, Result};
use crate::simplex::{solve, LinearProgram, LpStatus};

/// Grid points per unit of degree used when no grid is given.
pub const DEFAULT_GRID_FACTOR: u64 = 128;
/// Initial cutting-plane points per unit of degree.
pub const INITIAL_POINTS_FACTOR: u64 = 8;
/// Largest constraint violation tolerated at any grid point.
pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    Free,
    Nonnegative,
}

impl std::str::FromStr for SignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(SignMode::Free),
            "nonneg" | "nonnegative" => Ok(SignMode::Nonnegative),
            _ => Err(Error::domain(format!("unknown sign mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremalProblem {
    pub n: u64,
    pub spectrum: Vec<u64>,
    pub sign_mode: SignMode,
    pub grid: u64,
}

/// Positive squares up to `n`.
pub fn squares_up_to(n: u64) -> Vec<u64> {
    (1..=n.sqrt()).map(|k| k * k).collect()
}

pub fn default_grid(n: u64) -> u64 {
    DEFAULT_GRID_FACTOR * n.max(1)
}

impl ExtremalProblem {
    pub fn new(n: u64, sign_mode: SignMode) -> Self {
        ExtremalProblem { n, spectrum: squares_up_to(n), sign_mode, grid: default_grid(n) }
    }

    pub fn with_grid(n: u64, sign_mode: SignMode, grid: u64) -> Result<Self> {
        if grid < 4 * n.max(1) {
            return Err(Error::domain(format!("grid {grid} is below 4n = {}", 4 * n.max(1))));
        }
        Self::from_spectrum(squares_up_to(n), sign_mode, grid).map(|p| ExtremalProblem { n, ..p })
    }

    /// An arbitrary set of square frequencies, such as a construction's support.
    pub fn from_spectrum(mut spectrum: Vec<u64>, sign_mode: SignMode, grid: u64) -> Result<Self> {
        spectrum.sort_unstable();
        spectrum.dedup();
        if let Some(d) = spectrum.iter().find(|&&d| d == 0 || d.sqrt() * d.sqrt() != d) {
            return Err(Error::domain(format!("frequency {d} is not a positive square")));
        }
        let n = spectrum.last().copied().unwrap_or(0);
        if grid < 4 * n.max(1) {
            return Err(Error::domain(format!("grid {grid} is below 4n = {}", 4 * n.max(1))));
        }
        Ok(ExtremalProblem { n, spectrum, sign_mode, grid })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremalSolution {
    pub n: u64,
    pub sign_mode: SignMode,
    pub grid: u64,
    pub status: LpStatus,
    pub a0: f64,
    pub coefficients: Vec<(u64, f64)>,
    pub iterations: usize,
    pub rounds: usize,
    pub working_points: usize,
    pub duality_gap: f64,
    /// Largest `-T(x_i)` over the grid, clipped at zero.
    pub max_violation: f64,
    /// `min T - B/(2G)` from [`certify_nonneg`].
    pub certificate_margin: f64,
}

impl ExtremalSolution {
    pub fn to_polynomial(&self) -> SparseCosinePolynomial {
        let coeffs = self.coefficients.iter().map(|&(d, a)| (BigUint::from(d), a)).collect();
        SparseCosinePolynomial::new(self.a0, coeffs).expect("spectrum holds squares")
    }
}

/// `1 - cos(2π d i/G)`, reduced exactly before the cosine.
fn gap(d: u64, i: u64, grid: u64) -> f64 {
    let t = (d as u128 * i as u128 % grid as u128) as f64 / grid as f64;
    1.0 - (2.0 * PI * t).cos()
}

fn columns(prob: &ExtremalProblem) -> Vec<(u64, f64)> {
    let mut cols: Vec<(u64, f64)> = prob.spectrum.iter().map(|&d| (d, 1.0)).collect();
    if prob.sign_mode == SignMode::Free {
        cols.extend(prob.spectrum.iter().map(|&d| (d, -1.0)));
    }
    cols
}

pub fn solve_extremal(prob: &ExtremalProblem) -> Result<ExtremalSolution> {
    let g = prob.grid;
    let half = g / 2;
    let cols = columns(prob);
    // By evenness only 1 <= i <= G/2 matter; i = 0 gives 0 <= 1.
    let start = (INITIAL_POINTS_FACTOR * prob.n.max(1)).min(g);
    let mut working: BTreeSet<u64> = (1..=start / 2).map(|k| (k * g + start / 2) / start).filter(|&i| i >= 1 && i <= half).collect();
    if working.is_empty() && half >= 1 {
        working.insert(half);
    }
    let per_round = prob.spectrum.len().max(8);

    let mut rounds = 0;
    let mut iterations = 0;
    loop {
        rounds += 1;
        let points: Vec<u64> = working.iter().copied().collect();
        let lp = LinearProgram {
            a: points.iter().map(|&i| cols.iter().map(|&(d, s)| s * gap(d, i, g)).collect()).collect(),
            b: vec![1.0; points.len()],
            c: cols.iter().map(|&(_, s)| s).collect(),
        };
        let sol = solve(&lp, MAX_PIVOTS)?;
        iterations += sol.iterations;

        let mut coeffs: BTreeMap<u64, f64> = prob.spectrum.iter().map(|&d| (d, 0.0)).collect();
        for (&(d, s), x) in cols.iter().zip(&sol.x) {
            *coeffs.get_mut(&d).expect("spectrum key") += s * x;
        }
        let load = |i: u64| coeffs.iter().map(|(&d, &a)| a * gap(d, i, g)).sum::<f64>() - 1.0;
        let violations: Vec<(u64, f64)> = (1..=half).into_par_iter().map(|i| (i, load(i))).collect();
        let max_violation = violations.iter().map(|v| v.1).fold(0.0, f64::max);

        let mut fresh: Vec<(u64, f64)> =
            violations.into_iter().filter(|&(i, v)| v > FEASIBILITY_TOL && !working.contains(&i)).collect();
        if sol.status != LpStatus::Optimal || fresh.is_empty() {
            let a0 = 1.0 - coeffs.values().sum::<f64>();
            let mut out = ExtremalSolution {
                n: prob.n,
                sign_mode: prob.sign_mode,
                grid: g,
                status: sol.status,
                a0,
                coefficients: coeffs.into_iter().collect(),
                iterations,
                rounds,
                working_points: working.len(),
                duality_gap: sol.duality_gap(),
                max_violation,
                certificate_margin: f64::NAN,
            };
            out.certificate_margin = certify_nonneg(&out.to_polynomial(), g)?.margin;
            return Ok(out);
        }
        fresh.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        working.extend(fresh.into_iter().take(per_round).map(|(i, _)| i));
    }
}

/// `γ` for several `n` on one common grid, so the feasible sets nest.
pub fn gamma_table(ns: &[u64], mode: SignMode, grid: Option<u64>) -> Result<Vec<ExtremalSolution>> {
    let g = grid.unwrap_or_else(|| default_grid(ns.iter().copied().max().unwrap_or(1)));
    ns.par_iter().map(|&n| solve_extremal(&ExtremalProblem::with_grid(n, mode, g)?)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub certified: bool,
    pub margin: f64,
    pub grid_min: f64,
    /// `B/(2G)` with `B = 2π Σ d |a_d|`.
    pub slack: f64,
}

/// Nonnegativity on the whole circle from grid values: between grid points
/// `T` moves by at most `B/(2G)`.
pub fn certify_nonneg(poly: &SparseCosinePolynomial, grid: u64) -> Result<Certificate> {
    let gm = grid_min(poly, grid)?;
    let slack = poly.derivative_bound() / (2.0 * grid as f64);
    let margin = gm.min - slack;
    Ok(Certificate { certified: margin >= 0.0, margin, grid_min: gm.min, slack })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub support: Vec<u64>,
    pub grid: u64,
    /// Grid minimum of the input polynomial.
    pub min: f64,
    /// Shift that makes it nonnegative on the grid: `max(δ, -min)`.
    pub shift: f64,
    /// `(a_0 + shift)/(1 + shift)` of the shifted polynomial.
    pub construction_a0: f64,
    pub lp_a0: f64,
    pub lp_status: LpStatus,
    pub slack: f64,
    /// `lp_a0 <= construction_a0 + slack`.
    pub consistent: bool,
}

/// Solves the nonnegative-coefficient problem on the support of `poly` and
/// compares with the polynomial itself after the shift `(T + s)/(1 + s)`.
pub fn compare_with_polynomial(poly: &SparseCosinePolynomial, delta: f64, grid: Option<u64>) -> Result<ComparisonReport> {
    if (poly.value_at_zero() - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("polynomial is not normed: T(0) = {}", poly.value_at_zero())));
    }
    let support: Vec<u64> = poly
        .coeffs
        .keys()
        .map(|d| d.to_u64().ok_or_else(|| Error::domain(format!("frequency {d} is too large for the solver"))))
        .collect::<Result<_>>()?;
    let n = support.last().copied().unwrap_or(0);
    let g = grid.unwrap_or_else(|| default_grid(n));
    let min = grid_min(poly, g)?.min;
    let shift = delta.max(-min);
    let construction_a0 = (poly.a0 + shift) / (1.0 + shift);
    let sol = solve_extremal(&ExtremalProblem::from_spectrum(support.clone(), SignMode::Nonnegative, g)?)?;
    let slack = FEASIBILITY_TOL;
    Ok(ComparisonReport {
        consistent: sol.status == LpStatus::Optimal && sol.a0 <= construction_a0 + slack,
        support,
        grid: g,
        min,
        shift,
        construction_a0,
        lp_a0: sol.a0,
        lp_status: sol.status,
        slack,
    })
}

/// [`compare_with_polynomial`] on the expanded coefficients of a toy schedule.
pub fn compare_with_construction(
    cons: &ConstructionSchedule,
    cap: Option<&BigUint>,
    grid: Option<u64>,
) -> Result<ComparisonReport> {
    let poly = expand_coefficients(cons, cap, DEFAULT_TERM_CAP)?;
    compare_with_polynomial(&poly, cons.delta, grid)
}
