//! Simplex method for `max cᵀx` subject to `Ax <= b`, `x >= 0`, with `b >= 0`
//! so that the all-slack basis is feasible from the start.
//!
//! Problems here have few columns and many rows. A basis is described by the
//! structural basic variables `S` and the tight rows `R` (rows whose slack is
//! nonbasic), with `|S| = |R| = k <= cols`; every other row keeps its slack
//! basic. Each iteration factors the dense `k x k` block `A[R,S]` afresh from
//! the original data, so rounding errors never accumulate across pivots.
//!
//! Pricing is Dantzig's largest reduced cost; after a degenerate step the
//! method switches to Bland's smallest-index rule until progress resumes,
//! which rules out cycling.

use serde::Serialize;

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const DEGENERATE_STEP: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Dual values of the constraints.
    pub y: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }
}

/// LU factors of a square matrix with partial pivoting.
struct Lu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    fn new(mut a: Vec<Vec<f64>>) -> Result<Lu> {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let p = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .expect("nonempty range");
            if a[p][col].abs() < 1e-13 {
                return Err(Error::domain("simplex basis became singular"));
            }
            a.swap(col, p);
            perm.swap(col, p);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                a[r][col] = f;
                if f != 0.0 {
                    for c in col + 1..n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        Ok(Lu { lu: a, perm })
    }

    /// Solves `M v = rhs`.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut v: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..n {
            for c in 0..r {
                v[r] -= self.lu[r][c] * v[c];
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                v[r] -= self.lu[r][c] * v[c];
            }
            v[r] /= self.lu[r][r];
        }
        v
    }

    /// Solves `Mᵀ v = rhs`.
    fn solve_transposed(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut w = rhs.to_vec();
        for r in 0..n {
            for c in 0..r {
                w[r] -= self.lu[c][r] * w[c];
            }
            w[r] /= self.lu[r][r];
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                w[r] -= self.lu[c][r] * w[c];
            }
        }
        let mut v = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            v[p] = w[i];
        }
        v
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Var {
    Structural(usize),
    Slack(usize),
}

impl Var {
    fn index(self, cols: usize) -> usize {
        match self {
            Var::Structural(j) => j,
            Var::Slack(i) => cols + i,
        }
    }
}

pub fn solve(lp: &LinearProgram, max_iterations: usize) -> Result<LpSolution> {
    let rows = lp.b.len();
    let cols = lp.c.len();
    if lp.a.len() != rows || lp.a.iter().any(|r| r.len() != cols) {
        return Err(Error::domain("constraint matrix shape does not match b and c"));
    }
    if lp.b.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::domain("right-hand side must be nonnegative"));
    }
    let a = &lp.a;
    let mut basic_s: Vec<usize> = Vec::new();
    let mut tight: Vec<usize> = Vec::new();
    let mut in_s = vec![false; cols];
    let mut in_r = vec![false; rows];
    let mut bland = false;
    let mut iterations = 0;

    loop {
        let block: Vec<Vec<f64>> = tight.iter().map(|&r| basic_s.iter().map(|&c| a[r][c]).collect()).collect();
        let lu = Lu::new(block)?;
        let xs = lu.solve(&tight.iter().map(|&r| lp.b[r]).collect::<Vec<_>>());
        let yr = lu.solve_transposed(&basic_s.iter().map(|&c| lp.c[c]).collect::<Vec<_>>());

        // Reduced costs of the nonbasic variables (positive means improving).
        let mut candidates: Vec<(Var, f64)> = Vec::new();
        for j in (0..cols).filter(|&j| !in_s[j]) {
            let rc = lp.c[j] - tight.iter().zip(&yr).map(|(&r, y)| y * a[r][j]).sum::<f64>();
            if rc > PIVOT_EPS {
                candidates.push((Var::Structural(j), rc));
            }
        }
        for (pos, &r) in tight.iter().enumerate() {
            if -yr[pos] > PIVOT_EPS {
                candidates.push((Var::Slack(r), -yr[pos]));
            }
        }

        let finish = |status: LpStatus, iterations: usize| {
            let mut x = vec![0.0; cols];
            for (&c, &v) in basic_s.iter().zip(&xs) {
                x[c] = v;
            }
            let mut y = vec![0.0; rows];
            for (&r, &v) in tight.iter().zip(&yr) {
                y[r] = v;
            }
            let objective = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
            let dual_objective = lp.b.iter().zip(&y).map(|(b, y)| b * y).sum();
            LpSolution { status, x, y, objective, dual_objective, iterations }
        };

        let enter = if bland {
            candidates.iter().min_by_key(|(v, _)| v.index(cols))
        } else {
            candidates
                .iter()
                .max_by(|p, q| p.1.total_cmp(&q.1).then(q.0.index(cols).cmp(&p.0.index(cols))))
        };
        let Some(&(enter, _)) = enter else {
            return Ok(finish(LpStatus::Optimal, iterations));
        };
        if iterations >= max_iterations {
            return Ok(finish(LpStatus::IterationLimit, iterations));
        }

        // Rate at which each basic variable decreases as the entering one grows.
        let column_r: Vec<f64> = match enter {
            Var::Structural(j) => tight.iter().map(|&r| a[r][j]).collect(),
            Var::Slack(r0) => tight.iter().map(|&r| if r == r0 { 1.0 } else { 0.0 }).collect(),
        };
        let ds = lu.solve(&column_r);

        let mut leave: Option<(Var, f64)> = None;
        let mut consider = |var: Var, value: f64, rate: f64| {
            if rate > PIVOT_EPS {
                let t = value.max(0.0) / rate;
                let better = match leave {
                    None => true,
                    Some((v, best)) => t < best || (t == best && var.index(cols) < v.index(cols)),
                };
                if better {
                    leave = Some((var, t));
                }
            }
        };
        for (pos, &c) in basic_s.iter().enumerate() {
            consider(Var::Structural(c), xs[pos], ds[pos]);
        }
        for i in (0..rows).filter(|&i| !in_r[i]) {
            let row = &a[i];
            let used: f64 = basic_s.iter().zip(&xs).map(|(&c, x)| row[c] * x).sum();
            let shift: f64 = basic_s.iter().zip(&ds).map(|(&c, d)| row[c] * d).sum();
            let direct = match enter {
                Var::Structural(j) => row[j],
                Var::Slack(_) => 0.0,
            };
            consider(Var::Slack(i), lp.b[i] - used, direct - shift);
        }
        let Some((leaving, step)) = leave else {
            return Ok(finish(LpStatus::Unbounded, iterations));
        };
        bland = step <= DEGENERATE_STEP;

        match enter {
            Var::Structural(j) => {
                basic_s.push(j);
                in_s[j] = true;
            }
            Var::Slack(r) => {
                tight.retain(|&t| t != r);
                in_r[r] = false;
            }
        }
        match leaving {
            Var::Structural(c) => {
                basic_s.retain(|&s| s != c);
                in_s[c] = false;
            }
            Var::Slack(i) => {
                tight.push(i);
                in_r[i] = true;
            }
        }
        iterations += 1;
    }
}
