use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use sqvdc_core::approx::build_error_schedule;
use sqvdc_core::arith::{QuadSurd, RationalAngle};
use sqvdc_core::construct::{
    bound_report, build_construction, expand_coefficients, grid_values, ConstructionSchedule, Evaluator, ScheduleDocument,
};
use sqvdc_core::expsum::{self, gauss_rows, vartheta, LeadingCase};
use sqvdc_core::modular::{
    autocorrelation, corollary_check, lp_polynomial, max_squarefree_set, squares_mod, SearchBudget, MAX_EXHAUSTIVE_N,
};
use sqvdc_core::oracle::{compare_with_polynomial, gamma_table, SignMode};
use sqvdc_core::simplex::LpStatus;
use sqvdc_core::weights::{build_scheme, random_structured_modulus, sweep_contract, sweep_contract_structured, LAMBDA_TAG};

use crate::config::{Format, RunConfig};

/// Tolerance on LP duality gaps reported by `oracle`.
const GAP_TOL: f64 = 1e-8;

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

pub struct Output {
    json: Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    pub checks: Vec<Check>,
}

impl Output {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => {
                let mut doc = self.json.clone();
                let obj = doc.as_object_mut().expect("command output is an object");
                let checks: Vec<Value> = self
                    .checks
                    .iter()
                    .map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail}))
                    .collect();
                obj.insert("checks".into(), Value::Array(checks));
                obj.insert("pass".into(), Value::Bool(self.passed()));
                Ok(serde_json::to_string_pretty(&doc)? + "\n")
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.header)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                Ok(String::from_utf8(w.into_inner()?)?)
            }
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Shortest decimal that reads back to the same `f64`.
fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite float")
    } else {
        v.to_string()
    }
}

fn case_name(c: LeadingCase) -> &'static str {
    match c {
        LeadingCase::Divides => "divides",
        LeadingCase::Vanishes => "vanishes",
        LeadingCase::Generic => "generic",
    }
}

fn mode_name(m: SignMode) -> &'static str {
    match m {
        SignMode::Free => "free",
        SignMode::Nonnegative => "nonneg",
    }
}

#[derive(Args, Debug)]
pub struct SchemeArgs {
    #[arg(long)]
    delta: f64,
    /// Also check weighted_tau(q) >= -δ/2 for every q up to this bound.
    #[arg(long)]
    sweep_q: Option<u64>,
    /// Also check the contract on this many seeded prime-power products.
    #[arg(long)]
    structured: Option<usize>,
}

pub fn scheme(a: &SchemeArgs, cfg: &RunConfig) -> Result<Output> {
    let s = build_scheme(a.delta)?;
    let violations = s.invariant_violations();
    let mut checks = vec![Check::new("scheme invariants", violations.is_empty(), format!("{} violations", violations.len()))];
    let contract = a.sweep_q.map(|q| sweep_contract(&s, q));
    let structured = a.structured.map(|count| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let moduli: Vec<_> = (0..count).map(|_| random_structured_modulus(&mut rng, s.l, 4 * s.l)).collect();
        sweep_contract_structured(&s, &moduli)
    });
    for (name, sweep) in [("contract q <= bound", &contract), ("contract structured q", &structured)] {
        if let Some(c) = sweep {
            checks.push(Check::new(
                name,
                c.violations == 0,
                format!("{} checked, min {} at q = {}, {} violations", c.checked, c.min_value, c.argmin, c.violations),
            ));
        }
    }
    let rows = s
        .chain
        .iter()
        .enumerate()
        .map(|(j, lj)| vec![j.to_string(), lj.to_string(), num(s.level_weight(j))])
        .collect();
    Ok(Output {
        json: json!({
            "scheme": to_json(&s.to_document())?,
            "lambda_tag": LAMBDA_TAG,
            "invariant_violations": violations,
            "contract": to_json(&contract)?,
            "structured": to_json(&structured)?,
        }),
        header: vec!["j", "level", "weight"],
        rows,
        checks,
    })
}

#[derive(Args, Debug)]
pub struct TauArgs {
    #[arg(long = "L")]
    l: BigUint,
    #[arg(long)]
    q_max: u64,
}

pub fn tau(a: &TauArgs) -> Result<Output> {
    let mut rows = Vec::new();
    let mut items = Vec::new();
    for q in 1..=a.q_max {
        let qb = BigUint::from(q);
        let t = expsum::tau(&a.l, &qb);
        let v = vartheta(&a.l, &qb);
        rows.push(vec![q.to_string(), num(t.value), num(v.value), case_name(t.case).into(), t.r.to_string()]);
        items.push(json!({"q": q, "tau": t.value, "vartheta": v.value, "case": t.case, "r": t.r.to_string()}));
    }
    Ok(Output {
        json: json!({"L": a.l.to_string(), "rows": items}),
        header: vec!["q", "tau", "vartheta", "case", "r"],
        rows,
        checks: vec![],
    })
}

#[derive(Args, Debug)]
pub struct GaussArgs {
    #[arg(long)]
    q_max: u64,
    /// Dilations L, comma separated.
    #[arg(long = "L", value_delimiter = ',', default_value = "1")]
    l: Vec<u64>,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

pub fn gauss(a: &GaussArgs, cfg: &RunConfig) -> Result<Output> {
    let table = gauss_rows(a.q_max, &a.l, cfg.precision());
    let worst = table.iter().max_by(|x, y| x.max_error.total_cmp(&y.max_error));
    let max_error = worst.map_or(0.0, |r| r.max_error);
    let detail = match worst {
        Some(r) => format!("max error {max_error:e} at q = {}, L = {}", r.q, r.l),
        None => "empty table".into(),
    };
    let rows = table
        .iter()
        .map(|r| {
            vec![
                r.q.to_string(),
                r.l.to_string(),
                num(r.vartheta),
                case_name(r.case).into(),
                r.numerators.to_string(),
                num(r.max_error),
            ]
        })
        .collect();
    Ok(Output {
        json: json!({"rows": to_json(&table)?, "max_error": max_error, "tolerance": a.tolerance}),
        header: vec!["q", "L", "vartheta", "case", "numerators", "max_error"],
        rows,
        checks: vec![Check::new("gauss sum closed form", max_error <= a.tolerance, detail)],
    })
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    delta: f64,
    /// Grid size G; defaults to the configured grid.
    #[arg(long)]
    grid: Option<u64>,
    /// Evaluate on the grid and check min T >= -δ.
    #[arg(long)]
    verify: bool,
    /// Custom level chain L_0,...,L_l instead of the scheme for δ.
    #[arg(long, value_delimiter = ',', requires = "moduli")]
    chain: Vec<BigUint>,
    /// Custom moduli M_1,...,M_m; used with --chain.
    #[arg(long, value_delimiter = ',', requires = "chain")]
    moduli: Vec<BigUint>,
    /// Include every grid value in the JSON output.
    #[arg(long, requires = "verify")]
    values: bool,
}

pub fn build(a: &BuildArgs, cfg: &RunConfig) -> Result<Output> {
    let cons = if a.chain.is_empty() {
        build_construction(a.delta)?
    } else {
        ConstructionSchedule::custom(a.delta, QuadSurd::inv_sqrt2(), a.chain.clone(), a.moduli.clone())?
    };
    let grid = a.grid.unwrap_or(cfg.grid);
    if grid < 2 {
        bail!("grid size must be at least 2, got {grid}");
    }
    let degree = cons.degree();
    let summary = json!({
        "m": cons.m(),
        "levels": cons.levels(),
        "l_max": cons.l_max().to_string(),
        "m_max": cons.m_max().to_string(),
        "degree_digits": degree.to_string().len(),
        "ln_degree": cons.ln_degree(),
        "derivative_bound": cons.derivative_bound(),
    });
    let mut json = json!({"schedule": to_json(&cons.to_document())?, "summary": summary});
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    if a.verify {
        let ev = Evaluator::new(&cons, cfg.precision());
        let values = grid_values(&ev, grid)?;
        let report = bound_report(&cons, grid, &values);
        checks.push(Check::new(
            "min T >= -delta",
            report.pass,
            format!("min {} at {}, margin {}", report.min, report.argmin, report.margin),
        ));
        if cons.scheme.is_some() {
            checks.push(Check::new("m <= 9/delta", report.m_within_9_over_delta, format!("m = {}", report.m)));
            checks.push(Check::new("4m <= 36/delta", report.four_m_within_36_over_delta, format!("4m = {}", 4 * report.m)));
        }
        rows = values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), format!("{i}/{grid}"), num(*v)])
            .collect();
        json["report"] = to_json(&report)?;
        if a.values {
            json["values"] = to_json(&values)?;
        }
    }
    Ok(Output { json, header: vec!["i", "x", "value"], rows, checks })
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Spectrum bounds n, comma separated; may be empty.
    #[arg(long, default_value = "")]
    n_list: String,
    /// free or nonneg.
    #[arg(long, default_value = "nonneg")]
    mode: SignMode,
    /// Probe grid size; defaults to 128 times the largest n.
    #[arg(long)]
    grid: Option<u64>,
    /// Output of `build`; compares the stored schedule with the LP optimum.
    #[arg(long)]
    from_file: Option<PathBuf>,
    /// Keep only frequencies up to this bound when expanding a stored schedule.
    #[arg(long, requires = "from_file")]
    cap: Option<BigUint>,
}

fn parse_n_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().with_context(|| format!("bad n `{t}`")))
        .collect()
}

pub fn oracle(a: &OracleArgs, cfg: &RunConfig) -> Result<Output> {
    if let Some(path) = &a.from_file {
        return oracle_from_file(a, path, cfg);
    }
    let mut ns = parse_n_list(&a.n_list)?;
    ns.sort_unstable();
    ns.dedup();
    let table = gamma_table(&ns, a.mode, a.grid)?;
    let optimal = table.iter().all(|s| s.status == LpStatus::Optimal);
    let worst_gap = table.iter().map(|s| s.duality_gap).fold(0.0, f64::max);
    let monotone = table.windows(2).all(|w| w[1].a0 <= w[0].a0 + 1e-9);
    let rows = table
        .iter()
        .map(|s| {
            vec![
                s.n.to_string(),
                mode_name(s.sign_mode).into(),
                num(s.a0),
                format!("{:?}", s.status),
                num(s.duality_gap),
                num(s.max_violation),
                s.iterations.to_string(),
                s.rounds.to_string(),
            ]
        })
        .collect();
    Ok(Output {
        json: json!({"mode": mode_name(a.mode), "rows": to_json(&table)?}),
        header: vec!["n", "mode", "a0", "status", "duality_gap", "max_violation", "iterations", "rounds"],
        rows,
        checks: vec![
            Check::new("all optimal", optimal, format!("{} problems", table.len())),
            Check::new("duality gap", worst_gap <= GAP_TOL, format!("worst {worst_gap:e}")),
            Check::new("nonincreasing in n", monotone, ""),
        ],
    })
}

fn oracle_from_file(a: &OracleArgs, path: &PathBuf, cfg: &RunConfig) -> Result<Output> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let schedule = doc.get("schedule").cloned().unwrap_or(doc);
    let schedule: ScheduleDocument = serde_json::from_value(schedule).context("no schedule in input")?;
    let cons = ConstructionSchedule::from_document(&schedule)?;
    let poly = expand_coefficients(&cons, a.cap.as_ref(), cfg.max_terms)?;
    let report = compare_with_polynomial(&poly, cons.delta, a.grid)?;
    let row = vec![
        report.support.len().to_string(),
        num(report.shift),
        num(report.construction_a0),
        num(report.lp_a0),
        format!("{:?}", report.lp_status),
        report.consistent.to_string(),
    ];
    let detail = format!("lp a0 {} vs construction a0 {}", report.lp_a0, report.construction_a0);
    Ok(Output {
        json: json!({"comparison": to_json(&report)?}),
        header: vec!["support_size", "shift", "construction_a0", "lp_a0", "lp_status", "consistent"],
        rows: vec![row],
        checks: vec![Check::new("lp optimum below construction", report.consistent, detail)],
    })
}

#[derive(Args, Debug)]
pub struct ModularArgs {
    /// Moduli n, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    /// Search exhaustively up to n = 64 regardless of the configured limit.
    #[arg(long)]
    exhaustive: bool,
    /// Local-search restarts above the exhaustive limit.
    #[arg(long, default_value_t = 2000)]
    restarts: u64,
}

pub fn modular(a: &ModularArgs, cfg: &RunConfig) -> Result<Output> {
    let limit = if a.exhaustive { MAX_EXHAUSTIVE_N } else { cfg.max_subset_n };
    let budget = SearchBudget { exhaustive_limit: limit, restarts: a.restarts, seed: cfg.seed };
    let mut rows = Vec::new();
    let mut items = Vec::new();
    let mut checks = Vec::new();
    for &n in &a.n {
        if a.exhaustive && n > MAX_EXHAUSTIVE_N {
            bail!("exhaustive search supports n <= {MAX_EXHAUSTIVE_N}, got {n}");
        }
        let squares = squares_mod(n)?;
        let best = max_squarefree_set(n, &budget)?;
        let poly = lp_polynomial(n)?;
        let f = autocorrelation(n, &best.witness)?;
        let verdict = corollary_check(&f, &poly, &squares)?;
        checks.push(Check::new(
            format!("density bound n = {n}"),
            verdict.holds && verdict.parseval_error <= 1e-12,
            format!("rho {} <= delta {}", verdict.rho, verdict.delta),
        ));
        rows.push(vec![
            n.to_string(),
            squares.members.len().to_string(),
            best.size.to_string(),
            best.exact.to_string(),
            num(poly.a0),
            num(verdict.rho),
            verdict.holds.to_string(),
        ]);
        items.push(json!({
            "n": n,
            "squares": squares.members,
            "set": to_json(&best)?,
            "delta": poly.a0,
            "polynomial": to_json(&poly.to_document())?,
            "corollary": to_json(&verdict)?,
        }));
    }
    Ok(Output {
        json: json!({"rows": items}),
        header: vec!["n", "squares", "max_size", "exact", "delta", "rho", "holds"],
        rows,
        checks,
    })
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    #[arg(long)]
    delta: f64,
    /// The point p/q.
    #[arg(long)]
    x: RationalAngle,
    /// Dilation L; defaults to L_max of the scheme for δ.
    #[arg(long = "L")]
    l: Option<BigUint>,
    /// Check that at most two E_k exceed δ/4 and that their average is at most δ/2.
    #[arg(long)]
    verify: bool,
}

pub fn schedule(a: &ScheduleArgs, cfg: &RunConfig) -> Result<Output> {
    let l = match &a.l {
        Some(l) => l.clone(),
        None => build_scheme(a.delta)?.l_max().clone(),
    };
    let s = build_error_schedule(&a.x, &l, a.delta, cfg.c1)?;
    let mut checks = Vec::new();
    if a.verify {
        checks.push(Check::new("at most two E_k > delta/4", s.exceed_count <= 2, format!("{} exceed", s.exceed_count)));
        checks.push(Check::new("average <= delta/2", s.average_ok(), format!("average {}", s.average)));
    }
    let rows = s
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.m_k.to_string(),
                r.p.to_string(),
                r.q.to_string(),
                format!("{}/{}", r.eps.numer(), r.eps.denom()),
                num(r.envelope),
            ]
        })
        .collect();
    Ok(Output {
        json: json!({"x": a.x.to_string(), "L": l.to_string(), "schedule": to_json(&s)?}),
        header: vec!["k", "M_k", "p", "q", "eps", "envelope"],
        rows,
        checks,
    })
}
