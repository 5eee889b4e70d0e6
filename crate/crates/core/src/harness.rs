//! Seeded batch experiments over graph families.
//!
//! A sweep runs one complete simulation per (n, seed) cell of a family
//! grid, puts every trace through the full invariant suite and a realized-
//! signal cross-validation, and emits one CSV row per run. Cells execute in
//! parallel but rows always come out in (n, seed) order, so a sweep with
//! the same config reproduces its CSV byte for byte (the optional timestamp
//! header is suppressed in deterministic mode).
//!
//! [`conjecture_report`] summarizes convergence times against network size:
//! per-family medians, a least-squares slope of median versus n, and the
//! worst observed `t/n` and `t·d*/n` ratios. It reports; it never asserts.

use std::fmt::{self, Display, Write as _};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::check_trace;
use crate::engine::{default_max_rounds, run, EngineError, SimulationTrace};
use crate::graph::{make_family, Family, GraphError};
use crate::oracle::{cross_validate, sample_world, OracleError, CROSS_VALIDATE_TOL};
use crate::scalar::{Backend, Rational, Scalar};

/// XOR salt separating the signal-sampling stream from the graph-sampling
/// stream when both are derived from one row seed.
const WORLD_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// True scalar used for the per-row realized worlds.
const WORLD_S_TRUE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One family grid: which sizes to run, how many seeded repetitions per
/// size, and on which arithmetic backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub family: Family,
    pub n_values: Vec<usize>,
    pub degree: Option<usize>,
    pub seeds: Vec<u64>,
    pub backend: Backend,
}

impl SweepConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.n_values.is_empty() {
            return Err(HarnessError::InvalidConfig("no n values".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::InvalidConfig("no seeds".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::InvalidConfig("seeds must be distinct".into()));
        }
        for &n in &self.n_values {
            if n < self.family.min_n() {
                return Err(HarnessError::InvalidConfig(format!(
                    "{} needs n >= {}, got {n}",
                    self.family,
                    self.family.min_n()
                )));
            }
            if self.family == Family::RegularRandom {
                let degree = self.degree.ok_or_else(|| {
                    HarnessError::InvalidConfig("regular_random requires a degree".into())
                })?;
                if degree < 2 || degree >= n || n * degree % 2 != 0 {
                    return Err(HarnessError::InvalidConfig(format!(
                        "infeasible regular cell n={n} degree={degree}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One run's outcome, mirroring the CSV columns exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: Family,
    pub n: usize,
    pub degree: Option<usize>,
    /// graph diameter
    pub d: usize,
    /// minimal degree
    pub d_star: usize,
    pub seed: u64,
    pub t_last_change: usize,
    pub t_all_equal: Option<usize>,
    /// the guaranteed bound 2·n·d
    pub bound_2nd: usize,
    /// largest single-round dimension increment any agent showed
    pub max_dim_step: usize,
    pub invariants_ok: bool,
}

/// Runs every (n, seed) cell of the grid. Rows come back in grid order.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>, HarnessError> {
    config.validate()?;
    let jobs: Vec<(usize, u64)> = config
        .n_values
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&s| (n, s)))
        .collect();
    jobs.par_iter()
        .map(|&(n, seed)| match config.backend {
            Backend::Rational => run_cell::<Rational>(config, n, seed),
            Backend::Float => run_cell::<f64>(config, n, seed),
        })
        .collect()
}

fn run_cell<S: Scalar>(
    config: &SweepConfig,
    n: usize,
    seed: u64,
) -> Result<SweepRow, HarnessError> {
    let graph = make_family(config.family, n, config.degree, seed)?;
    let metrics = graph.metrics();
    let bound_2nd = 2 * n * metrics.diameter;

    let (trace, bound_exceeded): (SimulationTrace<S>, bool) =
        match run(&graph, default_max_rounds(&graph)) {
            Ok(trace) => (trace, false),
            Err(EngineError::BoundExceeded { trace, .. }) => (*trace, true),
            Err(e @ EngineError::InvalidMaxRounds { .. }) => {
                return Err(HarnessError::InvalidConfig(e.to_string()))
            }
        };

    let report = check_trace(&trace);
    let world = sample_world(WORLD_S_TRUE, 1.0, n, seed ^ WORLD_SEED_SALT)?;
    let validation = cross_validate(&trace, &world)?;
    let invariants_ok =
        !bound_exceeded && report.all_passed() && validation.within(CROSS_VALIDATE_TOL);

    Ok(SweepRow {
        family: config.family,
        n,
        degree: config.degree,
        d: metrics.diameter,
        d_star: metrics.min_degree,
        seed,
        t_last_change: trace.t_last_change,
        t_all_equal: trace.t_all_equal,
        bound_2nd,
        max_dim_step: max_dim_step(&trace),
        invariants_ok,
    })
}

fn max_dim_step<S: Scalar>(trace: &SimulationTrace<S>) -> usize {
    let mut max_step = 0;
    for w in trace.rounds.windows(2) {
        for (before, after) in w[0].agents.iter().zip(&w[1].agents) {
            max_step = max_step.max(after.dim.saturating_sub(before.dim));
        }
    }
    max_step
}

pub const CSV_HEADER: &str =
    "family,n,degree,d,d_star,seed,t_last_change,t_all_equal,bound_2nd,max_dim_step,invariants_ok";

/// Renders rows as CSV. Without `deterministic`, a `#`-prefixed timestamp
/// comment precedes the header.
pub fn csv_string(rows: &[SweepRow], deterministic: bool) -> String {
    let mut out = String::new();
    if !deterministic {
        let _ = writeln!(out, "# generated {}", chrono::Utc::now().to_rfc3339());
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let degree = row.degree.map(|d| d.to_string()).unwrap_or_default();
        let t_all_equal = row.t_all_equal.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.family,
            row.n,
            degree,
            row.d,
            row.d_star,
            row.seed,
            row.t_last_change,
            t_all_equal,
            row.bound_2nd,
            row.max_dim_step,
            row.invariants_ok
        );
    }
    out
}

/// Writes the CSV plus a `<stem>.config.json` sidecar holding the config.
pub fn write_outputs(
    rows: &[SweepRow],
    config: &SweepConfig,
    csv_path: &Path,
    deterministic: bool,
) -> Result<(), HarnessError> {
    std::fs::write(csv_path, csv_string(rows, deterministic))?;
    let mut sidecar = serde_json::to_string_pretty(config)?;
    sidecar.push('\n');
    std::fs::write(csv_path.with_extension("config.json"), sidecar)?;
    Ok(())
}

/// Per-family convergence-time summary.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySummary {
    pub family: Family,
    /// (n, median t_last_change) pairs in increasing n
    pub medians: Vec<(usize, f64)>,
    /// least-squares slope of median versus n
    pub slope: f64,
    pub intercept: f64,
    /// worst observed t_last_change / n
    pub max_t_over_n: f64,
    /// worst observed t_last_change · d* / n
    pub max_t_dstar_over_n: f64,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConjectureReport {
    pub families: Vec<FamilySummary>,
}

impl Display for ConjectureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.families {
            let medians = s
                .medians
                .iter()
                .map(|(n, m)| format!("n={n}:{m}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(
                f,
                "{}: slope={:.4} intercept={:.3} max(t/n)={:.4} max(t*d_star/n)={:.4} medians[{medians}] ({} rows)",
                s.family, s.slope, s.intercept, s.max_t_over_n, s.max_t_dstar_over_n, s.rows
            )?;
        }
        Ok(())
    }
}

/// Fits median convergence time against n for every family present in
/// `rows` with at least two distinct sizes. Errors if no family has enough
/// sizes to fit.
pub fn conjecture_report(rows: &[SweepRow]) -> Result<ConjectureReport, HarnessError> {
    let mut families = Vec::new();
    for family in Family::ALL {
        let family_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.family == family).collect();
        if family_rows.is_empty() {
            continue;
        }
        let mut by_n: Vec<usize> = family_rows.iter().map(|r| r.n).collect();
        by_n.sort_unstable();
        by_n.dedup();
        if by_n.len() < 2 {
            continue;
        }
        let medians: Vec<(usize, f64)> = by_n
            .iter()
            .map(|&n| {
                let mut times: Vec<usize> = family_rows
                    .iter()
                    .filter(|r| r.n == n)
                    .map(|r| r.t_last_change)
                    .collect();
                times.sort_unstable();
                (n, median(&times))
            })
            .collect();
        let (slope, intercept) = least_squares(&medians);
        let max_t_over_n = family_rows
            .iter()
            .map(|r| r.t_last_change as f64 / r.n as f64)
            .fold(0.0, f64::max);
        let max_t_dstar_over_n = family_rows
            .iter()
            .map(|r| (r.t_last_change * r.d_star) as f64 / r.n as f64)
            .fold(0.0, f64::max);
        families.push(FamilySummary {
            family,
            medians,
            slope,
            intercept,
            max_t_over_n,
            max_t_dstar_over_n,
            rows: family_rows.len(),
        });
    }
    if families.is_empty() {
        return Err(HarnessError::InsufficientData(
            "need rows from at least two distinct n values".into(),
        ));
    }
    Ok(ConjectureReport { families })
}

fn median(sorted: &[usize]) -> f64 {
    let len = sorted.len();
    if len % 2 == 1 {
        sorted[len / 2] as f64
    } else {
        (sorted[len / 2 - 1] + sorted[len / 2]) as f64 / 2.0
    }
}

fn least_squares(points: &[(usize, f64)]) -> (f64, f64) {
    let len = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| *x as f64).sum::<f64>() / len;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / len;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(x, y) in points {
        cov += (x as f64 - mean_x) * (y - mean_y);
        var += (x as f64 - mean_x).powi(2);
    }
    let slope = if var == 0.0 { 0.0 } else { cov / var };
    (slope, mean_y - slope * mean_x)
}
