//! The per-trace invariant suite.
//!
//! Everything the protocol guarantees about a run is checked here against a
//! recorded trace: unbiasedness of every announcement, the variance
//! identity, monotone variance, self-weight lower bound, the
//! change-implies-dimension-growth argument, internal consistency of the
//! change log, both convergence bounds, the uniform limit, and the
//! stagnation property. The `verify` command, the sweep harness, and the
//! acceptance suite all call this one entry point.

use crate::engine::{check_stagnation_lemma, SimulationTrace};
use crate::scalar::{Backend, Scalar};

/// Float-backend tolerance for the uniform-limit and variance-identity
/// comparisons (the exact backend compares exactly).
pub const FLOAT_LIMIT_TOL: f64 = 1e-9;

/// Slack allowed below `1/n` for the self-weight bound on floats.
pub const FLOAT_SELF_WEIGHT_SLACK: f64 = 1e-9;

/// Slack allowed for the monotone-variance comparison on floats.
pub const FLOAT_MONOTONE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    fn push(&mut self, name: &'static str, outcome: Result<String, String>) {
        let (passed, detail) = match outcome {
            Ok(detail) => (true, detail),
            Err(detail) => (false, detail),
        };
        self.results.push(CheckResult {
            name,
            passed,
            detail,
        });
    }
}

/// Exact equality on the rational backend, absolute `tol` on floats.
fn close<S: Scalar>(a: &S, b: &S, tol: f64) -> bool {
    match S::BACKEND {
        Backend::Rational => a == b,
        Backend::Float => (a.to_f64() - b.to_f64()).abs() <= tol,
    }
}

/// `x >= bound`, with `slack` below the bound forgiven on floats.
fn at_least<S: Scalar>(x: &S, bound: &S, slack: f64) -> bool {
    match S::BACKEND {
        Backend::Rational => x >= bound,
        Backend::Float => x.to_f64() >= bound.to_f64() - slack,
    }
}

/// Runs the full invariant suite on a trace.
pub fn check_trace<S: Scalar>(trace: &SimulationTrace<S>) -> CheckReport {
    let mut report = CheckReport::default();
    report.push("graph_valid", check_graph(trace));
    report.push("unbiasedness", check_unbiasedness(trace));
    report.push("variance_identity", check_variance_identity(trace));
    report.push("self_weight", check_self_weight(trace));
    report.push("dim_bounds", check_dim_bounds(trace));
    report.push("variance_monotone", check_variance_monotone(trace));
    report.push(
        "change_implies_dim_growth",
        check_change_dim_growth(trace),
    );
    report.push("change_log_consistent", check_change_log(trace));
    report.push("bound_2nd", check_bound_2nd(trace));
    report.push("bound_n_sq", check_bound_n_sq(trace));
    report.push("limit_uniform", check_limit_uniform(trace));
    report.push("stagnation_lemma", check_stagnation(trace));
    report
}

fn check_graph<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    let violations = trace.graph.validate();
    if violations.is_empty() {
        Ok(format!("n={} m={}", trace.n(), trace.graph.edge_count()))
    } else {
        Err(format!("{} violation(s)", violations.len()))
    }
}

fn check_unbiasedness<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    for round in &trace.rounds {
        for a in &round.agents {
            if !a.beta.is_unbiased() {
                return Err(format!(
                    "agent {} at round {} has coefficient sum {}",
                    a.id,
                    round.t,
                    a.beta.sum()
                ));
            }
        }
    }
    Ok("coefficient sums are one everywhere".into())
}

fn check_variance_identity<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    for round in &trace.rounds {
        for a in &round.agents {
            let norm_sq = a.beta.norm_sq();
            if !close(&norm_sq, &a.tau_sq, FLOAT_LIMIT_TOL) {
                return Err(format!(
                    "agent {} at round {}: ‖beta‖²={} vs tau²={}",
                    a.id, round.t, norm_sq, a.tau_sq
                ));
            }
        }
    }
    Ok("tau² equals ‖beta‖² everywhere".into())
}

fn check_self_weight<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    let bound = S::ratio(1, trace.n() as i64);
    for round in &trace.rounds {
        for a in &round.agents {
            if !at_least(a.beta.get(a.id), &bound, FLOAT_SELF_WEIGHT_SLACK) {
                return Err(format!(
                    "agent {} at round {} weighs its own signal {} < 1/{}",
                    a.id,
                    round.t,
                    a.beta.get(a.id),
                    trace.n()
                ));
            }
        }
    }
    Ok(format!("own-signal weight stays ≥ 1/{}", trace.n()))
}

fn check_dim_bounds<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    let n = trace.n();
    for agent in 0..n {
        let mut prev = 0;
        for round in &trace.rounds {
            let dim = round.agents[agent].dim;
            if dim < 1 || dim > n {
                return Err(format!(
                    "agent {agent} at round {} has dim {dim} outside 1..={n}",
                    round.t
                ));
            }
            if dim < prev {
                return Err(format!(
                    "agent {agent} dim dropped {prev} -> {dim} at round {}",
                    round.t
                ));
            }
            prev = dim;
        }
    }
    Ok("dimensions stay in range and never shrink".into())
}

fn check_variance_monotone<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    for agent in 0..trace.n() {
        for w in trace.rounds.windows(2) {
            let before = &w[0].agents[agent].tau_sq;
            let after = &w[1].agents[agent].tau_sq;
            if !at_least(before, after, FLOAT_MONOTONE_SLACK) {
                return Err(format!(
                    "agent {agent} variance rose {before} -> {after} at round {}",
                    w[1].t
                ));
            }
        }
    }
    Ok("tau² never increases".into())
}

fn check_change_dim_growth<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    let n = trace.n();
    let mut change_count = vec![0usize; n];
    for (t, changed) in trace.change_log.iter().enumerate() {
        for &agent in changed {
            change_count[agent] += 1;
            if t == 0 {
                return Err("round 0 cannot record changes".into());
            }
            let before = trace.rounds[t - 1].agents[agent].dim;
            let after = trace.rounds[t].agents[agent].dim;
            if after <= before {
                return Err(format!(
                    "agent {agent} changed at round {t} without dimension growth ({before} -> {after})"
                ));
            }
        }
    }
    if let Some((agent, &count)) = change_count
        .iter()
        .enumerate()
        .find(|&(_, &c)| c > n.saturating_sub(1))
    {
        return Err(format!(
            "agent {agent} changed {count} times, more than n-1 = {}",
            n - 1
        ));
    }
    Ok("every change grew the spanned dimension".into())
}

fn check_change_log<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    if trace.change_log.len() != trace.rounds.len() {
        return Err("change log length differs from round count".into());
    }
    let mut recomputed_last_change = 0;
    for (t, w) in trace.rounds.windows(2).enumerate() {
        let recomputed: Vec<usize> = w[0]
            .agents
            .iter()
            .zip(&w[1].agents)
            .filter(|(a, b)| !a.beta.approx_eq(&b.beta))
            .map(|(a, _)| a.id)
            .collect();
        if recomputed != trace.change_log[t + 1] {
            return Err(format!("recorded change set at round {} disagrees", t + 1));
        }
        if !recomputed.is_empty() {
            recomputed_last_change = t + 1;
        }
    }
    if recomputed_last_change != trace.t_last_change {
        return Err(format!(
            "recorded t_last_change={} but snapshots say {}",
            trace.t_last_change, recomputed_last_change
        ));
    }
    let recomputed_all_equal = trace.rounds.iter().position(|round| {
        round
            .agents
            .iter()
            .all(|a| a.beta.coincides(&round.agents[0].beta))
    });
    if recomputed_all_equal != trace.t_all_equal {
        return Err(format!(
            "recorded t_all_equal={:?} but snapshots say {:?}",
            trace.t_all_equal, recomputed_all_equal
        ));
    }
    Ok("change log matches the snapshots".into())
}

fn check_bound_2nd<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    let bound = 2 * trace.n() * trace.graph.metrics().diameter;
    if trace.t_last_change <= bound {
        Ok(format!("t_last_change={} ≤ 2·n·d={bound}", trace.t_last_change))
    } else {
        Err(format!(
            "t_last_change={} exceeds 2·n·d={bound}",
            trace.t_last_change
        ))
    }
}

fn check_bound_n_sq<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    let bound = trace.n() * trace.n();
    if trace.t_last_change <= bound {
        Ok(format!("t_last_change={} ≤ n²={bound}", trace.t_last_change))
    } else {
        Err(format!(
            "t_last_change={} exceeds n²={bound}",
            trace.t_last_change
        ))
    }
}

fn check_limit_uniform<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    let n = trace.n();
    let uniform = crate::algebra::CoefVector::<S>::uniform(n);
    let target_tau = S::ratio(1, n as i64);
    for a in &trace.final_round().agents {
        let diff = a.beta.max_abs_diff_f64(&uniform);
        let exact_ok = match S::BACKEND {
            Backend::Rational => a.beta == uniform,
            Backend::Float => diff <= FLOAT_LIMIT_TOL,
        };
        if !exact_ok {
            return Err(format!(
                "agent {} final estimator strays {diff:.3e} from the average",
                a.id
            ));
        }
        if !close(&a.tau_sq, &target_tau, FLOAT_LIMIT_TOL) {
            return Err(format!(
                "agent {} final tau²={} differs from 1/{n}",
                a.id, a.tau_sq
            ));
        }
    }
    Ok(format!("all agents end at the simple average, tau²=1/{n}"))
}

fn check_stagnation<S: Scalar>(trace: &SimulationTrace<S>) -> Result<String, String> {
    match check_stagnation_lemma(trace, &trace.graph) {
        Ok(()) => Ok("no stagnation window precedes agreement".into()),
        Err(v) => Err(format!(
            "agent {} stagnant from round {} yet population disagrees at round {}",
            v.agent, v.window_start, v.failed_round
        )),
    }
}
