//! The synchronous round protocol.
//!
//! Every agent starts from its own signal. Each round, all agents announce
//! their current estimator, collect their neighbors' announcements from the
//! same instant, keep the ones that enlarge their memory's span, and re-fuse
//! into the minimum-variance unbiased estimator over the enlarged span.
//! The coefficient dynamics do not depend on realized signal values, so the
//! engine is purely symbolic; realized values live in the `oracle` module.
//!
//! A run records the full per-round trace and stops at the first round in
//! which no estimator changes. Once a round changes nothing, every later
//! observation repeats something already absorbed, so that round is a fixed
//! point of [`step`] and the run has converged.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{bayes_update, select_basis, CoefVector};
use crate::graph::{Graph, GraphError};
use crate::scalar::{Backend, Scalar, ScalarParseError, ScalarRepr};

/// One agent's state: its memory basis (a maximal independent subset of
/// everything it has observed), the current estimator, and the estimator's
/// variance and span dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState<S: Scalar> {
    pub id: usize,
    pub basis: Vec<CoefVector<S>>,
    pub beta: CoefVector<S>,
    pub tau_sq: S,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSnapshot<S: Scalar> {
    pub id: usize,
    pub beta: CoefVector<S>,
    pub tau_sq: S,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundSnapshot<S: Scalar> {
    pub t: usize,
    pub agents: Vec<AgentSnapshot<S>>,
}

/// Complete record of a run: per-round snapshots of every agent, the set of
/// agents whose estimator changed at each round, the last round in which any
/// estimator changed, and the first round at which all estimators coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace<S: Scalar> {
    pub graph: Graph,
    pub rounds: Vec<RoundSnapshot<S>>,
    pub change_log: Vec<Vec<usize>>,
    pub t_last_change: usize,
    pub t_all_equal: Option<usize>,
}

impl<S: Scalar> SimulationTrace<S> {
    /// Convergence round: the last round in which any estimator changed.
    pub fn t_converged(&self) -> usize {
        self.t_last_change
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn final_round(&self) -> &RoundSnapshot<S> {
        self.rounds.last().expect("trace has at least round 0")
    }
}

#[derive(Debug, Error)]
pub enum EngineError<S: Scalar> {
    #[error("max_rounds {given} is below the guaranteed convergence bound {required}")]
    InvalidMaxRounds { given: usize, required: usize },
    /// No fixed point within the allowed rounds. This contradicts the
    /// convergence guarantee, so the partial trace rides along for autopsy.
    #[error("no fixed point within {max_rounds} rounds")]
    BoundExceeded {
        max_rounds: usize,
        trace: Box<SimulationTrace<S>>,
    },
}

/// Initial states: agent `v` holds exactly its own signal, so its basis is
/// `[e_v]`, its estimator is `e_v`, variance one, dimension one.
pub fn init<S: Scalar>(g: &Graph) -> Vec<AgentState<S>> {
    (0..g.n())
        .map(|v| {
            let beta = CoefVector::basis(g.n(), v);
            AgentState {
                id: v,
                basis: vec![beta.clone()],
                beta,
                tau_sq: S::one(),
                dim: 1,
            }
        })
        .collect()
}

/// One synchronous round: every agent reads its neighbors' current
/// estimators (all from the same time-t snapshot in `states`), keeps those
/// that enlarge its span, and re-fuses. Agents whose span did not grow are
/// returned untouched: their estimator was already optimal for that span.
pub fn step<S: Scalar>(states: &[AgentState<S>], g: &Graph) -> Vec<AgentState<S>> {
    states
        .iter()
        .map(|agent| {
            let mut candidates: Vec<CoefVector<S>> = agent.basis.clone();
            for &u in g.neighbors(agent.id) {
                candidates.push(states[u].beta.clone());
            }
            let selected = select_basis(&candidates);
            if selected.len() == agent.basis.len() {
                return agent.clone();
            }
            let new_basis: Vec<CoefVector<S>> =
                selected.into_iter().map(|i| candidates[i].clone()).collect();
            let est = bayes_update(&new_basis)
                .expect("basis selection yields a positive-definite memory");
            AgentState {
                id: agent.id,
                basis: new_basis,
                beta: est.beta,
                tau_sq: est.tau_sq,
                dim: est.dim,
            }
        })
        .collect()
}

/// The default round budget: one more than the guaranteed convergence bound
/// `2·n·d`, so a conforming run always hits its fixed point first.
pub fn default_max_rounds(g: &Graph) -> usize {
    2 * g.n() * g.metrics().diameter + 1
}

/// Runs the protocol until a full round changes no estimator, recording
/// every round (including the final, stationary one).
///
/// `max_rounds` must be at least the guaranteed bound `2·n·d`. If the
/// process fails to reach a fixed point within `max_rounds`, something that
/// should be impossible has happened; the error carries the complete trace.
pub fn run<S: Scalar>(g: &Graph, max_rounds: usize) -> Result<SimulationTrace<S>, EngineError<S>> {
    let required = 2 * g.n() * g.metrics().diameter;
    if max_rounds < required {
        return Err(EngineError::InvalidMaxRounds {
            given: max_rounds,
            required,
        });
    }

    let mut states = init::<S>(g);
    let mut rounds = vec![snapshot(0, &states)];
    let mut change_log: Vec<Vec<usize>> = vec![Vec::new()];
    let mut t_last_change = 0;

    for t in 1..=max_rounds.max(1) {
        let next = step(&states, g);
        let changed: Vec<usize> = states
            .iter()
            .zip(&next)
            .filter(|(old, new)| !old.beta.approx_eq(&new.beta))
            .map(|(old, _)| old.id)
            .collect();
        rounds.push(snapshot(t, &next));
        let done = changed.is_empty();
        if !done {
            t_last_change = t;
        }
        change_log.push(changed);
        states = next;
        if done {
            let t_all_equal = first_all_equal_round(&rounds);
            return Ok(SimulationTrace {
                graph: g.clone(),
                rounds,
                change_log,
                t_last_change,
                t_all_equal,
            });
        }
    }

    let t_all_equal = first_all_equal_round(&rounds);
    Err(EngineError::BoundExceeded {
        max_rounds,
        trace: Box::new(SimulationTrace {
            graph: g.clone(),
            rounds,
            change_log,
            t_last_change,
            t_all_equal,
        }),
    })
}

fn snapshot<S: Scalar>(t: usize, states: &[AgentState<S>]) -> RoundSnapshot<S> {
    RoundSnapshot {
        t,
        agents: states
            .iter()
            .map(|a| AgentSnapshot {
                id: a.id,
                beta: a.beta.clone(),
                tau_sq: a.tau_sq.clone(),
                dim: a.dim,
            })
            .collect(),
    }
}

fn all_equal<S: Scalar>(round: &RoundSnapshot<S>) -> bool {
    round
        .agents
        .iter()
        .all(|a| a.beta.coincides(&round.agents[0].beta))
}

fn first_all_equal_round<S: Scalar>(rounds: &[RoundSnapshot<S>]) -> Option<usize> {
    rounds.iter().position(all_equal)
}

/// A window that falsifies the stagnation property: `agent`'s estimator sat
/// still for `2·d` rounds starting at `window_start`, yet the population had
/// not agreed by `failed_round ≥ window_start + d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagnationViolation {
    pub agent: usize,
    pub window_start: usize,
    pub failed_round: usize,
}

/// Checks, over an entire trace, that whenever some agent's estimator is
/// unchanged for `2·d` consecutive rounds, all agents' estimators are equal
/// to each other from at most `d` rounds after the window opened, onward.
pub fn check_stagnation_lemma<S: Scalar>(
    trace: &SimulationTrace<S>,
    g: &Graph,
) -> Result<(), StagnationViolation> {
    let d = g.metrics().diameter;
    if d == 0 {
        return Ok(());
    }
    let rounds = &trace.rounds;
    let last = rounds.len() - 1;
    let equal_from: Vec<bool> = rounds.iter().map(all_equal).collect();

    for agent in 0..trace.n() {
        let mut start = 0;
        while start <= last {
            let mut end = start;
            while end < last
                && rounds[end + 1].agents[agent]
                    .beta
                    .approx_eq(&rounds[start].agents[agent].beta)
            {
                end += 1;
            }
            if end - start >= 2 * d {
                for (t, agreed) in equal_from.iter().enumerate().take(last + 1).skip(start + d) {
                    if !agreed {
                        return Err(StagnationViolation {
                            agent,
                            window_start: start,
                            failed_round: t,
                        });
                    }
                }
            }
            start = end + 1;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Trace serialization
// ---------------------------------------------------------------------------

/// JSON form of a trace. Exact coefficients travel as `"p/q"` strings so
/// the file stays lossless; float coefficients are plain numbers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceDoc {
    pub graph: GraphDoc,
    pub backend: Backend,
    pub rounds: Vec<RoundDoc>,
    pub change_log: Vec<Vec<usize>>,
    pub t_converged: usize,
    pub t_last_change: usize,
    pub t_all_equal: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDoc {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundDoc {
    pub t: usize,
    pub agents: Vec<AgentDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentDoc {
    pub id: usize,
    pub beta: Vec<ScalarRepr>,
    pub tau_sq: ScalarRepr,
    pub dim: usize,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace backend is {found}, attempted to load as {requested}")]
    BackendMismatch { found: Backend, requested: Backend },
    #[error(transparent)]
    Scalar(#[from] ScalarParseError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl<S: Scalar> SimulationTrace<S> {
    pub fn to_doc(&self) -> TraceDoc {
        TraceDoc {
            graph: GraphDoc {
                n: self.graph.n(),
                edges: self.graph.edges().to_vec(),
            },
            backend: S::BACKEND,
            rounds: self
                .rounds
                .iter()
                .map(|round| RoundDoc {
                    t: round.t,
                    agents: round
                        .agents
                        .iter()
                        .map(|a| AgentDoc {
                            id: a.id,
                            beta: a.beta.coeffs().iter().map(Scalar::repr).collect(),
                            tau_sq: a.tau_sq.repr(),
                            dim: a.dim,
                        })
                        .collect(),
                })
                .collect(),
            change_log: self.change_log.clone(),
            t_converged: self.t_last_change,
            t_last_change: self.t_last_change,
            t_all_equal: self.t_all_equal,
        }
    }

    pub fn from_doc(doc: &TraceDoc) -> Result<Self, TraceError> {
        if doc.backend != S::BACKEND {
            return Err(TraceError::BackendMismatch {
                found: doc.backend,
                requested: S::BACKEND,
            });
        }
        let graph = Graph::from_edges(doc.graph.n, doc.graph.edges.iter().copied())?;
        if doc.rounds.is_empty() {
            return Err(TraceError::Malformed("no rounds".into()));
        }
        if doc.change_log.len() != doc.rounds.len() {
            return Err(TraceError::Malformed(
                "change_log and rounds lengths differ".into(),
            ));
        }
        let rounds = doc
            .rounds
            .iter()
            .map(|round| {
                let agents = round
                    .agents
                    .iter()
                    .map(|a| {
                        let beta = a
                            .beta
                            .iter()
                            .map(S::from_repr)
                            .collect::<Result<Vec<S>, _>>()?;
                        if beta.len() != graph.n() {
                            return Err(TraceError::Malformed(format!(
                                "agent {} has {} coefficients for n={}",
                                a.id,
                                beta.len(),
                                graph.n()
                            )));
                        }
                        Ok(AgentSnapshot {
                            id: a.id,
                            beta: CoefVector::new(beta),
                            tau_sq: S::from_repr(&a.tau_sq)?,
                            dim: a.dim,
                        })
                    })
                    .collect::<Result<Vec<_>, TraceError>>()?;
                if agents.len() != graph.n() {
                    return Err(TraceError::Malformed(format!(
                        "round {} has {} agents for n={}",
                        round.t,
                        agents.len(),
                        graph.n()
                    )));
                }
                Ok(RoundSnapshot { t: round.t, agents })
            })
            .collect::<Result<Vec<_>, TraceError>>()?;
        Ok(SimulationTrace {
            graph,
            rounds,
            change_log: doc.change_log.clone(),
            t_last_change: doc.t_last_change,
            t_all_equal: doc.t_all_equal,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_doc()).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

impl TraceDoc {
    pub fn read_json(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), TraceError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_family, Family};
    use crate::scalar::Rational;

    fn r(num: i64, den: i64) -> Rational {
        Rational::ratio(num, den)
    }

    fn run_family(family: Family, n: usize) -> SimulationTrace<Rational> {
        let g = make_family(family, n, None, 0).unwrap();
        run(&g, default_max_rounds(&g)).unwrap()
    }

    #[test]
    fn init_gives_own_signal() {
        let g = make_family(Family::Clique, 3, None, 0).unwrap();
        let states = init::<Rational>(&g);
        for (v, s) in states.iter().enumerate() {
            assert_eq!(s.beta, CoefVector::basis(3, v));
            assert_eq!(s.tau_sq, r(1, 1));
            assert_eq!(s.dim, 1);
        }
    }

    #[test]
    fn init_betas_decompose_the_ones_vector() {
        let g = make_family(Family::Btree, 6, None, 0).unwrap();
        let states = init::<Rational>(&g);
        let mut total = vec![r(0, 1); 6];
        for s in &states {
            for (acc, c) in total.iter_mut().zip(s.beta.coeffs()) {
                *acc = acc.clone() + c.clone();
            }
        }
        assert!(total.iter().all(|c| *c == r(1, 1)));
    }

    #[test]
    fn clique_converges_in_one_step() {
        for n in 2..=8 {
            let g = make_family(Family::Clique, n, None, 0).unwrap();
            let after = step(&init::<Rational>(&g), &g);
            for s in &after {
                assert_eq!(s.beta, CoefVector::uniform(n));
                assert_eq!(s.tau_sq, r(1, n as i64));
                assert_eq!(s.dim, n);
            }
        }
    }

    #[test]
    fn path_three_step_by_step() {
        let g = make_family(Family::Path, 3, None, 0).unwrap();
        let s1 = step(&init::<Rational>(&g), &g);
        assert_eq!(
            s1[0].beta,
            CoefVector::new(vec![r(1, 2), r(1, 2), r(0, 1)])
        );
        assert_eq!(s1[1].beta, CoefVector::uniform(3));
        assert_eq!(
            s1[2].beta,
            CoefVector::new(vec![r(0, 1), r(1, 2), r(1, 2)])
        );
        assert_eq!(s1[0].tau_sq, r(1, 2));
        assert_eq!(s1[1].tau_sq, r(1, 3));

        let s2 = step(&s1, &g);
        for s in &s2 {
            assert_eq!(s.beta, CoefVector::uniform(3));
            assert_eq!(s.dim, 3);
        }
    }

    #[test]
    fn run_clique_eight() {
        let trace = run_family(Family::Clique, 8);
        assert_eq!(trace.t_last_change, 1);
        assert_eq!(trace.t_all_equal, Some(1));
        assert_eq!(trace.rounds.len(), 3); // initial, change, stationary
    }

    #[test]
    fn run_star_six() {
        let trace = run_family(Family::Star, 6);
        assert_eq!(trace.t_last_change, 2);
        for a in &trace.final_round().agents {
            assert_eq!(a.beta, CoefVector::uniform(6));
            assert_eq!(a.tau_sq, r(1, 6));
        }
    }

    #[test]
    fn run_four_cycle() {
        let trace = run_family(Family::Cycle, 4);
        assert_eq!(trace.t_last_change, 2);
        for a in &trace.final_round().agents {
            assert_eq!(a.beta, CoefVector::uniform(4));
        }
        // round 1 is the three-signal window around each node
        assert_eq!(
            trace.rounds[1].agents[0].beta,
            CoefVector::new(vec![r(1, 3), r(1, 3), r(0, 1), r(1, 3)])
        );
    }

    #[test]
    fn run_single_node() {
        let trace = run_family(Family::Path, 1);
        assert_eq!(trace.t_last_change, 0);
        assert_eq!(trace.t_all_equal, Some(0));
        assert_eq!(trace.rounds.len(), 2);
    }

    #[test]
    fn stagnation_holds_on_small_runs() {
        for (family, n) in [
            (Family::Path, 3),
            (Family::Cycle, 4),
            (Family::Clique, 8),
            (Family::Star, 6),
        ] {
            let g = make_family(family, n, None, 0).unwrap();
            let trace = run::<Rational>(&g, default_max_rounds(&g)).unwrap();
            assert_eq!(check_stagnation_lemma(&trace, &g), Ok(()));
        }
    }

    #[test]
    fn stagnation_flags_a_forged_trace() {
        // Freeze agent 0 at e_0 for the whole run while agent 1 never agrees:
        // fabricate the trace from a P2 run by repeating round 0.
        let g = make_family(Family::Path, 2, None, 0).unwrap();
        let real = run::<Rational>(&g, default_max_rounds(&g)).unwrap();
        let mut forged = real.clone();
        let round0 = forged.rounds[0].clone();
        forged.rounds = (0..=6)
            .map(|t| {
                let mut r = round0.clone();
                r.t = t;
                r
            })
            .collect();
        forged.change_log = vec![Vec::new(); 7];
        // d = 1, so 2 rounds of stagnation demand agreement from round start+1 on
        let violation = check_stagnation_lemma(&forged, &g).unwrap_err();
        assert_eq!(violation.agent, 0);
        assert_eq!(violation.window_start, 0);
    }

    #[test]
    fn rejects_undersized_round_budget() {
        let g = make_family(Family::Path, 4, None, 0).unwrap();
        // bound is 2*4*3 = 24
        match run::<Rational>(&g, 5) {
            Err(EngineError::InvalidMaxRounds { given, required }) => {
                assert_eq!(given, 5);
                assert_eq!(required, 24);
            }
            other => panic!("expected InvalidMaxRounds, got {other:?}"),
        }
    }

    #[test]
    fn trace_round_trips_through_json() {
        let trace = run_family(Family::Star, 5);
        let doc: TraceDoc = serde_json::from_str(&trace.to_json_string()).unwrap();
        let back = SimulationTrace::<Rational>::from_doc(&doc).unwrap();
        assert_eq!(back, trace);
        // loading under the wrong backend is refused
        assert!(matches!(
            SimulationTrace::<f64>::from_doc(&doc),
            Err(TraceError::BackendMismatch { .. })
        ));
    }

    #[test]
    fn float_and_rational_traces_agree_here() {
        let g = make_family(Family::Cycle, 6, None, 0).unwrap();
        let exact = run::<Rational>(&g, default_max_rounds(&g)).unwrap();
        let float = run::<f64>(&g, default_max_rounds(&g)).unwrap();
        assert_eq!(exact.t_last_change, float.t_last_change);
        for (re, rf) in exact.rounds.iter().zip(&float.rounds) {
            for (ae, af) in re.agents.iter().zip(&rf.agents) {
                assert!(ae.beta.to_float().max_abs_diff_f64(&af.beta) < 1e-12);
            }
        }
    }

    #[test]
    fn identical_runs_serialize_identically() {
        let g = make_family(Family::RegularRandom, 12, Some(3), 7).unwrap();
        let a = run::<f64>(&g, default_max_rounds(&g)).unwrap();
        let b = run::<f64>(&g, default_max_rounds(&g)).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
    }
}
