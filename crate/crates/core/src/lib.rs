//! Round-based belief averaging on networks.
//!
//! A population of agents sits on a connected undirected graph. Each agent
//! holds an independent unit-variance Gaussian measurement of a common
//! scalar, and every round all agents simultaneously announce the mean of
//! their current belief, observe their neighbors' announcements, and update
//! to the minimum-variance unbiased combination of everything they have
//! seen. Because every announcement is a linear combination of the original
//! measurements, the whole process can be simulated symbolically on
//! coefficient vectors, exactly (arbitrary-precision fractions) or in
//! floating point.
//!
//! The crate is organized around that idea:
//!
//! * [`graph`]: graph families, validation, metrics, edge-list files.
//! * [`scalar`]: the exact-rational and float arithmetic backends.
//! * [`algebra`]: coefficient vectors, Gram matrices, basis selection,
//!   the fusion weight solve.
//! * [`engine`]: the synchronous round protocol, traces, convergence
//!   detection, and the stagnation check.
//! * [`oracle`]: realized-signal ground truth, sampling worlds and computing
//!   posterior means by a separate numerical route to cross-check the
//!   symbolic engine.
//! * [`checks`]: the per-trace invariant suite.
//! * [`harness`]: seeded batch sweeps over graph families with CSV output
//!   and convergence-time summaries.

pub mod algebra;
pub mod checks;
pub mod engine;
pub mod graph;
pub mod harness;
pub mod oracle;
pub mod scalar;

pub use algebra::{bayes_update, combine, gram, select_basis, solve_gamma};
pub use algebra::{CoefVector, Estimate, GammaWeights, GramMatrix};
pub use engine::{
    check_stagnation_lemma, default_max_rounds, init, run, step, AgentState, SimulationTrace,
};
pub use graph::{make_family, Family, Graph, GraphMetrics};
pub use scalar::{Backend, Rational, Scalar};
