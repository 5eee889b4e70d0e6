//! Realized-signal ground truth, independent of the symbolic engine.
//!
//! The engine never looks at signal values; coefficients are all it needs.
//! This module closes the loop: it samples a concrete world (a true scalar
//! and realized measurements), computes each agent's posterior mean by
//! direct Bayesian conditioning under a proper prior with very large
//! variance, and compares against `beta · signals` from the engine. The two
//! paths share no solver code, so agreement is meaningful evidence.
//!
//! The proper prior `Normal(0, prior_var)` stands in for the flat prior,
//! which cannot be conditioned on directly; its influence shows up as a
//! ridge term `1/prior_var` in the normal equations, and the flat-prior
//! limit is itself tested (see the crate's test suites).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::algebra::CoefVector;
use crate::engine::SimulationTrace;
use crate::scalar::Scalar;

/// Default stand-in variance for the flat prior.
pub const DEFAULT_PRIOR_VAR: f64 = 1e8;

/// Agreement tolerance between the engine's announcement and the oracle
/// posterior mean.
pub const CROSS_VALIDATE_TOL: f64 = 1e-6;

/// Relative squared-residual threshold for the oracle's own memory
/// reduction. An observation this close to the span of the others shifts
/// the posterior mean by well under [`CROSS_VALIDATE_TOL`], and discarding
/// it keeps the elimination comfortably conditioned.
const REDUCE_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("joint covariance is numerically singular")]
    Singular,
}

/// A sampled state of the world: the true scalar, the noise level, and one
/// realized measurement per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedWorld {
    pub s_true: f64,
    pub sigma: f64,
    pub signals: Vec<f64>,
    pub seed: u64,
}

impl RealizedWorld {
    pub fn n(&self) -> usize {
        self.signals.len()
    }

    pub fn mean_signal(&self) -> f64 {
        self.signals.iter().sum::<f64>() / self.signals.len() as f64
    }
}

/// Draws `n` independent `Normal(s_true, sigma)` measurements.
///
/// Generator: ChaCha20 keyed by `seed` (a documented, counter-based stream),
/// uniforms taken as the top 53 bits of each 64-bit output, mapped through
/// the trigonometric Box–Muller transform. Any implementation of the same
/// recipe reproduces the stream.
pub fn sample_world(
    s_true: f64,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<RealizedWorld, OracleError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(OracleError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if n == 0 {
        return Err(OracleError::InvalidParameter("n must be at least 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut signals = Vec::with_capacity(n);
    while signals.len() < n {
        // u1 in (0, 1] keeps the log finite; u2 in [0, 1)
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * 2f64.powi(-53);
        let u2 = (rng.next_u64() >> 11) as f64 * 2f64.powi(-53);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        signals.push(s_true + sigma * radius * angle.cos());
        if signals.len() < n {
            signals.push(s_true + sigma * radius * angle.sin());
        }
    }
    Ok(RealizedWorld {
        s_true,
        sigma,
        signals,
        seed,
    })
}

/// Posterior mean `E[S | r]` for the observations `r_i = memory_i · signals`
/// under the prior `Normal(0, prior_var)`.
///
/// The memory vectors define jointly Gaussian observations with covariance
/// `prior_var·11' + sigma²·Gram` and mean `1·S`; conditioning on their
/// realized values is solved in the equivalent regularized-normal-equation
/// form (ridge `1/prior_var`), as one symmetric augmented system
///
/// ```text
/// [ sigma²·Gram   1      ] [u]   [r]
/// [ 1'           -1/v0   ] [s] = [0]
/// ```
///
/// by Gaussian elimination with partial pivoting. Nothing here touches the
/// engine's weight solve, and the prior term enters exactly instead of
/// being rounded into covariance entries of order `prior_var`.
pub fn posterior_mean_direct<S: Scalar>(
    memory: &[CoefVector<S>],
    world: &RealizedWorld,
    prior_var: f64,
) -> Result<f64, OracleError> {
    if !prior_var.is_finite() || prior_var <= 0.0 {
        return Err(OracleError::InvalidParameter(format!(
            "prior_var must be positive and finite, got {prior_var}"
        )));
    }
    if memory.is_empty() {
        return Err(OracleError::InvalidParameter(
            "memory must contain at least one estimator".into(),
        ));
    }
    let n = world.n();
    if memory.iter().any(|m| m.len() != n) {
        return Err(OracleError::DimensionMismatch(format!(
            "memory vectors must have length n={n}"
        )));
    }

    let k = memory.len();
    let vectors: Vec<Vec<f64>> = memory
        .iter()
        .map(|m| m.coeffs().iter().map(Scalar::to_f64).collect())
        .collect();
    let noise_var = world.sigma * world.sigma;

    // augmented (k+1) x (k+1) system
    let dim = k + 1;
    let mut a = vec![vec![0.0; dim]; dim];
    for i in 0..k {
        for j in 0..=i {
            let cov = noise_var * dot(&vectors[i], &vectors[j]);
            a[i][j] = cov;
            a[j][i] = cov;
        }
        a[i][k] = 1.0;
        a[k][i] = 1.0;
    }
    a[k][k] = -1.0 / prior_var;

    let mut rhs: Vec<f64> = vectors.iter().map(|v| dot(v, &world.signals)).collect();
    rhs.push(0.0);

    let solution = solve_gepp(a, rhs)?;
    Ok(solution[k])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Drops observations that are (nearly) linear combinations of earlier
/// ones, by modified Gram-Schmidt. This is the oracle's own reduction; it
/// shares no code with the engine's basis selection.
fn reduce_memory(memory: &mut Vec<CoefVector<f64>>) {
    let mut ortho: Vec<(Vec<f64>, f64)> = Vec::new();
    memory.retain(|v| {
        let norm_sq: f64 = v.coeffs().iter().map(|x| x * x).sum();
        let mut residual: Vec<f64> = v.coeffs().to_vec();
        for (basis, basis_norm_sq) in &ortho {
            let proj: f64 = residual.iter().zip(basis).map(|(r, b)| r * b).sum();
            let coef = proj / basis_norm_sq;
            for (r, b) in residual.iter_mut().zip(basis) {
                *r -= coef * b;
            }
        }
        let residual_sq: f64 = residual.iter().map(|r| r * r).sum();
        if residual_sq > REDUCE_TOL * norm_sq {
            ortho.push((residual, residual_sq));
            true
        } else {
            false
        }
    });
}

/// Gaussian elimination with partial pivoting.
fn solve_gepp(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, OracleError> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1.0);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pivot_row][col].abs() <= scale * 1e-13 {
            return Err(OracleError::Singular);
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let (pivot_rows, rest) = a.split_at_mut(col + 1);
        let pivot = &pivot_rows[col];
        for (offset, row) in rest.iter_mut().enumerate() {
            let factor = row[col] / pivot[col];
            if factor == 0.0 {
                continue;
            }
            for (x, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                *x -= factor * p;
            }
            b[col + 1 + offset] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row][j] * x[j];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Outcome of replaying a trace against one realized world: the worst
/// disagreement between engine announcements and oracle posterior means,
/// where it occurred, and how far the final announcement sits from the
/// plain average of the signals.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossValidation {
    pub max_deviation: f64,
    pub worst_agent: usize,
    pub worst_round: usize,
    pub final_mean_deviation: f64,
    pub prior_var: f64,
    pub comparisons: usize,
}

impl CrossValidation {
    pub fn within(&self, tol: f64) -> bool {
        self.max_deviation <= tol
    }
}

/// Recomputes every agent's posterior mean at every round of `trace` from
/// the realized signals and compares it with the engine's announcement
/// `beta · signals`.
///
/// Each agent's observation history is reconstructed from the trace itself
/// (its own signal plus every neighbor announcement up to the previous
/// round), reduced to an independent subset, and handed to
/// [`posterior_mean_direct`] with the default prior variance.
pub fn cross_validate<S: Scalar>(
    trace: &SimulationTrace<S>,
    world: &RealizedWorld,
) -> Result<CrossValidation, OracleError> {
    let n = trace.n();
    if world.n() != n {
        return Err(OracleError::DimensionMismatch(format!(
            "world has {} signals for a trace over n={n}",
            world.n()
        )));
    }

    let mut max_deviation = 0.0f64;
    let mut worst_agent = 0;
    let mut worst_round = 0;
    let mut comparisons = 0;

    for agent in 0..n {
        // reduced observation history of this agent, in float coordinates
        let mut memory: Vec<CoefVector<f64>> = vec![CoefVector::basis(n, agent)];
        for (t, round) in trace.rounds.iter().enumerate() {
            if t > 0 {
                for &u in trace.graph.neighbors(agent) {
                    memory.push(trace.rounds[t - 1].agents[u].beta.to_float());
                }
                reduce_memory(&mut memory);
            }
            let oracle_mean = posterior_mean_direct(&memory, world, DEFAULT_PRIOR_VAR)?;
            let announced = round.agents[agent].beta.to_float();
            let engine_mean = dot(announced.coeffs(), &world.signals);
            let deviation = (oracle_mean - engine_mean).abs();
            comparisons += 1;
            if deviation > max_deviation {
                max_deviation = deviation;
                worst_agent = agent;
                worst_round = t;
            }
        }
    }

    let mean = world.mean_signal();
    let final_mean_deviation = trace
        .final_round()
        .agents
        .iter()
        .map(|a| {
            let beta = a.beta.to_float();
            (dot(beta.coeffs(), &world.signals) - mean).abs()
        })
        .fold(0.0, f64::max);

    Ok(CrossValidation {
        max_deviation,
        worst_agent,
        worst_round,
        final_mean_deviation,
        prior_var: DEFAULT_PRIOR_VAR,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{default_max_rounds, run};
    use crate::graph::{make_family, Family};
    use crate::scalar::Rational;

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_world(0.0, 1.0, 3, 1).unwrap();
        let b = sample_world(0.0, 1.0, 3, 1).unwrap();
        assert_eq!(a, b);
        let c = sample_world(0.0, 1.0, 3, 2).unwrap();
        assert_ne!(a.signals, c.signals);
    }

    #[test]
    fn sample_mean_concentrates() {
        let world = sample_world(5.0, 1.0, 1_000_000, 123).unwrap();
        let mean = world.mean_signal();
        assert!(
            (mean - 5.0).abs() < 0.01,
            "sample mean {mean} strays from 5"
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            sample_world(0.0, 0.0, 3, 1),
            Err(OracleError::InvalidParameter(_))
        ));
        assert!(matches!(
            sample_world(0.0, -1.0, 3, 1),
            Err(OracleError::InvalidParameter(_))
        ));
        assert!(matches!(
            sample_world(0.0, 1.0, 0, 1),
            Err(OracleError::InvalidParameter(_))
        ));
    }

    #[test]
    fn single_observation_posterior() {
        let world = RealizedWorld {
            s_true: 2.0,
            sigma: 1.0,
            signals: vec![2.0],
            seed: 0,
        };
        let memory = [CoefVector::<f64>::basis(1, 0)];
        let mean = posterior_mean_direct(&memory, &world, 1e8).unwrap();
        assert!((mean - 2.0).abs() < 1e-6);
    }

    #[test]
    fn two_observations_average() {
        let world = RealizedWorld {
            s_true: 0.0,
            sigma: 1.0,
            signals: vec![1.0, 3.0],
            seed: 0,
        };
        let memory = [CoefVector::<f64>::basis(2, 0), CoefVector::basis(2, 1)];
        let mean = posterior_mean_direct(&memory, &world, 1e8).unwrap();
        assert!((mean - 2.0).abs() < 1e-6);
    }

    #[test]
    fn full_span_memory_gives_signal_average() {
        let world = sample_world(1.5, 1.0, 3, 9).unwrap();
        let memory = [
            CoefVector::<f64>::basis(3, 0),
            CoefVector::basis(3, 1),
            CoefVector::uniform(3),
        ];
        let mean = posterior_mean_direct(&memory, &world, 1e8).unwrap();
        assert!((mean - world.mean_signal()).abs() < 1e-6);
    }

    #[test]
    fn dependent_memory_is_singular() {
        let world = RealizedWorld {
            s_true: 0.0,
            sigma: 1.0,
            signals: vec![1.0, 2.0],
            seed: 0,
        };
        let memory = [CoefVector::<f64>::basis(2, 0), CoefVector::basis(2, 0)];
        assert_eq!(
            posterior_mean_direct(&memory, &world, 1e8),
            Err(OracleError::Singular)
        );
    }

    #[test]
    fn flat_prior_limit_brackets_the_engine() {
        let g = make_family(Family::Path, 3, None, 0).unwrap();
        let trace = run::<Rational>(&g, default_max_rounds(&g)).unwrap();
        let world = sample_world(2.0, 1.0, 3, 5).unwrap();
        for round in &trace.rounds {
            for a in &round.agents {
                // reconstruct a's memory lazily: its current beta spans its
                // announcement, which is enough for the limit comparison
                let memory = [a.beta.to_float()];
                let lo = posterior_mean_direct(&memory, &world, 1e6).unwrap();
                let hi = posterior_mean_direct(&memory, &world, 1e10).unwrap();
                assert!((lo - hi).abs() < 1e-4 * (1.0 + world.s_true.abs()));
                let beta = a.beta.to_float();
                let engine = dot(beta.coeffs(), &world.signals);
                assert!(
                    (engine - hi).abs() <= (hi - lo).abs() + 1e-9,
                    "engine value {engine} outside bracket [{lo}, {hi}]"
                );
            }
        }
    }

    #[test]
    fn cross_validate_small_graphs() {
        for (family, n) in [(Family::Clique, 4), (Family::Path, 3)] {
            let g = make_family(family, n, None, 0).unwrap();
            let trace = run::<Rational>(&g, default_max_rounds(&g)).unwrap();
            for seed in 0..5 {
                let world = sample_world(1.0, 1.0, n, seed).unwrap();
                let cv = cross_validate(&trace, &world).unwrap();
                assert!(
                    cv.within(CROSS_VALIDATE_TOL),
                    "{family} n={n} seed={seed}: deviation {}",
                    cv.max_deviation
                );
                assert!(cv.final_mean_deviation < 1e-9);
            }
        }
    }

    #[test]
    fn cross_validate_rejects_size_mismatch() {
        let g = make_family(Family::Path, 3, None, 0).unwrap();
        let trace = run::<Rational>(&g, default_max_rounds(&g)).unwrap();
        let world = sample_world(0.0, 1.0, 4, 0).unwrap();
        assert!(matches!(
            cross_validate(&trace, &world),
            Err(OracleError::DimensionMismatch(_))
        ));
    }
}
