//! Command-line front end for the simulator.
//!
//! Subcommands: `simulate` (one run, trace JSON plus a summary), `sweep`
//! (seeded family grids to CSV), `verify` (replay a trace through the
//! invariant suite and the realized-signal oracle), and `graph-gen`
//! (emit edge-list files).
//!
//! Exit codes: 0 when everything requested passed, 2 on usage or input
//! errors, 1 when an invariant or bound was violated. Human-readable
//! summaries go to stdout; artifacts are only written to explicit paths.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand};

use netbayes::checks::check_trace;
use netbayes::engine::{default_max_rounds, run, EngineError, SimulationTrace, TraceDoc};
use netbayes::graph::{make_family, Family, Graph};
use netbayes::harness::{self, SweepConfig};
use netbayes::oracle::{cross_validate, sample_world, CROSS_VALIDATE_TOL};
use netbayes::scalar::{Backend, Rational, Scalar};

#[derive(Parser)]
#[command(name = "netbayes", version, about = "Belief-averaging simulator on networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its convergence summary
    Simulate(SimulateArgs),
    /// Run a seeded family grid and write one CSV row per run
    Sweep(SweepArgs),
    /// Replay a trace file through every invariant and the oracle
    Verify(VerifyArgs),
    /// Generate a graph and write it as an edge-list file
    GraphGen(GraphGenArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["family", "graph"])))]
struct SimulateArgs {
    /// Graph family to generate
    #[arg(long, value_parser = Family::from_str, requires = "n")]
    family: Option<Family>,
    /// Node count for --family
    #[arg(long)]
    n: Option<usize>,
    /// Degree (regular_random only)
    #[arg(long)]
    degree: Option<usize>,
    /// Read the graph from an edge-list file instead
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Arithmetic backend
    #[arg(long, value_parser = Backend::from_str, default_value = "rational")]
    backend: Backend,
    /// Seed for random graph generation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Round budget (default: the guaranteed bound 2·n·d plus one)
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Write the full trace as JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = Family::from_str)]
    family: Family,
    /// Comma-separated node counts, e.g. --n 12,24,48
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Degree (regular_random only)
    #[arg(long)]
    degree: Option<usize>,
    /// Number of seeded repetitions per cell
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First seed; cells use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = Backend::from_str, default_value = "float")]
    backend: Backend,
    /// CSV output path (a .config.json sidecar lands next to it)
    #[arg(long)]
    out: PathBuf,
    /// Suppress the timestamp header so reruns are byte-identical
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Trace JSON produced by `simulate --out`
    #[arg(long)]
    trace: PathBuf,
    /// Seed for the realized world the oracle checks against
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GraphGenArgs {
    #[arg(long, value_parser = Family::from_str)]
    family: Family,
    #[arg(long)]
    n: usize,
    /// Degree (regular_random only)
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge-list output path
    #[arg(long)]
    out: PathBuf,
}

/// Failures split by exit code: bad input versus violated guarantees.
enum Failure {
    Usage(String),
    Violation(String),
}

impl Failure {
    fn usage(err: impl std::fmt::Display) -> Self {
        Failure::Usage(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Verify(args) => verify(args),
        Command::GraphGen(args) => graph_gen(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_graph(args: &SimulateArgs) -> Result<Graph, Failure> {
    if let Some(path) = &args.graph {
        return Graph::read_edge_list(path).map_err(Failure::usage);
    }
    let family = args.family.expect("clap enforces the source group");
    let n = args.n.expect("clap enforces --n with --family");
    make_family(family, n, args.degree, args.seed).map_err(Failure::usage)
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let graph = load_graph(&args)?;
    let max_rounds = args.max_rounds.unwrap_or_else(|| default_max_rounds(&graph));
    match args.backend {
        Backend::Rational => simulate_typed::<Rational>(&graph, max_rounds, args.out.as_deref()),
        Backend::Float => simulate_typed::<f64>(&graph, max_rounds, args.out.as_deref()),
    }
}

fn simulate_typed<S: Scalar>(
    graph: &Graph,
    max_rounds: usize,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let metrics = graph.metrics();
    let bound = 2 * graph.n() * metrics.diameter;
    match run::<S>(graph, max_rounds) {
        Ok(trace) => {
            if let Some(path) = out {
                trace.write_json(path).map_err(Failure::usage)?;
            }
            print_summary(&trace, metrics.diameter, bound);
            Ok(())
        }
        Err(EngineError::BoundExceeded { trace, max_rounds }) => {
            if let Some(path) = out {
                trace.write_json(path).map_err(Failure::usage)?;
            }
            print_summary(&trace, metrics.diameter, bound);
            Err(Failure::Violation(format!(
                "no fixed point within {max_rounds} rounds (bound 2·n·d = {bound})"
            )))
        }
        Err(e @ EngineError::InvalidMaxRounds { .. }) => Err(Failure::usage(e)),
    }
}

fn print_summary<S: Scalar>(trace: &SimulationTrace<S>, diameter: usize, bound: usize) {
    let final_tau = &trace.final_round().agents[0].tau_sq;
    println!(
        "n={} d={diameter} backend={}",
        trace.n(),
        S::BACKEND.as_str()
    );
    match trace.t_all_equal {
        Some(t) => println!(
            "t_last_change={} t_all_equal={t} bound_2nd={bound}",
            trace.t_last_change
        ),
        None => println!(
            "t_last_change={} t_all_equal=NONE bound_2nd={bound}",
            trace.t_last_change
        ),
    }
    println!("final tau_sq={final_tau}");
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let config = SweepConfig {
        family: args.family,
        n_values: args.n.clone(),
        degree: args.degree,
        seeds: (args.seed..args.seed + args.seeds).collect(),
        backend: args.backend,
    };
    let rows = harness::sweep(&config).map_err(Failure::usage)?;
    harness::write_outputs(&rows, &config, &args.out, args.deterministic)
        .map_err(Failure::usage)?;
    let violations = rows.iter().filter(|r| !r.invariants_ok).count();
    println!(
        "{} rows written to {} ({} violation{})",
        rows.len(),
        args.out.display(),
        violations,
        if violations == 1 { "" } else { "s" }
    );
    if let Ok(report) = harness::conjecture_report(&rows) {
        print!("{report}");
    }
    if violations > 0 {
        return Err(Failure::Violation(format!(
            "{violations} run(s) violated invariants; see {}",
            args.out.display()
        )));
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let doc = TraceDoc::read_json(&args.trace).map_err(Failure::usage)?;
    match doc.backend {
        Backend::Rational => verify_typed::<Rational>(&doc, args.seed),
        Backend::Float => verify_typed::<f64>(&doc, args.seed),
    }
}

fn verify_typed<S: Scalar>(doc: &TraceDoc, seed: u64) -> Result<(), Failure> {
    let trace = SimulationTrace::<S>::from_doc(doc).map_err(Failure::usage)?;
    let report = check_trace(&trace);
    let mut failed = 0usize;
    for result in &report.results {
        let tag = if result.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<26} {}", result.name, result.detail);
        if !result.passed {
            failed += 1;
        }
    }

    let world = sample_world(1.0, 1.0, trace.n(), seed).map_err(Failure::usage)?;
    match cross_validate(&trace, &world) {
        Ok(cv) => {
            let ok = cv.within(CROSS_VALIDATE_TOL);
            println!(
                "{} {:<26} worst deviation {:.3e} (agent {}, round {})",
                if ok { "PASS" } else { "FAIL" },
                "oracle_equivalence",
                cv.max_deviation,
                cv.worst_agent,
                cv.worst_round
            );
            if !ok {
                failed += 1;
            }
            let mean_ok = cv.final_mean_deviation <= 1e-9;
            println!(
                "{} {:<26} final announcement vs signal average {:.3e}",
                if mean_ok { "PASS" } else { "FAIL" },
                "final_mean_vs_average",
                cv.final_mean_deviation
            );
            if !mean_ok {
                failed += 1;
            }
        }
        Err(e) => {
            println!("FAIL {:<26} {e}", "oracle_equivalence");
            failed += 1;
        }
    }

    if failed > 0 {
        Err(Failure::Violation(format!("{failed} check(s) failed")))
    } else {
        Ok(())
    }
}

fn graph_gen(args: GraphGenArgs) -> Result<(), Failure> {
    let graph = make_family(args.family, args.n, args.degree, args.seed).map_err(Failure::usage)?;
    graph.write_edge_list(&args.out).map_err(Failure::usage)?;
    let metrics = graph.metrics();
    println!(
        "family={} n={} m={} d={} min_degree={} -> {}",
        args.family,
        graph.n(),
        graph.edge_count(),
        metrics.diameter,
        metrics.min_degree,
        args.out.display()
    );
    Ok(())
}
