//! `cpcm` command-line front end.
//!
//! Exit status: 0 on success, 2 when the input or flags violate a
//! precondition, 3 on an internal numerical failure.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cpcm", version, about = "Causal discovery with conditionally parametric causal models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide the causal direction between two columns.
    Discover(DiscoverArgs),
    /// Score every DAG over 2 to 5 columns and report the best.
    Search(SearchArgs),
    /// Generate a labelled dataset (CSV plus JSON sidecar).
    Simulate(SimulateArgs),
    /// Run one of the simulation studies and report accuracies.
    Benchmark(BenchmarkArgs),
    /// Invariant causal prediction over environments.
    Icp(IcpArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of permutations per independence test.
    #[arg(long)]
    n_perm: Option<usize>,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args, Debug)]
pub struct DiscoverArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    x1: String,
    #[arg(long)]
    x2: String,
    /// Family of x1 given x2.
    #[arg(long)]
    family1: String,
    /// Family of x2 given x1.
    #[arg(long)]
    family2: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report the both/none-plausible outcome as is instead of resolving it
    /// by the lower score.
    #[arg(long)]
    no_fallback: bool,
    /// Directory receiving the fitted models as JSON.
    #[arg(long)]
    dump_model: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated column names; every column except `env` by default.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    /// One family per column, or a single family for all of them.
    #[arg(long, value_delimiter = ',', required = true)]
    families: Vec<String>,
    /// Penalty per edge.
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// pareto-fig2, pareto-nonid, gaussian-nonid, gp, exp-robustness,
    /// linear-env or cpcm.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    n: usize,
    #[arg(long, required = true)]
    seed: Option<u64>,
    /// CSV destination; the sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the run report (stdout by default).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Tail exponent of the pareto-fig2 scenario.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    alpha_param: f64,
    /// Comma-separated constants: a,b,d for pareto-nonid or a,c,d,e,alpha,beta
    /// for gaussian-nonid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    params: Vec<f64>,
    /// Benchmark kind of the gp scenario (ANMg, ANMs, MNs, LSg, LSs).
    #[arg(long, default_value = "LSg")]
    kind: String,
    /// Rate function of the exp-robustness scenario.
    #[arg(long, default_value = "linear")]
    rate: String,
    /// Mean shift of the linear-env scenario.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    shift: f64,
    /// JSON model description for the cpcm scenario.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// gaussian, robustness or pareto-fig2.
    #[arg(long)]
    suite: String,
    /// Replications per scenario.
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, required = true)]
    seed: Option<u64>,
    /// Subset of benchmark kinds (gaussian suite).
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<String>,
    /// Rate functions (robustness suite).
    #[arg(long, value_delimiter = ',')]
    rates: Vec<String>,
    /// Candidate families (robustness suite).
    #[arg(long, value_delimiter = ',')]
    families: Vec<String>,
    /// Tail exponents (pareto-fig2 suite).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    alphas: Vec<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
pub struct IcpArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    target: String,
    /// Column holding integer environment labels.
    #[arg(long, default_value = "env")]
    env_column: String,
    /// Candidate covariates; every other column by default.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("CPCM_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| cpcm::Error::Precondition(format!("CPCM_THREADS must be a positive integer, got '{v}'")))?;
        cpcm::exec::init_threads(n).map_err(|e| cpcm::Error::Precondition(format!("cannot start {n} workers: {e}")))?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cpcm::Error>() {
        Some(cpcm::Error::Numerical(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = std::time::Instant::now();
    let result = init_threads().and_then(|_| match cli.command {
        Command::Discover(a) => commands::discover(a),
        Command::Search(a) => commands::search(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Icp(a) => commands::icp(a),
    });
    match result {
        Ok(()) => {
            eprintln!("done in {:.2}s", started.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
