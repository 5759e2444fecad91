use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_rank::sim::{DEFAULT_OUTLIER_FRACTIONS, DEFAULT_SAMPLE_SIZES};
use robust_rank::theory::DEFAULT_BUDGET;
use robust_rank::Method;

mod commands;

/// Robust ranking from paired comparisons with outlier detection.
#[derive(Debug, Parser)]
#[command(name = "robust-rank", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Least-squares scores on all comparisons.
    Rank(RankArgs),
    /// Detect outlying comparisons and rank on the rest.
    Detect(DetectArgs),
    /// Run the planted-outlier simulation grid.
    Simulate(SimulateArgs),
    /// Compute recovery-condition constants by exhaustive enumeration.
    Check(CheckArgs),
    /// Time methods on a simulation grid read from a JSON spec.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct RankArgs {
    /// Comparison CSV with header `rater,item_i,item_j,value`.
    #[arg(long)]
    input: PathBuf,
    /// JSON report path.
    #[arg(long)]
    output: PathBuf,
    /// Optional preference-count matrix CSV.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    method: Method,
    /// Outlier budget; required for iht and ilts, or lasso without --lambda.
    #[arg(long)]
    k: Option<usize>,
    /// Fixed LASSO penalty.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.75)]
    beta1: f64,
    #[arg(long, default_value_t = 1.03)]
    beta2: f64,
    /// iHT stopping tolerance relative to the data norm.
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Successive-pair correction after aLTS.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    correction: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Exit successfully even if the solver did not converge.
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SAMPLE_SIZES)]
    sn: Vec<usize>,
    /// Outlier fractions, as `0.05` or `5%`.
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction, default_values_t = DEFAULT_OUTLIER_FRACTIONS)]
    op: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    value_scale: f64,
    #[arg(long, default_value_t = 0.75)]
    beta1: f64,
    #[arg(long, default_value_t = 1.03)]
    beta2: f64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "ROBUST_RANK_JOBS", default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("graph").required(true).args(["input", "complete_graph"])))]
struct CheckArgs {
    /// Comparison CSV whose graph is checked.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Complete graph on this many items.
    #[arg(long)]
    complete_graph: Option<usize>,
    /// Copies of each edge of the complete graph.
    #[arg(long, default_value_t = 1, requires = "complete_graph")]
    copies: usize,
    #[arg(long)]
    k: usize,
    /// JSON with `s_star`, `e_star` and optional `n_star`.
    #[arg(long)]
    with_ground_truth: Option<PathBuf>,
    /// Maximum number of subsets to enumerate.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    /// Also run the brute-force equivalence check on the input data.
    #[arg(long, requires = "input")]
    equivalence: bool,
    /// Write the JSON here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = "ROBUST_RANK_JOBS", default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// JSON experiment spec; omitted fields take the simulate defaults.
    #[arg(long)]
    spec: PathBuf,
    /// Timing CSV path; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = "ROBUST_RANK_JOBS", default_value_t = 0)]
    jobs: usize,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (number, scale) = match t.strip_suffix('%') {
        Some(p) => (p, 100.0),
        None => (t, 1.0),
    };
    number
        .trim()
        .parse::<f64>()
        .map(|v| v / scale)
        .map_err(|_| format!("`{s}` is not a fraction"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rank(a) => commands::rank(a),
        Command::Detect(a) => commands::detect(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Check(a) => commands::check(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
