use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::PathBuf;

use ccgeo_cli::blocks::{run_config, RunOptions};
use ccgeo_cli::config::{parse_config, CommandKind, ExperimentBlock, DEFAULT_SEED};
use ccgeo_cli::CliError;

/// Config-driven experiments on Carnot-Caratheodory geometry: distance
/// fields, ball volumes, commutator bases and convexity checks, with
/// JSON and CSV reports.
#[derive(Parser)]
#[command(name = "ccgeo", version)]
struct Cli {
    /// Path to the JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's out_dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Stop scheduling blocks after the first failure or error
    #[arg(long, global = true)]
    fail_fast: bool,

    /// Run independent blocks concurrently; reports are joined in config
    /// order, so outputs match the sequential run
    #[arg(long, global = true)]
    parallel: bool,

    /// Replace every block's seed with this one
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

/// Parameters for a single ad hoc block run from the command line.
#[derive(Args)]
struct BlockArgs {
    /// Block parameters as a JSON object
    #[arg(long, default_value = "{}")]
    params: String,

    /// Seed for this block
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment block listed in the config
    Run,
    /// Smallest commutator length whose brackets span at a point
    HormanderCheck(BlockArgs),
    /// Enumerate the commutator basis with degrees and source words
    Basis(BlockArgs),
    /// Determinant weights and the selected multi-index at a point
    Lambda(BlockArgs),
    /// Approximate exponential programs and their endpoints
    ApproxExp(BlockArgs),
    /// Build a distance field and dump the reached cells
    DistanceField(BlockArgs),
    /// Monte Carlo ball volumes over a radius list
    Ball(BlockArgs),
    /// Volume ratio of the doubled ball
    Doubling(BlockArgs),
    /// Two-sided inclusion between balls and exponential images
    Sandwich(BlockArgs),
    /// Sampled convexity test along horizontal flows
    Convexity(BlockArgs),
    /// Doubling lower bound for a function at a point
    LowerBound(BlockArgs),
    /// Difference-quotient constant over point pairs
    Lipschitz(BlockArgs),
    /// sup/mean scans, gradient and enlarged-ball ratio families
    Estimates(BlockArgs),
    /// Sign check for the sub-Laplacian surrogate at a point
    Sublaplacian(BlockArgs),
}

impl Command {
    fn single_block(self) -> Option<(CommandKind, BlockArgs)> {
        match self {
            Command::Run => None,
            Command::HormanderCheck(a) => Some((CommandKind::HormanderCheck, a)),
            Command::Basis(a) => Some((CommandKind::Basis, a)),
            Command::Lambda(a) => Some((CommandKind::Lambda, a)),
            Command::ApproxExp(a) => Some((CommandKind::ApproxExp, a)),
            Command::DistanceField(a) => Some((CommandKind::DistanceField, a)),
            Command::Ball(a) => Some((CommandKind::Ball, a)),
            Command::Doubling(a) => Some((CommandKind::Doubling, a)),
            Command::Sandwich(a) => Some((CommandKind::Sandwich, a)),
            Command::Convexity(a) => Some((CommandKind::Convexity, a)),
            Command::LowerBound(a) => Some((CommandKind::LowerBound, a)),
            Command::Lipschitz(a) => Some((CommandKind::Lipschitz, a)),
            Command::Estimates(a) => Some((CommandKind::Estimates, a)),
            Command::Sublaplacian(a) => Some((CommandKind::Sublaplacian, a)),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) => 2,
                CliError::Runtime(_) | CliError::Io(_) => 3,
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let text = fs::read_to_string(&config_path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", config_path.display())))?;
    let mut cfg = parse_config(&text)?;

    if let Some((kind, args)) = cli.command.single_block() {
        let parameters: serde_json::Value = serde_json::from_str(&args.params)
            .map_err(|e| CliError::Config(format!("--params: {e}")))?;
        if !parameters.is_object() {
            return Err(CliError::Config("--params must be a JSON object".into()));
        }
        cfg.experiments = vec![ExperimentBlock {
            command: kind,
            parameters,
            seed: Some(args.seed.unwrap_or(DEFAULT_SEED)),
        }];
    }

    let out_dir = cli
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ccgeo-out"));
    let opts = RunOptions {
        out_dir,
        fail_fast: cli.fail_fast,
        parallel: cli.parallel,
        seed_override: cli.seed_override,
        config_text: text,
    };
    let outcome = run_config(&cfg, &opts)?;

    for rec in &outcome.manifest.blocks {
        let note = match (&rec.error, &rec.report_path) {
            (Some(err), _) => format!(" ({err})"),
            (None, Some(path)) => format!(" ({path})"),
            (None, None) => String::new(),
        };
        println!("block {:02} {}: {}{}", rec.index, rec.command, rec.status, note);
    }
    println!("manifest: {}", outcome.manifest_path.display());
    Ok(outcome.exit)
}
