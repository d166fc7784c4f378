use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hybrid_screen::experiment::{
    emit_outputs, export_log, replay, run_strategy, sweep_strategies, world_seed, write_runs,
    ConfigFile, RunOutcome, SimWorld, Strategy, SweepSpec,
};
use hybrid_screen::io::{read_gold, read_votes, write_decisions, write_gold, write_votes};

const SEED_ENV: &str = "HYBRID_SCREEN_SEED";

#[derive(Parser)]
#[command(
    name = "hybrid-screen",
    version,
    about = "Hybrid crowd and machine item screening"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy across the correlation grid and write aggregate tables.
    Sweep(SweepArgs),
    /// Run one strategy on one simulated world and export its inputs for replay.
    Run(RunArgs),
    /// Run the hybrid pipeline over recorded vote logs.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct Common {
    /// Flat JSON config; command-line flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (falls back to the config, then $HYBRID_SCREEN_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    iterations: Option<usize>,
    /// Comma-separated latent correlations, e.g. 0,0.3,0.7
    #[arg(long, value_delimiter = ',')]
    correlations: Option<Vec<f64>>,
    /// Restrict the sweep to one strategy (machine, crowd or hybrid).
    #[arg(long)]
    strategy: Option<String>,
    /// Also write a matplotlib script that renders the loss-vs-price figure.
    #[arg(long)]
    plot_script: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Latent correlation of the world; only the first value is used.
    #[arg(long, value_delimiter = ',')]
    correlations: Option<Vec<f64>>,
    #[arg(long, default_value = "hybrid")]
    strategy: String,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    common: Common,
    /// Gold labels of the items to screen (used for scoring and expert answers).
    #[arg(long)]
    gold: PathBuf,
    /// Gold labels of the test items used to screen workers and classifiers.
    #[arg(long)]
    test_gold: PathBuf,
    /// Vote logs, concatenated in the order given.
    #[arg(long, required = true, num_args = 1..)]
    votes: Vec<PathBuf>,
}

fn load_spec(common: &Common) -> Result<SweepSpec> {
    let mut spec = SweepSpec::default();
    let mut seed_from_config = false;
    if let Some(path) = &common.config {
        let cfg = ConfigFile::load(path)?;
        seed_from_config = cfg.seed.is_some();
        cfg.apply(&mut spec);
    }
    if let Some(seed) = common.seed {
        spec.world.seed = seed;
    } else if !seed_from_config {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            spec.world.seed = raw
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={raw:?} is not an unsigned integer"))?;
        }
    }
    Ok(spec)
}

/// Fails before anything is written if a target exists and `force` is off.
fn guard(dir: &Path, names: &[&str], force: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            bail!(
                "refusing to overwrite existing file {} (pass --force)",
                p.display()
            );
        }
    }
    Ok(paths)
}

fn print_summary(outcome: &RunOutcome) {
    let m = &outcome.metrics;
    println!(
        "{}: loss/item {:.4}  price/item {:.3}  fe {:.4}  fi {:.4}  crowd votes {}  expert items {}",
        m.strategy,
        m.loss_per_item,
        m.price_per_item,
        m.fe_rate,
        m.fi_rate,
        m.crowd_votes,
        m.expert_items
    );
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut spec = load_spec(&args.common)?;
    if let Some(n) = args.iterations {
        spec.iterations = n;
    }
    if let Some(c) = args.correlations {
        spec.correlations = c;
    }
    let strategies = match &args.strategy {
        Some(s) => vec![s.parse::<Strategy>()?],
        None => Strategy::ALL.to_vec(),
    };
    let result = sweep_strategies(&spec, &strategies)?;
    emit_outputs(
        &result,
        &args.common.out,
        args.common.force,
        args.plot_script,
    )?;
    for s in &result.savings {
        println!(
            "rho {:<4} crowd {:.3}  hybrid {:.3}  savings {:.1}%",
            s.correlation,
            s.crowd_price_per_item,
            s.hybrid_price_per_item,
            100.0 * s.savings
        );
    }
    println!("wrote {}", args.common.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut spec = load_spec(&args.common)?;
    if let Some(c) = args.correlations {
        spec.correlations = c;
    }
    spec.validate()?;
    let strategy: Strategy = args.strategy.parse()?;
    let rho = spec.correlations[0];
    let paths = guard(
        &args.common.out,
        &[
            "gold.csv",
            "test_gold.csv",
            "votes.csv",
            "decisions.csv",
            "metrics.csv",
        ],
        args.common.force,
    )?;
    let world = SimWorld::generate(&spec, rho, world_seed(spec.seed(), 0, 0))?;
    let outcome = run_strategy(strategy, &world, &spec.strategy_config, 0)?;
    write_gold(&paths[0], &world.gold)?;
    write_gold(&paths[1], &world.test_gold)?;
    write_votes(&paths[2], &export_log(&world, &outcome))?;
    write_decisions(&paths[3], &outcome.decisions)?;
    write_runs(&paths[4], std::slice::from_ref(&outcome.metrics), true)?;
    print_summary(&outcome);
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let spec = load_spec(&args.common)?;
    let gold = read_gold(&args.gold)?;
    let test_gold = read_gold(&args.test_gold)?;
    let mut votes = Vec::new();
    for path in &args.votes {
        votes.extend(read_votes(path)?);
    }
    let paths = guard(
        &args.common.out,
        &["decisions.csv", "metrics.csv"],
        args.common.force,
    )?;
    let outcome = replay(&votes, &gold, &test_gold, &spec.strategy_config)?;
    write_decisions(&paths[0], &outcome.decisions)?;
    write_runs(&paths[1], std::slice::from_ref(&outcome.metrics), true)?;
    print_summary(&outcome);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => cmd_sweep(a),
        Command::Run(a) => cmd_run(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
