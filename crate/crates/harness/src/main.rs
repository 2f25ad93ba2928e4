use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ldp_harness::{run_and_write, Experiment, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "ldp", version, about = "Large-deviation experiments on truncated stochastic PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories of a model.
    Simulate(RunArgs),
    /// Monte Carlo large-deviation slope against the minimal action.
    LdpSlope(RunArgs),
    /// Minimum action paths, refinement and gradient checks.
    Map(RunArgs),
    /// Log-moment semigroup against its control limit, and the duality bracket.
    SemigroupCompare(RunArgs),
    /// Convergence of the resolvent product.
    ResolventIterate(RunArgs),
    /// Exceedance frequencies of a free-energy level.
    Containment(RunArgs),
    /// Property suites of the semigroup-adapted distance.
    TataruSuite(RunArgs),
    /// Dissipativity and spectral structure checks.
    DissipativitySuite(RunArgs),
    /// Generator bound on the log free energy.
    Lyapunov(RunArgs),
    /// Print the default configuration of an experiment.
    Defaults {
        /// Experiment kind, e.g. `ldp-slope`.
        kind: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration; the canned default is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output`, else `out/<kind>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn kind_of(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::LdpSlope(_) => "ldp-slope",
        Command::Map(_) => "map",
        Command::SemigroupCompare(_) => "semigroup-compare",
        Command::ResolventIterate(_) => "resolvent-iterate",
        Command::Containment(_) => "containment",
        Command::TataruSuite(_) => "tataru-suite",
        Command::DissipativitySuite(_) => "dissipativity-suite",
        Command::Lyapunov(_) => "lyapunov",
        Command::Defaults { .. } => "defaults",
    }
}

fn execute(kind: &str, args: &RunArgs) -> Result<bool, HarnessError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_for(kind).expect("every subcommand has a default"),
    };
    if cfg.experiment.kind() != kind {
        return Err(HarnessError::Config(format!(
            "experiment: config describes {:?} but the subcommand is {kind:?}",
            cfg.experiment.kind()
        )));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(kind));
    let start = Instant::now();
    let outcome = run_and_write(&cfg, &out)?;
    eprintln!(
        "{kind}: {} in {:.1}s, config {} -> {}",
        if outcome.pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        &cfg.hash()[..12],
        out.display()
    );
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = kind_of(&cli.command);
    let result = match &cli.command {
        Command::Defaults { kind } => match ExperimentConfig::default_for(kind) {
            Some(c) => {
                println!("{}", serde_json::to_string_pretty(&c).expect("config serializes"));
                Ok(true)
            }
            None => Err(HarnessError::Config(format!(
                "experiment: unknown kind {kind:?}; expected one of {}",
                Experiment::KINDS.join(", ")
            ))),
        },
        Command::Simulate(a)
        | Command::LdpSlope(a)
        | Command::Map(a)
        | Command::SemigroupCompare(a)
        | Command::ResolventIterate(a)
        | Command::Containment(a)
        | Command::TataruSuite(a)
        | Command::DissipativitySuite(a)
        | Command::Lyapunov(a) => execute(kind, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
