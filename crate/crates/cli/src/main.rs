use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use renewal_cli::{run_with_workers, write_bundle, CliError, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "renewal", version, about = "Renewal experiments for perturbed random walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate first passages at level `a`.
    Simulate(Common),
    /// Estimate the renewal constants from the backward functional.
    Constants(Common),
    /// Renewal measure of a window against its limit.
    VerifyThm1(Common),
    /// Joint limit law at the passage time.
    VerifyThm3(Common),
    /// Expected passage time against its second-order expansion.
    VerifyThm4(Common),
    /// Window and tail sums for the passage time.
    DiagLemma1(Common),
    /// Error of the windowed quadratic approximation.
    DiagLemma3(Common),
    /// Fixed-width confidence interval trial.
    ExampleFwci(Common),
    /// Repeated likelihood-ratio test trial.
    ExampleRst(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `reps`.
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory; defaults to `output` from the config, then `out/<experiment>`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        use ExperimentKind as K;
        match self {
            Self::Simulate(c) => (K::Simulate, c),
            Self::Constants(c) => (K::Constants, c),
            Self::VerifyThm1(c) => (K::VerifyThm1, c),
            Self::VerifyThm3(c) => (K::VerifyThm3, c),
            Self::VerifyThm4(c) => (K::VerifyThm4, c),
            Self::DiagLemma1(c) => (K::DiagLemma1, c),
            Self::DiagLemma3(c) => (K::DiagLemma3, c),
            Self::ExampleFwci(c) => (K::ExampleFwci, c),
            Self::ExampleRst(c) => (K::ExampleRst, c),
        }
    }
}

fn execute(kind: ExperimentKind, args: Common) -> Result<i32, CliError> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(k) = config.kind {
        if k != kind {
            return Err(CliError::Usage(format!(
                "config is for `{}` but the subcommand is `{}`",
                k.name(),
                kind.name()
            )));
        }
    }
    config.kind = Some(kind);
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    let bundle = run_with_workers(&config, args.workers)?;
    let dir = args
        .out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    write_bundle(&bundle, &dir)?;
    let m = &bundle.manifest;
    let verdict = match m.pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "done",
    };
    println!("{} {verdict} in {:.2}s -> {}", m.experiment, m.wall_time_s, dir.display());
    for flag in &m.flags {
        eprintln!("warning: {flag}");
    }
    Ok(bundle.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    let code = match execute(kind, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
