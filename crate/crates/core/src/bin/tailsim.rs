use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tailsim::harness::{self, presets, ExecuteOptions, ExperimentConfig, HarnessError, Scale};

#[derive(Parser)]
#[command(name = "tailsim", version, about = "Leaf-spine fabric simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the base point of an experiment for each seed.
    Run(RunArgs),
    /// Run the full cartesian sweep of an experiment.
    Sweep(RunArgs),
    /// Compare result directories against the first one.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in experiment presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment instead of a file.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_parser = ["desk", "paper"])]
    scale: Option<String>,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => harness::load_config(path)?,
        (None, Some(name)) => {
            let text = presets::preset(name).ok_or_else(|| HarnessError::Run(format!("unknown preset '{name}'")))?;
            harness::parse_config(text)?
        }
        (None, None) => unreachable!("clap requires one of --config/--preset"),
    };
    if let Some(s) = &args.scale {
        let scale: Scale = s.parse().map_err(HarnessError::Run)?;
        cfg.topology.apply_scale(scale);
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn run(args: &RunArgs, sweep: bool) -> Result<(), HarnessError> {
    let cfg = load(args)?;
    let outcome = harness::execute(&cfg, &args.out_dir, &ExecuteOptions { jobs: args.jobs, sweep })?;
    eprintln!("{} runs written to {}", outcome.rows.len(), outcome.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a, false),
        Command::Sweep(a) => run(a, true),
        Command::Compare { dirs, out } => harness::compare(dirs).and_then(|c| match out {
            Some(p) => std::fs::write(p, c.to_csv()).map_err(|source| HarnessError::Io { path: p.clone(), source }),
            None => {
                print!("{}", c.to_csv());
                Ok(())
            }
        }),
        Command::Presets => {
            for (name, text) in presets::PRESETS {
                let describes = harness::parse_config(text).map(|c| c.describes).unwrap_or_default();
                println!("{name:<18} {describes}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tailsim: {e}");
            ExitCode::FAILURE
        }
    }
}
