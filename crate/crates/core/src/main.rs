use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stochflow::app::{exit_code, inspect, run, run_experiment, Experiment};
use stochflow::config::parse_config;
use stochflow::Error;

/// Stochastic Lagrangian Navier-Stokes solver on the periodic torus.
#[derive(Parser)]
#[command(name = "stochflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve with the configured solver.
    Run(ConfigArgs),
    /// Run a scripted experiment: inviscid-limit, contraction, equivalence or samples.
    Experiment {
        name: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the header and norms of a snapshot file.
    Inspect { snapshot: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides as `--key=value` or `key=value`, applied after the file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|a| {
            let a = a.trim_start_matches("--");
            a.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("override {a:?} is not key=value")))
        })
        .collect()
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("STOCHFLOW_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| Error::Config(format!("STOCHFLOW_THREADS = {v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Run(args) => {
            let cfg = parse_config(args.config.as_deref(), &overrides(&args.overrides)?)?;
            let out = run(&cfg)?;
            print!("{}", out.summary);
        }
        Command::Experiment { name, config } => {
            let which: Experiment = name.parse()?;
            let cfg = parse_config(config.config.as_deref(), &overrides(&config.overrides)?)?;
            let (path, summary) = run_experiment(&cfg, which)?;
            print!("{summary}");
            println!("wrote {}", path.display());
        }
        Command::Inspect { snapshot } => print!("{}", inspect(&snapshot)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::RemapRequired { .. }) {
                eprintln!("hint: set solver.windowed = true or reduce solver.t_final");
            }
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
