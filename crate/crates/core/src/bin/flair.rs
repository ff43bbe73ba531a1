use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flair::harness::{load_config, round_channels, run_experiment, write_channels_csv, ExperimentConfig};
use flair::trainer::Scenario;

#[derive(Parser)]
#[command(name = "flair", version, about = "RIS-assisted over-the-air federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario x seed sweep and write traces.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to these scenarios (repeatable).
        #[arg(long = "scenario")]
        scenarios: Vec<Scenario>,
    },
    /// Print one channel realization as CSV.
    Channels {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Training round whose channels to print.
        #[arg(long, default_value_t = 1)]
        round: usize,
    },
    /// Check a config file and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    load_config(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) | Err(code) => code,
    }
}

fn run(command: Command) -> Result<ExitCode, ExitCode> {
    match command {
        Command::Run {
            config,
            out,
            seed,
            scenarios,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if !scenarios.is_empty() {
                cfg.scenarios = scenarios;
            }
            cfg.output_dir = out.clone();
            let summary = run_experiment(&cfg, &out).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(1)
            })?;
            for c in summary.cells.iter().filter(|c| !c.succeeded()) {
                eprintln!(
                    "cell {} seed {} failed: {}",
                    c.scenario,
                    c.seed,
                    c.error.as_deref().unwrap_or("")
                );
            }
            println!("{}", out.join(flair::harness::TRACES_FILE).display());
            Ok(ExitCode::from(summary.exit_code() as u8))
        }
        Command::Channels { config, seed, round } => {
            let cfg = load(&config)?;
            let fail = |e: flair::harness::HarnessError| {
                eprintln!("error: {e}");
                ExitCode::from(1)
            };
            let ch = round_channels(&cfg, seed, round).map_err(fail)?;
            write_channels_csv(&ch, io::stdout().lock()).map_err(fail)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            print!("{}", cfg.to_toml_string());
            Ok(ExitCode::SUCCESS)
        }
    }
}
