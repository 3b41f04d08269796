use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use airfl::experiment::{run_experiment, Experiment, ExperimentConfig, FULL_SAMPLES};

/// Over-the-air federated learning simulator with pairwise-cancellable
/// artificial noise. Runs one experiment and writes its CSV.
#[derive(Parser, Debug)]
#[command(name = "airfl", version)]
struct Cli {
    /// fig3, fig4, fig5, train or noise-check.
    experiment: String,

    /// JSON config file. Every key is optional; unknown keys are rejected.
    #[arg(long)]
    config: PathBuf,

    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo samples or aggregation rounds, overriding the config.
    #[arg(long, conflicts_with = "full")]
    samples: Option<usize>,

    /// Use 10^6 samples.
    #[arg(long)]
    full: bool,

    /// CSV destination. Defaults to the config's `output`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> airfl::Result<()> {
    let experiment: Experiment = cli.experiment.parse()?;
    let mut cfg = ExperimentConfig::load(&cli.config, Some(experiment))?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(n) = cli.samples.or(cli.full.then_some(FULL_SAMPLES)) {
        cfg = cfg.with_samples(n)?;
    }
    let table = run_experiment(&cfg)?;
    match cli.out.or(cfg.output) {
        Some(path) => table.write_csv_file(&path),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            table.write_csv(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("airfl: {e}");
            ExitCode::FAILURE
        }
    }
}
