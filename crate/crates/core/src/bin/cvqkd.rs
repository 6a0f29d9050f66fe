use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cvqkd::estimation::SampleSet;
use cvqkd::scan::{emit, run_estimation, run_keyrate, run_scan, run_simulation, OutputFormat, RunConfig, RunRecord};
use cvqkd::Error;

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "Finite-size key rates and protocol simulation for discrete-modulated CV-QKD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate over the configured sweep grid
    Scan,
    /// Monte Carlo protocol rounds; writes records to --out and a JSON summary to stdout
    Simulate,
    /// Channel parameters and photon-number moments from heterodyne records
    Estimate {
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Key rate at a single operating point, optionally from measured records
    Keyrate {
        #[arg(long)]
        samples: Option<PathBuf>,
    },
}

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = &cli.format {
        cfg.output.format = f.parse()?;
    }
    if let Some(o) = &cli.out {
        cfg.output.path = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_samples(path: Option<&Path>, cfg: &RunConfig) -> Result<Option<SampleSet>, Error> {
    let Some(path) = path.or(cfg.samples_path.as_deref()) else { return Ok(None) };
    let states = cfg.protocol.size();
    SampleSet::load(path, states).map(Some)
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn finish(cfg: &RunConfig, records: &[RunRecord], format: OutputFormat) -> Result<u8, Error> {
    emit(cfg, records, cfg.output.path.as_deref(), format)?;
    for r in records.iter().filter(|r| !r.ok()) {
        eprintln!("point {} failed: {}", r.index, r.error.as_deref().unwrap_or("unknown"));
    }
    Ok(if records.iter().all(RunRecord::ok) { 0 } else { EXIT_PARTIAL })
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Scan => finish(&cfg, &run_scan(&cfg)?, cfg.output.format),
        Command::Keyrate { samples } => {
            let samples = load_samples(samples.as_deref(), &cfg)?;
            finish(&cfg, &run_keyrate(&cfg, samples.as_ref())?, cfg.output.format)
        }
        Command::Simulate => {
            let (out, summary) = run_simulation(&cfg)?;
            if let Some(p) = &cfg.output.path {
                out.samples.save(p)?;
            }
            write_json(&summary, None)?;
            Ok(if summary.energy.pass && summary.acceptance.pass { 0 } else { EXIT_PARTIAL })
        }
        Command::Estimate { samples } => {
            let samples = load_samples(samples.as_deref(), &cfg)?.ok_or_else(|| Error::Config("estimate needs --samples or samples_path".into()))?;
            write_json(&run_estimation(&cfg, &samples)?, cfg.output.path.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}
