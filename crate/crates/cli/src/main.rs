use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ftlab_core::bench::{exit, run, Experiment, ExperimentConfig, RunOptions};
use ftlab_core::presets::list_presets;

/// Reproducible experiments for the stochastic transport equation.
#[derive(Debug, Parser)]
#[command(name = "ftlab", version, about)]
struct Cli {
    /// fbm-validate, flow-roundtrip, weak-residual, malliavin-bounds,
    /// density-envelope, explicit-density; or `presets` to print the catalog.
    experiment: String,

    /// TOML config; keys missing from it take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set density.H=0.75`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.experiment == "presets" {
        println!("{}", serde_json::to_string_pretty(&list_presets()).expect("catalog serializes"));
        return code(exit::PASS);
    }
    let Some(experiment) = Experiment::parse(&cli.experiment) else {
        let known: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
        eprintln!("ftlab: unknown experiment `{}` (known: {}, presets)", cli.experiment, known.join(", "));
        return code(exit::CONFIG);
    };
    if cli.threads == Some(0) {
        eprintln!("ftlab: --threads must be positive");
        return code(exit::CONFIG);
    }
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("ftlab: cannot read {}: {e}", path.display());
                return code(exit::CONFIG);
            }
        },
        None => None,
    };
    let config = match ExperimentConfig::load(experiment, text.as_deref(), &cli.set) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ftlab: {e}");
            return code(exit::CONFIG);
        }
    };
    let outcome = match run(&config, &RunOptions { out: cli.out, threads: cli.threads }) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("ftlab: cannot write artifacts: {e}");
            return code(exit::NUMERIC);
        }
    };
    let m = &outcome.manifest;
    for c in &m.checks {
        println!("{} {} = {:.6e} (needs {} {:e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.relation, c.threshold);
    }
    if let Some(err) = &m.error {
        eprintln!("ftlab: {} error: {}", err.kind, err.message);
    }
    println!("{}", outcome.dir.join("manifest.json").display());
    code(outcome.exit_code)
}
