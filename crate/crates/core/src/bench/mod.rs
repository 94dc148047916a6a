//! Reproducible experiment runner.
//!
//! A run validates its [`ExperimentConfig`], executes one experiment, and
//! writes `manifest.json` plus CSV artifacts into
//! `<output_dir>/<experiment>-<UTC timestamp>/`. Everything in the manifest
//! and the CSVs is a deterministic function of the config and the build;
//! wall-clock time goes to a separate `timing.json`.

mod config;
mod experiments;
mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{
    ConfigError, DensitySection, Experiment, ExperimentConfig, ExplicitSection, FbmSection, FlowSection, MalliavinSection,
    WeakSection,
};
pub use manifest::{CheckResult, RunError, RunManifest, BUILD_ID};

use crate::io::write_atomic;

/// Process exit codes of the CLI.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
}

/// What one experiment produced before it is written out.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub checks: Vec<CheckResult>,
    pub results: serde_json::Map<String, serde_json::Value>,
    /// `(file name, contents)`.
    pub artifacts: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl Outcome {
    /// Records `value ≤ threshold`.
    pub fn check_le(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        self.checks.push(CheckResult { name: name.into(), passed: value <= threshold, value, threshold, relation: "<=".into() });
    }

    /// Records `value < threshold`.
    pub fn check_lt(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        self.checks.push(CheckResult { name: name.into(), passed: value < threshold, value, threshold, relation: "<".into() });
    }

    /// Records `value ≥ threshold`.
    pub fn check_ge(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        self.checks.push(CheckResult { name: name.into(), passed: value >= threshold, value, threshold, relation: ">=".into() });
    }

    pub fn result(&mut self, key: &str, value: impl serde::Serialize) {
        self.results.insert(key.into(), serde_json::to_value(value).expect("serializable result"));
    }

    pub fn artifact(&mut self, name: impl Into<String>, contents: String) {
        self.artifacts.push((name.into(), contents));
    }
}

/// Where and how to run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `config.output_dir`.
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// A finished run: the manifest, the directory it lives in and the exit code.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub dir: PathBuf,
    pub exit_code: i32,
}

/// Runs one experiment and writes its artifacts. Only I/O failures on the
/// output directory are returned as errors; configuration and numeric
/// failures are recorded in the manifest.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> std::io::Result<RunOutcome> {
    let base = opts.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let dir = fresh_run_dir(&base, config.experiment)?;
    let started = Instant::now();

    let outcome = match config.validate() {
        Err(e) => Err(RunError::config(&e)),
        Ok(()) => {
            let exec = || experiments::execute(config).map_err(|e| RunError::numeric(&e));
            match opts.threads {
                Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(exec),
                    Err(e) => Err(RunError { kind: "config".into(), key: Some("threads".into()), message: e.to_string() }),
                },
                None => exec(),
            }
        }
    };
    let elapsed = started.elapsed().as_secs_f64();

    let mut manifest = RunManifest::new(config);
    let exit_code = match outcome {
        Ok(out) => {
            for (name, contents) in &out.artifacts {
                write_atomic(&dir.join(name), contents.as_bytes())?;
                manifest.artifacts.push(name.clone());
            }
            manifest.passed = out.checks.iter().all(|c| c.passed);
            manifest.checks = out.checks;
            manifest.results = out.results;
            manifest.notes = out.notes;
            if manifest.passed {
                exit::PASS
            } else {
                exit::CHECK_FAILED
            }
        }
        Err(err) => {
            let code = if err.kind == "config" { exit::CONFIG } else { exit::NUMERIC };
            manifest.error = Some(err);
            code
        }
    };
    write_atomic(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    let timing = serde_json::json!({ "wall_clock_seconds": elapsed, "threads": opts.threads.unwrap_or_else(rayon::current_num_threads) });
    write_atomic(&dir.join("timing.json"), format!("{timing:#}\n").as_bytes())?;
    Ok(RunOutcome { manifest, dir, exit_code })
}

/// `<base>/<experiment>-<UTC timestamp>`, suffixed `-1`, `-2`, … if taken.
fn fresh_run_dir(base: &Path, experiment: Experiment) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(base)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let stem = format!("{experiment}-{stamp}");
    for i in 0u32.. {
        let name = if i == 0 { stem.clone() } else { format!("{stem}-{i}") };
        let dir = base.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("directory suffixes exhausted")
}
