//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs the experiments through the same runner as the CLI.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ftlab_core::bench::{run, Experiment, ExperimentConfig, RunManifest, RunOptions};
use ftlab_core::density::{verify_gf_bounds, DensityConfig};
use ftlab_core::presets;

struct Suite {
    out: tempfile::TempDir,
    failures: Vec<u32>,
}

impl Suite {
    fn run(&self, experiment: Experiment, overrides: &[&str]) -> (RunManifest, f64, std::path::PathBuf) {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        let cfg = ExperimentConfig::load(experiment, None, &o).expect("valid acceptance config");
        let start = Instant::now();
        let res = run(&cfg, &RunOptions { out: Some(self.out.path().into()), threads: None }).expect("artifacts written");
        (res.manifest, start.elapsed().as_secs_f64(), res.dir)
    }

    fn report(&mut self, id: u32, name: &str, passed: bool, detail: String) {
        println!("{} [{id:>2}] {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        if !passed {
            self.failures.push(id);
        }
    }
}

/// All checks whose names start with one of `prefixes` passed (and at least
/// one such check exists); returns the verdict and a summary.
fn checks(m: &RunManifest, prefixes: &[&str]) -> (bool, String) {
    let selected: Vec<_> = m.checks.iter().filter(|c| prefixes.iter().any(|p| c.name.starts_with(p))).collect();
    let ok = m.error.is_none() && !selected.is_empty() && selected.iter().all(|c| c.passed);
    let mut text: Vec<String> = selected.iter().map(|c| format!("{}={:.3e}", c.name, c.value)).collect();
    if let Some(e) = &m.error {
        text.push(format!("error: {}", e.message));
    }
    (ok, text.join(", "))
}

fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("run dir") {
        let path = entry.expect("entry").path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name == "timing.json" {
            continue;
        }
        files.insert(name, std::fs::read(&path).expect("artifact"));
    }
    files
}

fn main() {
    let mut s = Suite { out: tempfile::tempdir().expect("tempdir"), failures: Vec::new() };

    // 1. fBm exactness
    let (m, secs, _) = s.run(Experiment::FbmValidate, &[]);
    let (ok, detail) = checks(&m, &["gram_within_3se", "increment_identity"]);
    s.report(1, "fBm Gram matrix within 3 SE, increment identity", ok && secs <= 60.0, format!("{detail}; {secs:.1} s"));

    // 2. flow round trip and composition
    let (m, secs, _) = s.run(Experiment::FlowRoundtrip, &[]);
    let (ok, detail) = checks(&m, &["roundtrip", "composition"]);
    s.report(2, "flow round trip and composition", ok && secs <= 30.0, format!("{detail}; {secs:.1} s"));

    // 3 and 7. zero-drift exact law and envelope collapse
    let (m05, secs05, _) = s.run(Experiment::DensityEnvelope, &["density.n_triples=0"]);
    let (m075, secs075, _) = s.run(Experiment::DensityEnvelope, &["density.H=0.75", "density.n_triples=0", "density.bootstrap_replicates=0"]);
    let (ok_a, d_a) = checks(&m05, &["variance_within_3se", "kde_sup_distance_exact_law"]);
    let (ok_b, d_b) = checks(&m075, &["variance_within_3se"]);
    let secs = secs05 + secs075;
    s.report(3, "zero-drift exact law", ok_a && ok_b && secs <= 120.0, format!("H0.5: {d_a}; H0.75: {d_b}; {secs:.1} s"));

    // 4 and 5. Malliavin bounds and inner-product identities
    let (m, _, _) = s.run(Experiment::MalliavinBounds, &[]);
    let (ok, detail) = checks(&m, &["derivative_bound_violations"]);
    let pairs: u64 = m.results["per_hurst"].as_object().map_or(0, |o| o.values().filter_map(|v| v["pairs"].as_u64()).sum());
    s.report(4, "Malliavin derivative within [-e, -1/e]", ok && pairs >= 1000, format!("{detail}; {pairs} pairs"));
    let (ok, detail) = checks(&m, &["indicator_identity", "cross_zero_drift"]);
    s.report(5, "inner-product identities", ok, detail);

    // 6. almost-sure bounds on ⟨Du, D̃u⟩
    let drift = presets::drift("sin", 1, 0.0).unwrap();
    let u0 = presets::initial_datum("arctan-shift").unwrap();
    let mut ok6 = true;
    let mut d6 = Vec::new();
    for h in [0.5, 0.75] {
        let cfg = DensityConfig { hurst: h, n_triples: 1000, ..DensityConfig::default() };
        match verify_gf_bounds(&drift, &u0, &cfg) {
            Ok(r) => {
                ok6 &= r.fraction == 1.0 && r.n == 1000;
                d6.push(format!("H{h}: {}/{} in [{:.4}, {:.4}], observed [{:.4}, {:.4}]", r.inside, r.n, r.gamma_low_sq, r.gamma_high_sq, r.min, r.max));
            }
            Err(e) => {
                ok6 = false;
                d6.push(format!("H{h}: {e}"));
            }
        }
    }
    s.report(6, "almost-sure bound fraction = 1", ok6, d6.join("; "));

    let (ok, detail) = checks(&m05, &["envelope_collapse"]);
    s.report(7, "envelope collapse to the exact Gaussian", ok, detail);

    // 8. envelope containment
    let (m, secs, _) = s.run(Experiment::DensityEnvelope, &["density.drift=sin", "density.u0=arctan-shift", "density.n_triples=0"]);
    let (ok, detail) = checks(&m, &["envelope_containment_violations"]);
    let central = m.results.get("central_points").and_then(|v| v.as_u64()).unwrap_or(0);
    s.report(8, "envelope containment", ok && central > 0 && secs <= 600.0, format!("{detail} over {central} central points; {secs:.1} s"));

    // 9. explicit divergence-free density
    let (m, _, _) = s.run(Experiment::ExplicitDensity, &[]);
    let (ok, detail) = checks(&m, &["formula_vs_analytic", "formula_vs_kde"]);
    s.report(9, "explicit divergence-free density", ok, detail);

    // 10. weak-form residual
    let (m, _, _) = s.run(Experiment::WeakResidual, &[]);
    let (ok, detail) = checks(&m, &["weak_rms_decreasing", "weak_final_relative", "stratonovich_identity"]);
    s.report(10, "weak-form residual and Stratonovich identity", ok, detail);

    // 11. determinism: every experiment twice, different pool sizes
    let light: [(Experiment, &[&str]); 6] = [
        (Experiment::FbmValidate, &["fbm.n_paths=2000"]),
        (Experiment::FlowRoundtrip, &[]),
        (Experiment::WeakResidual, &["weak.n_paths=2", "weak.levels=[256, 512]", "weak.n_x=513", "weak.stratonovich_steps=4096"]),
        (Experiment::MalliavinBounds, &["malliavin.n_pairs=200"]),
        (Experiment::DensityEnvelope, &["density.drift=sin", "density.u0=arctan-shift", "density.n_samples=5000", "density.n_triples=50"]),
        (Experiment::ExplicitDensity, &["explicit.n_samples=5000"]),
    ];
    let mut ok11 = true;
    let mut d11 = Vec::new();
    for (e, o) in light {
        let o: Vec<String> = o.iter().map(|v| v.to_string()).collect();
        let cfg = ExperimentConfig::load(e, None, &o).expect("valid config");
        let a = run(&cfg, &RunOptions { out: Some(s.out.path().into()), threads: Some(1) }).expect("run");
        let b = run(&cfg, &RunOptions { out: Some(s.out.path().into()), threads: Some(3) }).expect("run");
        let (fa, fb) = (artifact_bytes(&a.dir), artifact_bytes(&b.dir));
        let same = fa == fb && fa.contains_key("manifest.json") && a.manifest.error.is_none();
        ok11 &= same;
        d11.push(format!("{e}: {} files {}", fa.len(), if same { "identical" } else { "DIFFER" }));
    }
    s.report(11, "bit-identical artifacts across runs", ok11, d11.join(", "));

    if s.failures.is_empty() {
        println!("acceptance: all 11 criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", s.failures);
        std::process::exit(1);
    }
}
