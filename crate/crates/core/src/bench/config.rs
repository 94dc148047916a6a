//! Experiment configuration: a TOML document with one table per module plus
//! `--set key=value` overrides, validated with key paths in every message.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::fbm::Method;
use crate::presets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FbmValidate,
    FlowRoundtrip,
    WeakResidual,
    MalliavinBounds,
    DensityEnvelope,
    ExplicitDensity,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::FbmValidate,
        Experiment::FlowRoundtrip,
        Experiment::WeakResidual,
        Experiment::MalliavinBounds,
        Experiment::DensityEnvelope,
        Experiment::ExplicitDensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::FbmValidate => "fbm-validate",
            Experiment::FlowRoundtrip => "flow-roundtrip",
            Experiment::WeakResidual => "weak-residual",
            Experiment::MalliavinBounds => "malliavin-bounds",
            Experiment::DensityEnvelope => "density-envelope",
            Experiment::ExplicitDensity => "explicit-density",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A configuration problem, tied to the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

type Check = std::result::Result<(), ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub fbm: FbmSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub weak: WeakSection,
    #[serde(default)]
    pub malliavin: MalliavinSection,
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub explicit: ExplicitSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbmSection {
    #[serde(rename = "H")]
    pub hurst: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub method: Method,
}

impl Default for FbmSection {
    fn default() -> Self {
        Self { hurst: vec![0.3, 0.5, 0.75, 0.9], horizon: 1.0, n_steps: 256, n_paths: 10_000, method: Method::Cholesky }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub drift: String,
    pub lambda: f64,
    #[serde(rename = "H")]
    pub hurst: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub rtol: f64,
    pub substeps: usize,
    pub max_refinements: u32,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            drift: "sin".into(),
            lambda: 1.0,
            hurst: vec![0.5, 0.75],
            horizon: 1.0,
            n_steps: 4096,
            n_points: 16,
            x_min: -3.0,
            x_max: 3.0,
            rtol: crate::tolerances::FLOW_RTOL,
            substeps: 1,
            max_refinements: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakSection {
    pub drift: String,
    pub lambda: f64,
    pub u0: String,
    #[serde(rename = "H")]
    pub hurst: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub phi_center: f64,
    pub phi_radius: f64,
    /// Grid sizes, each dividing the finest one.
    pub levels: Vec<usize>,
    pub n_paths: usize,
    /// ε in units of Δt.
    pub epsilon_steps: usize,
    pub n_x: usize,
    pub padding_factor: f64,
    pub stratonovich_steps: usize,
    pub stratonovich_paths: usize,
}

impl Default for WeakSection {
    fn default() -> Self {
        Self {
            drift: "sin".into(),
            lambda: 1.0,
            u0: "bump".into(),
            hurst: 0.75,
            horizon: 1.0,
            phi_center: 0.0,
            phi_radius: 1.0,
            levels: vec![512, 1024, 2048, 4096],
            n_paths: 16,
            epsilon_steps: 4,
            n_x: 2049,
            padding_factor: 4.0,
            stratonovich_steps: 16384,
            stratonovich_paths: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MalliavinSection {
    pub drift: String,
    pub lambda: f64,
    #[serde(rename = "H")]
    pub hurst: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    /// (path, α, x) triples per Hurst index.
    pub n_pairs: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// Hurst indices of the indicator identities.
    pub inner_hurst: Vec<f64>,
    pub inner_n_steps: usize,
    /// Evaluation time of the zero-drift cross inner product.
    pub cross_t: f64,
}

impl Default for MalliavinSection {
    fn default() -> Self {
        Self {
            drift: "sin".into(),
            lambda: 1.0,
            hurst: vec![0.5, 0.75],
            horizon: 1.0,
            n_steps: 256,
            n_pairs: 1000,
            x_min: -3.0,
            x_max: 3.0,
            inner_hurst: vec![0.55, 0.75, 0.9],
            inner_n_steps: 1024,
            cross_t: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub drift: String,
    pub lambda: f64,
    pub u0: String,
    #[serde(rename = "H")]
    pub hurst: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub t: f64,
    pub x: f64,
    pub n_steps: usize,
    pub n_samples: usize,
    /// Overrides the top-level seed.
    pub seed: Option<u64>,
    pub n_triples: usize,
    pub bootstrap_replicates: usize,
    pub kde_points: usize,
    pub rtol: f64,
}

impl Default for DensitySection {
    fn default() -> Self {
        Self {
            drift: "zero".into(),
            lambda: 1.0,
            u0: "identity".into(),
            hurst: 0.5,
            horizon: 1.0,
            t: 1.0,
            x: 0.0,
            n_steps: 128,
            n_samples: 100_000,
            seed: None,
            n_triples: 1000,
            bootstrap_replicates: 200,
            kde_points: 512,
            rtol: crate::tolerances::FLOW_RTOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplicitSection {
    /// `rotation-2d` or `zero` (both linear and divergence free).
    pub drift: String,
    /// `identity` or `linear` (row-major `u0_matrix`).
    pub u0: String,
    pub u0_matrix: [f64; 4],
    /// `zero` or `linear` (row-major `reaction_matrix`).
    pub reaction: String,
    pub reaction_matrix: [f64; 4],
    #[serde(rename = "H")]
    pub hurst: f64,
    pub t: f64,
    pub x: [f64; 2],
    pub n_steps: usize,
    pub n_samples: usize,
    /// Points per axis of the comparison grid.
    pub grid_points: usize,
    /// Half width of the comparison grid in units of the law's standard deviation.
    pub grid_sigmas: f64,
    /// Points per axis of the mass quadrature (odd).
    pub mass_points: usize,
}

impl Default for ExplicitSection {
    fn default() -> Self {
        Self {
            drift: "rotation-2d".into(),
            u0: "identity".into(),
            u0_matrix: [1.0, 0.0, 0.0, 1.0],
            reaction: "zero".into(),
            reaction_matrix: [0.0; 4],
            hurst: 0.5,
            t: 1.0,
            x: [0.7, -0.4],
            n_steps: 64,
            n_samples: 100_000,
            grid_points: 32,
            grid_sigmas: 3.0,
            mass_points: 201,
        }
    }
}

impl ExperimentConfig {
    /// Defaults for `experiment` with nothing overridden.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 0,
            output_dir: default_output_dir(),
            fbm: FbmSection::default(),
            flow: FlowSection::default(),
            weak: WeakSection::default(),
            malliavin: MalliavinSection::default(),
            density: DensitySection::default(),
            explicit: ExplicitSection::default(),
        }
    }

    /// Parses a TOML document, applies `key=value` overrides in order and
    /// validates the result.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let cfg = Self::from_table(parse_table(text, overrides)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config for `experiment` from an optional document plus overrides.
    /// Only the structure is checked; range validation happens in
    /// [`super::run`] so that it is recorded in the manifest.
    pub fn load(experiment: Experiment, text: Option<&str>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = parse_table(text.unwrap_or(""), &[])?;
        match table.get("experiment") {
            None => {
                table.insert("experiment".into(), toml::Value::String(experiment.name().into()));
            }
            Some(toml::Value::String(s)) if s != experiment.name() => {
                return Err(ConfigError::new("experiment", format!("config file is for `{s}` but `{experiment}` was requested")));
            }
            Some(_) => {}
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        serde_path_to_error::deserialize(table).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { String::new() } else { key };
            ConfigError::new(key, e.into_inner().message().trim().to_string())
        })
    }

    /// Range checks for the section the experiment reads.
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.experiment {
            Experiment::FbmValidate => self.fbm.validate(),
            Experiment::FlowRoundtrip => self.flow.validate(),
            Experiment::WeakResidual => self.weak.validate(),
            Experiment::MalliavinBounds => self.malliavin.validate(),
            Experiment::DensityEnvelope => self.density.validate(),
            Experiment::ExplicitDensity => self.explicit.validate(),
        }
    }

    /// Seed used by the density experiment.
    pub fn density_seed(&self) -> u64 {
        self.density.seed.unwrap_or(self.seed)
    }
}

fn parse_table(text: &str, overrides: &[String]) -> Result<toml::Table, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("", e.message().trim().to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Ok(table)
}

/// `a.b.c=value`: the value is read as a TOML literal, falling back to a
/// bare string.
fn apply_override(table: &mut toml::Table, arg: &str) -> Check {
    let Some((key, raw)) = arg.split_once('=') else {
        return Err(ConfigError::new(arg, "override must have the form key=value"));
    };
    let key = key.trim();
    let raw = raw.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "malformed key"));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::new(parts[..=i].join("."), "is not a table")),
        };
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn hurst_in(key: &str, h: f64, min: f64) -> Check {
    if !(h > 0.0 && h < 1.0) {
        return Err(ConfigError::new(key, format!("Hurst index must lie in (0, 1), got {h}")));
    }
    if h < min {
        return Err(ConfigError::new(key, format!("this experiment supports H ≥ {min}, got {h}")));
    }
    Ok(())
}

fn hurst_list(key: &str, hs: &[f64], min: f64) -> Check {
    if hs.is_empty() {
        return Err(ConfigError::new(key, "needs at least one Hurst index"));
    }
    hs.iter().try_for_each(|&h| hurst_in(key, h, min))
}

fn positive(key: &str, v: f64) -> Check {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be positive and finite, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Check {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be finite, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Check {
    if v >= min {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be at least {min}, got {v}")))
    }
}

fn known(key: &str, name: &str, allowed: &[&str]) -> Check {
    if allowed.contains(&name) {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("unknown preset `{name}` (allowed: {})", allowed.join(", "))))
    }
}

fn rtol(key: &str, v: f64) -> Check {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("relative tolerance must lie in (0, 1), got {v}")))
    }
}

/// `t` must be a positive node of the uniform grid on `[0, T]`.
fn on_grid(key: &str, t: f64, horizon: f64, n_steps: usize) -> Check {
    let k = t / horizon * n_steps as f64;
    if !(t > 0.0 && t <= horizon) || (k - k.round()).abs() > 1e-9 * n_steps as f64 {
        return Err(ConfigError::new(key, format!("{t} is not a positive node of the {n_steps}-step grid on [0, {horizon}]")));
    }
    Ok(())
}

const ONE_D_DRIFTS: [&str; 3] = ["zero", "linear", "sin"];

impl FbmSection {
    fn validate(&self) -> Check {
        hurst_list("fbm.H", &self.hurst, 0.0)?;
        positive("fbm.T", self.horizon)?;
        at_least("fbm.n_steps", self.n_steps, 1)?;
        at_least("fbm.n_paths", self.n_paths, 2)?;
        if self.method == Method::Volterra && self.hurst.iter().any(|&h| h < 0.5) {
            return Err(ConfigError::new("fbm.method", "the Volterra route needs H ≥ 1/2"));
        }
        Ok(())
    }
}

impl FlowSection {
    fn validate(&self) -> Check {
        known("flow.drift", &self.drift, &ONE_D_DRIFTS)?;
        finite("flow.lambda", self.lambda)?;
        hurst_list("flow.H", &self.hurst, 0.0)?;
        positive("flow.T", self.horizon)?;
        at_least("flow.n_steps", self.n_steps, 2)?;
        at_least("flow.n_points", self.n_points, 1)?;
        finite("flow.x_min", self.x_min)?;
        finite("flow.x_max", self.x_max)?;
        if self.x_min > self.x_max {
            return Err(ConfigError::new("flow.x_min", "must not exceed flow.x_max"));
        }
        rtol("flow.rtol", self.rtol)?;
        at_least("flow.substeps", self.substeps, 1)
    }
}

impl WeakSection {
    fn validate(&self) -> Check {
        known("weak.drift", &self.drift, &ONE_D_DRIFTS)?;
        finite("weak.lambda", self.lambda)?;
        known("weak.u0", &self.u0, &presets::INITIAL_DATA)?;
        hurst_in("weak.H", self.hurst, 0.0)?;
        positive("weak.T", self.horizon)?;
        finite("weak.phi_center", self.phi_center)?;
        positive("weak.phi_radius", self.phi_radius)?;
        at_least("weak.levels", self.levels.len(), 2)?;
        let finest = *self.levels.iter().max().expect("nonempty");
        for (i, w) in self.levels.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(ConfigError::new(format!("weak.levels[{}]", i + 1), "levels must be strictly increasing"));
            }
        }
        for (i, &l) in self.levels.iter().enumerate() {
            if l == 0 || !finest.is_multiple_of(l) {
                return Err(ConfigError::new(format!("weak.levels[{i}]"), format!("{l} does not divide the finest level {finest}")));
            }
            if l < 4 * self.epsilon_steps.max(1) {
                return Err(ConfigError::new(format!("weak.levels[{i}]"), "grid too coarse for the symmetric integral"));
            }
        }
        at_least("weak.n_paths", self.n_paths, 1)?;
        if self.epsilon_steps == 0 || !self.epsilon_steps.is_multiple_of(4) {
            return Err(ConfigError::new("weak.epsilon_steps", format!("must be a positive multiple of 4, got {}", self.epsilon_steps)));
        }
        if self.n_x < 3 || self.n_x.is_multiple_of(2) {
            return Err(ConfigError::new("weak.n_x", format!("must be odd and at least 3, got {}", self.n_x)));
        }
        if !(self.padding_factor >= 0.0 && self.padding_factor.is_finite()) {
            return Err(ConfigError::new("weak.padding_factor", "must be nonnegative"));
        }
        at_least("weak.stratonovich_steps", self.stratonovich_steps, 4 * self.epsilon_steps)?;
        Ok(())
    }
}

impl MalliavinSection {
    fn validate(&self) -> Check {
        known("malliavin.drift", &self.drift, &ONE_D_DRIFTS)?;
        finite("malliavin.lambda", self.lambda)?;
        hurst_list("malliavin.H", &self.hurst, 0.5)?;
        positive("malliavin.T", self.horizon)?;
        at_least("malliavin.n_steps", self.n_steps, 1)?;
        finite("malliavin.x_min", self.x_min)?;
        finite("malliavin.x_max", self.x_max)?;
        if self.x_min > self.x_max {
            return Err(ConfigError::new("malliavin.x_min", "must not exceed malliavin.x_max"));
        }
        hurst_list("malliavin.inner_hurst", &self.inner_hurst, 0.5)?;
        at_least("malliavin.inner_n_steps", self.inner_n_steps, 4)?;
        on_grid("malliavin.cross_t", self.cross_t, 1.0, self.inner_n_steps)
    }
}

impl DensitySection {
    fn validate(&self) -> Check {
        known("density.drift", &self.drift, &ONE_D_DRIFTS)?;
        finite("density.lambda", self.lambda)?;
        known("density.u0", &self.u0, &presets::INITIAL_DATA)?;
        if presets::initial_datum(&self.u0).map_or(true, |u| u.monotone_bounds().is_none()) {
            return Err(ConfigError::new("density.u0", format!("`{}` has no certified derivative bounds 0 < c ≤ u0′ ≤ C", self.u0)));
        }
        hurst_in("density.H", self.hurst, 0.5)?;
        positive("density.T", self.horizon)?;
        at_least("density.n_steps", self.n_steps, 1)?;
        on_grid("density.t", self.t, self.horizon, self.n_steps)?;
        finite("density.x", self.x)?;
        at_least("density.n_samples", self.n_samples, 2)?;
        at_least("density.kde_points", self.kde_points, 2)?;
        if self.bootstrap_replicates == 1 {
            return Err(ConfigError::new("density.bootstrap_replicates", "use 0 to disable or at least 2"));
        }
        rtol("density.rtol", self.rtol)
    }
}

impl ExplicitSection {
    fn validate(&self) -> Check {
        known("explicit.drift", &self.drift, &["rotation-2d", "zero"])?;
        known("explicit.u0", &self.u0, &["identity", "linear"])?;
        known("explicit.reaction", &self.reaction, &["zero", "linear"])?;
        let [a, b, c, d] = self.u0_matrix;
        if self.u0 == "linear" && a * d - b * c == 0.0 {
            return Err(ConfigError::new("explicit.u0_matrix", "linear initial map must be invertible"));
        }
        for (i, v) in self.u0_matrix.iter().chain(&self.reaction_matrix).enumerate() {
            let key = if i < 4 { format!("explicit.u0_matrix[{i}]") } else { format!("explicit.reaction_matrix[{}]", i - 4) };
            finite(&key, *v)?;
        }
        if self.hurst != 0.5 {
            return Err(ConfigError::new("explicit.H", format!("the explicit density is implemented for Brownian noise (H = 0.5), got {}", self.hurst)));
        }
        positive("explicit.t", self.t)?;
        finite("explicit.x[0]", self.x[0])?;
        finite("explicit.x[1]", self.x[1])?;
        at_least("explicit.n_steps", self.n_steps, 1)?;
        at_least("explicit.n_samples", self.n_samples, 10)?;
        at_least("explicit.grid_points", self.grid_points, 2)?;
        positive("explicit.grid_sigmas", self.grid_sigmas)?;
        if self.mass_points < 3 || self.mass_points.is_multiple_of(2) {
            return Err(ConfigError::new("explicit.mass_points", format!("must be odd and at least 3, got {}", self.mass_points)));
        }
        Ok(())
    }
}
