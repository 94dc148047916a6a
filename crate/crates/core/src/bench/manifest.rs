use std::collections::BTreeMap;

use serde::Serialize;

use super::{ConfigError, ExperimentConfig};
use crate::error::Error;
use crate::tolerances;

/// `git describe` of the build, or the package version outside a checkout.
pub const BUILD_ID: &str = env!("FTLAB_BUILD_ID");

/// One acceptance check: `value <relation> threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    /// `config` or `numeric`.
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub message: String,
}

impl RunError {
    pub(crate) fn config(e: &ConfigError) -> Self {
        Self { kind: "config".into(), key: Some(e.key.clone()), message: e.to_string() }
    }

    pub(crate) fn numeric(e: &Error) -> Self {
        Self { kind: "numeric".into(), key: None, message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub build: String,
    pub config: ExperimentConfig,
    /// Every module tolerance; check-specific thresholds are in `checks`.
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    pub error: Option<RunError>,
    pub results: serde_json::Map<String, serde_json::Value>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub(crate) fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment.name().into(),
            build: BUILD_ID.into(),
            config: config.clone(),
            tolerances: tolerances::catalog().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            checks: Vec::new(),
            passed: false,
            error: None,
            results: serde_json::Map::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}
