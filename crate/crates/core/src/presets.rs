//! Named drifts, initial data and reactions with their certified constants.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::flow::DriftField;
use crate::transport::{InitialDatum, ReactionField};

pub const DRIFTS: [&str; 4] = ["zero", "linear", "sin", "rotation-2d"];
pub const INITIAL_DATA: [&str; 6] = ["identity", "cubic", "arctan-shift", "arctan", "bump", "zero"];
pub const REACTIONS: [&str; 3] = ["zero", "linear", "constant"];

/// Drift preset. `dim` applies to `zero` only; `lambda` to `linear` only.
pub fn drift(name: &str, dim: usize, lambda: f64) -> Result<DriftField> {
    match name {
        "zero" => Ok(DriftField::zero(dim.max(1))),
        "linear" => {
            if !lambda.is_finite() {
                return domain(format!("linear drift needs a finite λ, got {lambda}"));
            }
            Ok(DriftField::linear(lambda))
        }
        "sin" => Ok(DriftField::sin()),
        "rotation-2d" => Ok(DriftField::rotation_2d()),
        _ => domain(format!("unknown drift preset `{name}` (known: {})", DRIFTS.join(", "))),
    }
}

pub fn initial_datum(name: &str) -> Result<InitialDatum> {
    match name {
        "identity" => Ok(InitialDatum::identity()),
        "cubic" => Ok(InitialDatum::cubic()),
        "arctan-shift" => Ok(InitialDatum::arctan_shift()),
        "arctan" => Ok(InitialDatum::arctan()),
        "bump" => Ok(InitialDatum::bump()),
        "zero" => Ok(InitialDatum::zero()),
        _ => domain(format!("unknown initial datum `{name}` (known: {})", INITIAL_DATA.join(", "))),
    }
}

/// Reaction preset; `param` is κ for `linear` and c for `constant`.
pub fn reaction(name: &str, param: f64) -> Result<ReactionField> {
    if !param.is_finite() {
        return domain(format!("reaction parameter must be finite, got {param}"));
    }
    match name {
        "zero" => Ok(ReactionField::zero()),
        "linear" => Ok(ReactionField::linear(param)),
        "constant" => Ok(ReactionField::constant(param)),
        _ => domain(format!("unknown reaction `{name}` (known: {})", REACTIONS.join(", "))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEntry {
    pub name: &'static str,
    pub dim: usize,
    pub sup_norm_b_prime: f64,
    pub sup_norm_b: Option<f64>,
    pub divergence_free: bool,
    pub note: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatumEntry {
    pub name: &'static str,
    /// `(c, C)` with `c ≤ u0′ ≤ C`, if certified.
    pub derivative_bounds: Option<(f64, f64)>,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReactionEntry {
    pub name: &'static str,
    pub lipschitz: String,
    pub note: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetCatalog {
    pub drifts: Vec<DriftEntry>,
    pub initial_data: Vec<DatumEntry>,
    pub reactions: Vec<ReactionEntry>,
}

/// The full catalog. Constants are read off the constructed objects, so the
/// catalog cannot drift from what the experiments use.
pub fn list_presets() -> PresetCatalog {
    let notes = ["b ≡ 0", "b(x) = λx, ‖b′‖∞ = |λ| (shown for λ = 1)", "b(x) = sin x", "b(p) = (−p₂, p₁)"];
    let drifts = DRIFTS
        .iter()
        .zip(notes)
        .map(|(&name, note)| {
            let d = drift(name, 1, 1.0).expect("preset");
            DriftEntry {
                name,
                dim: d.dim(),
                sup_norm_b_prime: d.sup_norm_b_prime(),
                sup_norm_b: d.sup_norm_b(),
                divergence_free: d.divergence_free(),
                note,
            }
        })
        .collect();
    let initial_data = INITIAL_DATA
        .iter()
        .map(|&name| {
            let u = initial_datum(name).expect("preset");
            DatumEntry { name, derivative_bounds: u.monotone_bounds(), range: u.range() }
        })
        .collect();
    let reactions = vec![
        ReactionEntry { name: "zero", lipschitz: "0".into(), note: "F ≡ 0" },
        ReactionEntry { name: "linear", lipschitz: "|κ|".into(), note: "F(t, z) = κz" },
        ReactionEntry { name: "constant", lipschitz: "0".into(), note: "F(t, z) = c" },
    ];
    PresetCatalog { drifts, initial_data, reactions }
}
