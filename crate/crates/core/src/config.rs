//! JSON configuration documents.
//!
//! Design document:
//!
//! ```json
//! {"strata": [{"size": 500, "expected_rate": 0.9, "yes_prob": 0.5}, ...],
//!  "true_rates": [0.9, ...],
//!  "intended_size": 100}
//! ```
//!
//! `true_rates` is optional and defaults to the expected rates. A simulation
//! document adds `method`, `replications`, `seed` and `empty_stratum_policy`.
//! Grid documents deserialize straight into [`GridSpec`].

use serde::Deserialize;

use crate::allocation::Method;
use crate::error::{Error, Result};
use crate::population::{DesignSpec, Population, ResponseScenario, Stratum};
use crate::simulation::{EmptyStratumPolicy, SimConfig};
use crate::sweep::GridSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StratumDoc {
    size: u64,
    expected_rate: f64,
    yes_prob: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct DesignDoc {
    strata: Vec<StratumDoc>,
    #[serde(default)]
    true_rates: Option<Vec<f64>>,
    intended_size: u64,
}

#[derive(Debug, Clone, Deserialize)]
struct SimDoc {
    strata: Vec<StratumDoc>,
    #[serde(default)]
    true_rates: Option<Vec<f64>>,
    intended_size: u64,
    #[serde(default)]
    method: Option<Method>,
    #[serde(default)]
    replications: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    empty_stratum_policy: Option<EmptyStratumPolicy>,
}

fn prefixed(prefix: &str, err: Error) -> Error {
    match err {
        Error::Invalid { field, reason } => Error::Invalid {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

fn build_design(
    strata: Vec<StratumDoc>,
    true_rates: Option<Vec<f64>>,
    intended_size: u64,
) -> Result<(DesignSpec, ResponseScenario)> {
    let strata = strata
        .into_iter()
        .enumerate()
        .map(|(h, s)| {
            Stratum::new(s.size, s.expected_rate, s.yes_prob).map_err(|e| prefixed(&format!("strata[{h}]"), e))
        })
        .collect::<Result<Vec<_>>>()?;
    let pop = Population::new(strata)?;
    let scenario = match true_rates {
        Some(rates) => ResponseScenario::new(rates, &pop)?,
        None => ResponseScenario::correctly_specified(&pop),
    };
    Ok((DesignSpec::new(pop, intended_size)?, scenario))
}

pub fn parse_design(json: &str) -> Result<(DesignSpec, ResponseScenario)> {
    let doc: DesignDoc = serde_json::from_str(json)?;
    build_design(doc.strata, doc.true_rates, doc.intended_size)
}

/// Simulation settings that may also come from the command line.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimOverrides {
    pub method: Option<Method>,
    pub replications: Option<u64>,
    pub seed: Option<u64>,
    pub policy: Option<EmptyStratumPolicy>,
}

/// Parses a simulation document; `overrides` take precedence over the file.
/// Method defaults to ERR, seed to 0, policy to discard. Replications have
/// no default.
pub fn parse_sim_config(json: &str, overrides: SimOverrides) -> Result<SimConfig> {
    let doc: SimDoc = serde_json::from_str(json)?;
    let (design, scenario) = build_design(doc.strata, doc.true_rates, doc.intended_size)?;
    let replications = overrides
        .replications
        .or(doc.replications)
        .ok_or_else(|| Error::invalid("replications", "missing (set in config or pass --reps)"))?;
    let config = SimConfig::new(
        design,
        scenario,
        overrides.method.or(doc.method).unwrap_or(Method::Err),
        replications,
        overrides.seed.or(doc.seed).unwrap_or(0),
    )?;
    Ok(config.with_policy(overrides.policy.or(doc.empty_stratum_policy).unwrap_or_default()))
}

pub fn parse_grid(json: &str) -> Result<GridSpec> {
    let spec: GridSpec = serde_json::from_str(json)?;
    spec.validate()?;
    Ok(spec)
}
