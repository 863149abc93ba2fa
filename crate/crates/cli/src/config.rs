//! JSON model configuration.
//!
//! ```json
//! {
//!   "walk": { "simple": { "p": 0.5 } },
//!   "catalysts": [
//!     { "position": 0, "alpha": 0.5, "beta": 1.0, "offspring": { "0": 0.5, "2": 0.5 } }
//!   ],
//!   "start": 0
//! }
//! ```
//!
//! A general walk lists jump rates by offset: `{ "general": { "1": 2.0, "-1": 1.0 } }`.

use std::collections::BTreeMap;

use cbrw_core::{Catalyst, CatalystSet, Model, OffspringDist, WalkSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WalkConfig {
    Simple { p: f64 },
    General(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalystConfig {
    pub position: i64,
    pub alpha: f64,
    #[serde(default = "unit_rate")]
    pub beta: f64,
    pub offspring: BTreeMap<String, f64>,
}

fn unit_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub walk: WalkConfig,
    pub catalysts: Vec<CatalystConfig>,
    #[serde(default)]
    pub start: i64,
}

fn at(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn parse_keys<K: std::str::FromStr>(path: &str, map: &BTreeMap<String, f64>) -> Result<Vec<(K, f64)>, CliError> {
    map.iter()
        .map(|(k, &v)| {
            k.trim()
                .parse::<K>()
                .map(|k| (k, v))
                .map_err(|_| at(path, format!("key {k:?} is not a valid integer")))
        })
        .collect()
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the canonical serialization: key order and whitespace
    /// in the source file do not matter.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn walk(&self) -> Result<WalkSpec, CliError> {
        match &self.walk {
            WalkConfig::Simple { p } => WalkSpec::simple(*p).map_err(|e| at("walk.simple.p", e)),
            WalkConfig::General(rates) => {
                let rates = parse_keys::<i64>("walk.general", rates)?;
                WalkSpec::general(rates).map_err(|e| at("walk.general", e))
            }
        }
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let walk = self.walk()?;
        if self.catalysts.is_empty() {
            return Err(at("catalysts", "at least one catalyst is required"));
        }
        let mut entries = Vec::with_capacity(self.catalysts.len());
        for (i, c) in self.catalysts.iter().enumerate() {
            if !(0.0..1.0).contains(&c.alpha) {
                return Err(at(&format!("catalysts[{i}].alpha"), format!("must lie in [0,1), got {}", c.alpha)));
            }
            if !(c.beta > 0.0 && c.beta.is_finite()) {
                return Err(at(&format!("catalysts[{i}].beta"), format!("must be positive, got {}", c.beta)));
            }
            let path = format!("catalysts[{i}].offspring");
            let pairs = parse_keys::<usize>(&path, &c.offspring)?;
            let offspring = OffspringDist::from_pairs(pairs).map_err(|e| at(&path, e))?;
            entries.push(Catalyst {
                position: c.position,
                alpha: c.alpha,
                beta: c.beta,
                offspring,
            });
        }
        let catalysts = CatalystSet::new(entries).map_err(|e| at("catalysts", e))?;
        Ok(Model::new(walk, catalysts))
    }
}
