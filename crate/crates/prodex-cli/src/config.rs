//! TOML scenario configuration.
//!
//! A config describes one experiment scenario: the items, both slates,
//! the per-item metric, the attention curve, the traffic split, and the
//! merge strategy, plus optional run defaults (seed, replications).
//! Validation errors name the offending field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use prodex_core::{
    ArmProbabilities, AttentionFunction, ExperimentDesign, HoldoutSource, ItemId, MergeStrategy,
    Ranker, Scenario, Universe,
};

/// Errors raised while reading or validating a scenario config.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("cannot read config `{path}`: {source}")]
    Io {
        /// Path that failed to open.
        path: PathBuf,
        /// Underlying I/O error.
        #[source]
        source: std::io::Error,
    },

    /// The file is not valid TOML for the expected schema.
    #[error("cannot parse config `{path}`:\n{message}")]
    Parse {
        /// Path that failed to parse.
        path: PathBuf,
        /// Parser message, including the position of the problem.
        message: String,
    },

    /// A field (or combination of fields) failed validation.
    #[error("config field `{field}`: {message}")]
    Field {
        /// Dotted path of the offending field.
        field: String,
        /// What went wrong.
        message: String,
    },
}

fn field_err(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.to_string(),
    }
}

/// On-disk scenario schema.
///
/// ```toml
/// # Optional: defaults to the order of `r0`.
/// items = ["x1", "x2", "x3", "x4"]
/// # Both slates, top position first.
/// r0 = ["x1", "x2", "x3", "x4"]
/// r1 = ["x2", "x3", "x4", "x1"]
/// # Attention per position, non-increasing.
/// h = [1.0, 1.0, 0.0, 0.0]
/// # Traffic shares; p1 defaults to 1 - p0 - ph, ph defaults to 0.
/// p0 = 0.9
/// # "consistent" | "naive" | "spot-labeling"
/// strategy = "consistent"
/// # Optional: which ranker places holdout items, "r0" (default) or "r1".
/// holdout_source = "r0"
/// # Optional run defaults, overridable on the command line.
/// seed = 42
/// replications = 100000
///
/// [u]
/// x1 = 0.9
/// x2 = 1.0
/// x3 = 1.0
/// x4 = 0.9
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Item ids; defaults to the order of `r0`.
    pub items: Option<Vec<String>>,
    /// Control slate, top-down.
    pub r0: Vec<String>,
    /// Treatment slate, top-down.
    pub r1: Vec<String>,
    /// Metric value per item id.
    pub u: BTreeMap<String, f64>,
    /// Attention per position, top position first.
    pub h: Vec<f64>,
    /// Control traffic share.
    pub p0: f64,
    /// Treatment traffic share; defaults to `1 - p0 - ph`.
    pub p1: Option<f64>,
    /// Holdout traffic share; defaults to 0.
    pub ph: Option<f64>,
    /// Merge strategy name.
    pub strategy: String,
    /// `"r0"` (default) or `"r1"`.
    pub holdout_source: Option<String>,
    /// Default master seed for commands that draw randomness.
    pub seed: Option<u64>,
    /// Default replication count for `simulate`.
    pub replications: Option<u64>,
}

impl ScenarioConfig {
    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Resolves the traffic shares, applying defaults.
    fn probabilities(&self) -> Result<ArmProbabilities, ConfigError> {
        let ph = self.ph.unwrap_or(0.0);
        if !(0.0..=1.0).contains(&ph) {
            return Err(field_err("ph", format!("share {ph} must lie in [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(field_err(
                "p0",
                format!("share {} must lie in [0, 1]", self.p0),
            ));
        }
        let p1 = self.p1.unwrap_or(1.0 - self.p0 - ph);
        ArmProbabilities::new(self.p0, p1, ph)
            .map_err(|e| field_err("p0/p1/ph", e))
    }

    /// Validates the config and builds the scenario.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let item_ids: Vec<String> = match &self.items {
            Some(items) => items.clone(),
            None => self.r0.clone(),
        };
        let universe =
            Universe::new(item_ids.iter().map(String::as_str)).map_err(|e| field_err("items", e))?;

        let ranker_of = |field: &str, slate: &[String]| -> Result<Ranker, ConfigError> {
            if slate.len() != universe.len() {
                return Err(field_err(
                    field,
                    format!("lists {} items, expected {}", slate.len(), universe.len()),
                ));
            }
            let order = slate
                .iter()
                .map(|id| {
                    universe
                        .index_of(&ItemId::from(id.as_str()))
                        .ok_or_else(|| {
                            field_err(field, format!("item `{id}` is not in `items`"))
                        })
                })
                .collect::<Result<Vec<usize>, ConfigError>>()?;
            Ranker::from_item_order(order).map_err(|e| field_err(field, e))
        };
        let r0 = ranker_of("r0", &self.r0)?;
        let r1 = ranker_of("r1", &self.r1)?;

        for id in self.u.keys() {
            if universe.index_of(&ItemId::from(id.as_str())).is_none() {
                return Err(field_err(
                    &format!("u.{id}"),
                    "utility given for an item that is not in `items`",
                ));
            }
        }
        let u = universe
            .ids()
            .iter()
            .map(|id| {
                self.u
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| field_err(&format!("u.{id}"), "missing utility for this item"))
            })
            .collect::<Result<Vec<f64>, ConfigError>>()?;

        let h = AttentionFunction::new(self.h.clone()).map_err(|e| field_err("h", e))?;
        let probs = self.probabilities()?;
        let strategy: MergeStrategy =
            self.strategy.parse().map_err(|e| field_err("strategy", e))?;
        let holdout_source = match self.holdout_source.as_deref() {
            None | Some("r0") => HoldoutSource::ControlRanker,
            Some("r1") => HoldoutSource::TreatmentRanker,
            Some(other) => {
                return Err(field_err(
                    "holdout_source",
                    format!("`{other}` is not a holdout source; use `r0` or `r1`"),
                ))
            }
        };

        Scenario::new(
            universe,
            u,
            h,
            r0,
            r1,
            ExperimentDesign {
                probs,
                strategy,
                holdout_source,
            },
        )
        .map_err(|e| field_err("scenario", e))
    }
}
