//! Experiment configuration: a TOML file with one section per module,
//! layered over profile defaults and under command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lpreform_core::datagen::ScenarioSpec;
use lpreform_core::reformulate::ReformulateConfig;
use lpreform_core::simplex::SolverConfig;
use lpreform_core::training::{EvalConfig, TrainConfig};

/// Raw sections of a config file; absent keys keep their defaults.
#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    pub datagen: Option<toml::Table>,
    pub solver: Option<toml::Table>,
    pub training: Option<toml::Table>,
    pub reformulate: Option<toml::Table>,
    pub evaluate: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Replaces the fields of `base` named in `section`.
pub fn overlay<T: Serialize + DeserializeOwned>(base: T, section: Option<&toml::Table>) -> Result<T> {
    let Some(section) = section else {
        return Ok(base);
    };
    let mut value = serde_json::to_value(&base)?;
    let patch = serde_json::to_value(section)?;
    merge(&mut value, patch);
    serde_json::from_value(value).context("applying config section")
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// The configuration a subcommand actually ran with, echoed next to its
/// outputs.
#[derive(Debug, Default, Serialize)]
pub struct EffectiveConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datagen: Option<ScenarioSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reformulate: Option<ReformulateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<EvalConfig>,
}

impl EffectiveConfig {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("effective_config.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
