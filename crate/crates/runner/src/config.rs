//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use openloop::env::registry::{self, EnvOptions};
use openloop::env::{ActuationMode, EnvSpec};
use openloop::oscillator::DEFAULT_PHASE_DT;
use openloop::pd::PdGains;
use openloop::search_space::{Preset, SearchSpace};
use openloop::PolicyVariant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BUDGET_STEPS: usize = 1_000_000;
pub const DEFAULT_METHOD: &str = "open_loop";

fn schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_method() -> String {
    DEFAULT_METHOD.to_string()
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_population")]
    pub population_size: usize,
    /// Environment control steps per run.
    #[serde(default = "default_budget")]
    pub budget_steps: usize,
    /// Multiplies `budget_steps`; 3 reproduces the "3 x budget" setting.
    #[serde(default = "default_multiplier")]
    pub budget_multiplier: usize,
    #[serde(default = "default_dt_phase")]
    pub dt_phase: f64,
}

fn default_population() -> usize {
    openloop::cmaes::DEFAULT_POPULATION
}
fn default_budget() -> usize {
    DEFAULT_BUDGET_STEPS
}
fn default_multiplier() -> usize {
    1
}
fn default_dt_phase() -> f64 {
    DEFAULT_PHASE_DT
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population_size: default_population(),
            budget_steps: default_budget(),
            budget_multiplier: default_multiplier(),
            dt_phase: default_dt_phase(),
        }
    }
}

impl OptimizerConfig {
    pub fn effective_budget(&self) -> usize {
        self.budget_steps.saturating_mul(self.budget_multiplier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub env: String,
    /// Label written to the `method` column of result files.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default)]
    pub variant: PolicyVariant,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Defaults to the table row matching `env`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_space: Option<SearchSpace<f64>>,
    /// Defaults to the table gains for torque-actuated tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd: Option<PdGains<f64>>,
    #[serde(default)]
    pub env_options: EnvOptions,
}

impl ExperimentConfig {
    pub fn new(env: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            env: env.into(),
            method: default_method(),
            variant: PolicyVariant::Full,
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            optimizer: OptimizerConfig::default(),
            search_space: None,
            pd: None,
            env_options: EnvOptions::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let config: Self = toml::from_str(text).map_err(|e| Failure::Config(format!("invalid config: {e}")))?;
        config.check()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    /// Static checks that need no environment.
    pub fn check(&self) -> Result<(), Failure> {
        let bad = |msg: String| Err(Failure::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.optimizer.effective_budget() == 0 {
            return bad("budget must be positive".into());
        }
        if self.optimizer.population_size < 2 {
            return bad("population_size must be at least 2".into());
        }
        if self.method.is_empty() || self.method.contains([',', '\n', '/']) {
            return bad(format!("method label `{}` must be non-empty without commas or slashes", self.method));
        }
        if let Some(space) = &self.search_space {
            space.validate().map_err(|e| Failure::Config(e.to_string()))?;
        }
        if let Some(gains) = &self.pd {
            gains.validate().map_err(|e| Failure::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Search space for an environment with `joints` joints, restricted to
    /// the configured variant.
    pub fn resolve_space(&self, joints: usize) -> Result<SearchSpace<f64>, Failure> {
        let space = match &self.search_space {
            Some(space) => space.clone(),
            None => default_space(&self.env, joints)?,
        };
        if space.joint_count() != joints {
            return Err(Failure::Config(format!(
                "search space describes {} joints but {} has {joints}",
                space.joint_count(),
                self.env
            )));
        }
        Ok(space.restrict_to(self.variant))
    }

    pub fn resolve_gains(&self, spec: &EnvSpec<f64>) -> Result<Option<PdGains<f64>>, Failure> {
        if spec.actuation_mode == ActuationMode::Position {
            return Ok(None);
        }
        if let Some(gains) = self.pd {
            return Ok(Some(gains));
        }
        registry::default_preset(&self.env)
            .and_then(PdGains::for_preset)
            .map(Some)
            .ok_or_else(|| Failure::Config(format!("{} is torque-actuated; set [pd] gains", self.env)))
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configs serialize to JSON");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Every field spelled out, for `optimize --print-config`.
    pub fn documented_defaults(env: &str) -> Result<Self, Failure> {
        let mut config = Self::new(env);
        let joints = match registry::default_preset(env) {
            Some(preset) if env != registry::PURCELL_SWIMMER => preset.joint_count(),
            _ => registry::make(env, &EnvOptions::default())
                .map_err(|e| Failure::Config(e.to_string()))?
                .spec()
                .joint_count,
        };
        config.search_space = Some(default_space(env, joints)?);
        Ok(config)
    }
}

/// The table row for `env`, applied to `joints` joints. The crawler uses the
/// hopper row.
pub fn default_space(env: &str, joints: usize) -> Result<SearchSpace<f64>, Failure> {
    let preset = match env {
        registry::CRAWLER => Preset::Hopper,
        other => registry::default_preset(other)
            .ok_or_else(|| Failure::Config(format!("no default search space for {other}; set [search_space]")))?,
    };
    Ok(SearchSpace::preset_with_joints(preset, joints))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse("env = \"crawler\"\n").unwrap();
        assert_eq!(c.optimizer.population_size, 30);
        assert_eq!(c.optimizer.dt_phase, 0.001);
        assert_eq!(c.variant, PolicyVariant::Full);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.resolve_space(1).unwrap().param_count(), 3);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("env = \"crawler\"\nseeds = []\n").is_err());
        assert!(ExperimentConfig::parse("env = \"crawler\"\nschema_version = 9\n").is_err());
        assert!(ExperimentConfig::parse("env = \"crawler\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::parse("env = \"crawler\"\n[optimizer]\nbudget_steps = 0\n").is_err());
        assert!(ExperimentConfig::parse("variant = \"full\"\n").is_err());
    }

    #[test]
    fn printed_defaults_parse_back() {
        for env in ["purcell_swimmer", "crawler", "external:Ant-v4"] {
            let c = ExperimentConfig::documented_defaults(env).unwrap();
            let back = ExperimentConfig::parse(&c.to_toml()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::new("crawler");
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![1];
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
