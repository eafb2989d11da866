//! Re-running stored parameters: plain evaluation and robustness sweeps.

use std::path::Path;

use openloop::env::registry;
use openloop::oscillator::OscillatorParams;
use openloop::perturb::{self, PerturbationConfig, RobustnessReport};
use openloop::rollout::{run_episode, OpenLoopPolicy};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::optimize::RunRecord;
use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub seed: u64,
    #[serde(rename = "return")]
    pub total_return: f64,
    pub steps: usize,
    pub terminated: bool,
    /// Commands sent to the plant (positions or torques), one row per step.
    pub actions: Vec<Vec<f64>>,
}

pub fn load_record(path: &Path) -> Result<RunRecord, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("invalid run record {}: {e}", path.display())))
}

/// One deterministic episode per seed.
pub fn evaluate(config: &ExperimentConfig, params: &OscillatorParams<f64>, seeds: &[u64]) -> Result<Vec<EvalEpisode>, Failure> {
    let mut env = registry::make(&config.env, &config.env_options).map_err(Failure::from_env)?;
    let spec = env.spec().clone();
    if params.joint_count() != spec.joint_count {
        return Err(Failure::Config(format!(
            "parameters drive {} joints but {} has {}",
            params.joint_count(),
            config.env,
            spec.joint_count
        )));
    }
    let gains = config.resolve_gains(&spec)?;
    let mut policy = OpenLoopPolicy::new(params.clone(), config.variant, config.optimizer.dt_phase, gains)
        .map_err(|e| Failure::Config(e.to_string()))?;
    seeds
        .iter()
        .map(|&seed| {
            let ep = run_episode(&mut env, &mut policy, seed, true).map_err(Failure::from_env)?;
            Ok(EvalEpisode {
                seed,
                total_return: ep.total_return,
                steps: ep.steps,
                terminated: ep.terminated,
                actions: ep.actions,
            })
        })
        .collect()
}

pub fn best_params(record: &RunRecord) -> Result<&OscillatorParams<f64>, Failure> {
    record
        .best
        .as_ref()
        .map(|b| &b.params)
        .ok_or_else(|| Failure::Config("run record holds no parameters".into()))
}

fn default_sweep_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// Robustness sweep description (TOML).
///
/// ```toml
/// seeds = [0, 1, 2]
/// noise_seed = 7
/// standard = true          # add the standard suite
///
/// [[perturbation]]
/// kind = "gaussian_noise"
/// sigma = 0.3
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sweep_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub standard: bool,
    #[serde(default)]
    pub perturbation: Vec<PerturbationConfig>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Config(format!("invalid sweep config: {e}")))
    }

    pub fn configs(&self) -> Vec<PerturbationConfig> {
        let mut out = if self.standard {
            perturb::standard_suite(self.noise_seed)
        } else {
            Vec::new()
        };
        out.extend(self.perturbation.iter().cloned());
        out
    }
}

pub fn robustness(
    config: &ExperimentConfig,
    params: &OscillatorParams<f64>,
    sweep: &SweepConfig,
) -> Result<RobustnessReport, Failure> {
    let configs = sweep.configs();
    for c in &configs {
        c.validate().map_err(|e| Failure::Config(e.to_string()))?;
    }
    let probe = registry::make(&config.env, &config.env_options).map_err(Failure::from_env)?;
    let gains = config.resolve_gains(probe.spec())?;
    drop(probe);
    let policy = OpenLoopPolicy::new(params.clone(), config.variant, config.optimizer.dt_phase, gains)
        .map_err(|e| Failure::Config(e.to_string()))?;
    perturb::robustness_sweep(
        &policy,
        || registry::make(&config.env, &config.env_options),
        &configs,
        &sweep.seeds,
    )
    .map_err(Failure::from_env)
}
