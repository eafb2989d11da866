//! Sensor corruption and random push disturbances around any environment.
//!
//! A [`Perturbed`] environment runs, on every control step, the dynamics
//! perturbation first (a random impulse applied to the plant for exactly one
//! step) and the observation corruption second. Observation corruption only
//! touches the returned vector, so the plant evolves exactly as it would
//! without the wrapper.
//!
//! Randomness comes from a stream owned by the wrapper. On `reset(s)` it is
//! reseeded with `seeds::derive(seeds::noise(config.seed), [s])`, which keeps
//! it independent of the environment's own seed use and makes every episode
//! reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Environment, JointState, StepResult};
use crate::error::{ensure, Error, Result};
use crate::rollout::{run_episode, Policy};
use crate::scalar::Scalar;
use crate::seeds;

/// Noise intensities used by sweeps.
pub const NOISE_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];
pub const DEFAULT_STUCK_VALUE: f64 = 5.0;
pub const DEFAULT_FORCE_MAGNITUDE: f64 = 5.0;
pub const DEFAULT_FORCE_PROBABILITY: f64 = 0.05;

fn default_stuck_value() -> f64 {
    DEFAULT_STUCK_VALUE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DirectionMode {
    /// A sign in one dimension, a uniform angle in two, a uniform point on
    /// the unit sphere otherwise.
    #[default]
    Random,
    /// Always push along this vector (normalized before use).
    Fixed { direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PerturbationKind {
    GaussianNoise {
        sigma: f64,
    },
    /// The sensor reads zero.
    #[serde(rename = "failure_type_I", alias = "failure_type_i")]
    FailureTypeI,
    /// The sensor is stuck at a constant.
    #[serde(rename = "failure_type_II", alias = "failure_type_ii")]
    FailureTypeII {
        #[serde(default = "default_stuck_value")]
        value: f64,
    },
    ExternalForce {
        magnitude: f64,
        probability: f64,
        #[serde(default)]
        direction_mode: DirectionMode,
    },
}

impl PerturbationKind {
    pub fn touches_dynamics(&self) -> bool {
        matches!(self, PerturbationKind::ExternalForce { .. })
    }

    /// Short label for reports, e.g. `gaussian_noise(0.2)`.
    pub fn label(&self) -> String {
        match self {
            PerturbationKind::GaussianNoise { sigma } => format!("gaussian_noise({sigma})"),
            PerturbationKind::FailureTypeI => "failure_type_I".to_string(),
            PerturbationKind::FailureTypeII { value } => format!("failure_type_II({value})"),
            PerturbationKind::ExternalForce {
                magnitude, probability, ..
            } => format!("external_force({magnitude},{probability})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    #[serde(default)]
    pub target_index: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PerturbationConfig {
    pub fn new(kind: PerturbationKind) -> Self {
        Self {
            kind,
            target_index: 0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn gaussian_noise(sigma: f64) -> Self {
        Self::new(PerturbationKind::GaussianNoise { sigma })
    }

    pub fn failure_type_i() -> Self {
        Self::new(PerturbationKind::FailureTypeI)
    }

    pub fn failure_type_ii(value: f64) -> Self {
        Self::new(PerturbationKind::FailureTypeII { value })
    }

    pub fn external_force(magnitude: f64, probability: f64) -> Self {
        Self::new(PerturbationKind::ExternalForce {
            magnitude,
            probability,
            direction_mode: DirectionMode::Random,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            PerturbationKind::GaussianNoise { sigma } => {
                ensure!(sigma.is_finite() && *sigma >= 0.0, "noise sigma must be >= 0, got {sigma}")
            }
            PerturbationKind::FailureTypeI => {}
            PerturbationKind::FailureTypeII { value } => ensure!(value.is_finite(), "stuck value must be finite"),
            PerturbationKind::ExternalForce {
                magnitude,
                probability,
                direction_mode,
            } => {
                ensure!(
                    magnitude.is_finite() && *magnitude >= 0.0,
                    "force magnitude must be >= 0, got {magnitude}"
                );
                ensure!(
                    (0.0..=1.0).contains(probability),
                    "force probability must lie in [0, 1], got {probability}"
                );
                if let DirectionMode::Fixed { direction } = direction_mode {
                    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
                    ensure!(norm.is_finite() && norm > 0.0, "fixed force direction must be non-zero");
                }
            }
        }
        Ok(())
    }
}

/// The standard robustness suite: every noise level of [`NOISE_GRID`], both
/// sensor failures, and 5 N pushes with probability 0.05.
pub fn standard_suite(seed: u64) -> Vec<PerturbationConfig> {
    let mut configs: Vec<PerturbationConfig> = NOISE_GRID
        .iter()
        .map(|&s| PerturbationConfig::gaussian_noise(s))
        .collect();
    configs.push(PerturbationConfig::failure_type_i());
    configs.push(PerturbationConfig::failure_type_ii(DEFAULT_STUCK_VALUE));
    configs.push(PerturbationConfig::external_force(
        DEFAULT_FORCE_MAGNITUDE,
        DEFAULT_FORCE_PROBABILITY,
    ));
    configs.into_iter().map(|c| c.with_seed(seed)).collect()
}

pub struct Perturbed<E, T> {
    inner: E,
    config: PerturbationConfig,
    rng: ChaCha8Rng,
    impulses: usize,
    force: Vec<T>,
}

/// Wraps `env`; the returned environment reports the same [`EnvSpec`].
pub fn wrap<T: Scalar, E: Environment<T>>(env: E, config: PerturbationConfig) -> Result<Perturbed<E, T>> {
    config.validate()?;
    let spec = env.spec();
    ensure!(
        config.target_index < spec.obs_dim,
        "target index {} is out of range for observation dimension {}",
        config.target_index,
        spec.obs_dim
    );
    let force_dim = spec.force_dim;
    if let PerturbationKind::ExternalForce { direction_mode, .. } = &config.kind {
        if force_dim == 0 {
            return Err(Error::Unsupported(format!("{} does not accept external forces", spec.name)));
        }
        if let DirectionMode::Fixed { direction } = direction_mode {
            ensure!(
                direction.len() == force_dim,
                "fixed direction has {} components, the plant takes {force_dim}",
                direction.len()
            );
        }
    }
    let rng = ChaCha8Rng::seed_from_u64(seeds::derive(seeds::noise(config.seed), [0u64]));
    Ok(Perturbed {
        inner: env,
        config,
        rng,
        impulses: 0,
        force: vec![T::zero(); force_dim],
    })
}

impl<E, T: Scalar> Perturbed<E, T> {
    pub fn config(&self) -> &PerturbationConfig {
        &self.config
    }

    /// Impulses applied since the last reset.
    pub fn impulse_count(&self) -> usize {
        self.impulses
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn into_inner(self) -> E {
        self.inner
    }

    fn draw_direction(&mut self) {
        if let PerturbationKind::ExternalForce {
            direction_mode: DirectionMode::Fixed { direction },
            ..
        } = &self.config.kind
        {
            let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
            for (f, d) in self.force.iter_mut().zip(direction) {
                *f = T::lit(d / norm);
            }
            return;
        }
        match self.force.len() {
            1 => {
                let sign = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
                self.force[0] = T::lit(sign);
            }
            2 => {
                let angle = self.rng.random_range(0.0..std::f64::consts::TAU);
                self.force[0] = T::lit(angle.cos());
                self.force[1] = T::lit(angle.sin());
            }
            n => loop {
                let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut self.rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    for (f, x) in self.force.iter_mut().zip(&v) {
                        *f = T::lit(x / norm);
                    }
                    break;
                }
            },
        }
    }

    fn corrupt(&mut self, observation: &mut [T]) {
        let slot = &mut observation[self.config.target_index];
        match self.config.kind {
            PerturbationKind::GaussianNoise { sigma } => {
                if sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    *slot += T::lit(sigma * z);
                }
            }
            PerturbationKind::FailureTypeI => *slot = T::zero(),
            PerturbationKind::FailureTypeII { value } => *slot = T::lit(value),
            PerturbationKind::ExternalForce { .. } => {}
        }
    }
}

impl<E: Environment<T>, T: Scalar> Environment<T> for Perturbed<E, T> {
    fn spec(&self) -> &EnvSpec<T> {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<T>> {
        self.rng = ChaCha8Rng::seed_from_u64(seeds::derive(seeds::noise(self.config.seed), [seed]));
        self.impulses = 0;
        let mut observation = self.inner.reset(seed)?;
        self.corrupt(&mut observation);
        Ok(observation)
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        if let PerturbationKind::ExternalForce {
            magnitude, probability, ..
        } = self.config.kind
        {
            if self.rng.random_bool(probability) {
                self.draw_direction();
                let push: Vec<T> = self.force.iter().map(|&d| d * T::lit(magnitude)).collect();
                self.inner.apply_external_force(&push, 1)?;
                self.impulses += 1;
            }
        }
        let mut result = self.inner.step(action)?;
        self.corrupt(&mut result.observation);
        Ok(result)
    }

    fn apply_external_force(&mut self, force: &[T], duration_steps: usize) -> Result<()> {
        self.inner.apply_external_force(force, duration_steps)
    }

    fn joint_state(&self) -> Option<JointState<T>> {
        self.inner.joint_state()
    }

    fn physical_state(&self) -> Vec<T> {
        self.inner.physical_state()
    }
}

/// Returns of one perturbation setting across the sweep's seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub config: PerturbationConfig,
    pub returns: Vec<f64>,
    pub impulses: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RobustnessReport {
    pub seeds: Vec<u64>,
    /// Returns without any wrapper, for reference.
    pub baseline: Vec<f64>,
    pub entries: Vec<SweepEntry>,
}

impl RobustnessReport {
    /// Settings whose returns differ from the baseline on at least one seed.
    pub fn affected(&self) -> Vec<&SweepEntry> {
        self.entries.iter().filter(|e| e.returns != self.baseline).collect()
    }
}

/// Evaluates `policy` on fresh environments from `make_env`, unperturbed and
/// under every config, with one episode per seed. The episode loop is the
/// same one used everywhere else, so wrappers run even when the policy never
/// reads its observations.
pub fn robustness_sweep<T, E, P, F>(
    policy: &P,
    mut make_env: F,
    configs: &[PerturbationConfig],
    seeds: &[u64],
) -> Result<RobustnessReport>
where
    T: Scalar,
    E: Environment<T>,
    P: Policy<T> + Clone,
    F: FnMut() -> Result<E>,
{
    if configs.is_empty() {
        return Ok(RobustnessReport::default());
    }
    let mut baseline = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut env = make_env()?;
        let mut p = policy.clone();
        baseline.push(run_episode(&mut env, &mut p, seed, false)?.total_return.as_f64());
    }
    let mut entries = Vec::with_capacity(configs.len());
    for config in configs {
        let mut returns = Vec::with_capacity(seeds.len());
        let mut impulses = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut env = wrap(make_env()?, config.clone())?;
            let mut p = policy.clone();
            returns.push(run_episode(&mut env, &mut p, seed, false)?.total_return.as_f64());
            impulses.push(env.impulse_count());
        }
        entries.push(SweepEntry {
            label: config.kind.label(),
            config: config.clone(),
            returns,
            impulses,
        });
    }
    Ok(RobustnessReport {
        seeds: seeds.to_vec(),
        baseline,
        entries,
    })
}
