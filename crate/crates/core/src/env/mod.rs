//! Episodic environment contract and the built-in plants.
//!
//! Both built-ins take desired joint positions as actions and run their own
//! physics at 1 kHz under a 20 Hz control loop. Observation index 0 is the
//! first joint coordinate in both.

mod crawler;
mod purcell;
pub mod registry;

pub use crawler::{Crawler, CrawlerConfig, CrawlerState, EnergyLedger};
pub use purcell::{PurcellConfig, PurcellSwimmer, PurcellSwimmerState};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::oscillator::exact_ratio;
use crate::scalar::Scalar;

/// Physics integration step of the built-in plants, in seconds.
pub const PHYSICS_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuationMode {
    /// Actions are torques (or forces) computed by the caller.
    Torque,
    /// Actions are desired joint positions.
    Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec<T> {
    pub name: String,
    pub joint_count: usize,
    pub obs_dim: usize,
    pub control_period: T,
    pub episode_horizon: T,
    pub actuation_mode: ActuationMode,
    pub action_bounds: Vec<(T, T)>,
    /// Dimension of the external force accepted by
    /// [`Environment::apply_external_force`]; zero when unsupported.
    pub force_dim: usize,
}

impl<T: Scalar> EnvSpec<T> {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.joint_count >= 1, "environment must have at least one joint");
        ensure!(
            self.action_bounds.len() == self.joint_count,
            "expected {} action bounds, got {}",
            self.joint_count,
            self.action_bounds.len()
        );
        ensure!(self.episode_horizon > T::zero(), "episode horizon must be positive");
        exact_ratio(self.control_period, T::lit(PHYSICS_DT))?;
        Ok(())
    }

    /// Control steps per episode.
    pub fn episode_steps(&self) -> usize {
        crate::oscillator::tick_count(self.episode_horizon, self.control_period)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub observation: Vec<T>,
    pub reward: T,
    pub terminated: bool,
    pub truncated: bool,
}

/// Proprioceptive joint state read directly from the plant. Observation
/// corruption never reaches it.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState<T> {
    pub positions: Vec<T>,
    pub velocities: Vec<T>,
}

pub trait Environment<T: Scalar> {
    fn spec(&self) -> &EnvSpec<T>;

    /// Deterministic initial state for `seed`; returns the first observation.
    fn reset(&mut self, seed: u64) -> Result<Vec<T>>;

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>>;

    /// Applies `force` for the next `duration_steps` control steps.
    fn apply_external_force(&mut self, _force: &[T], _duration_steps: usize) -> Result<()> {
        Err(crate::error::Error::Unsupported(format!(
            "{} does not accept external forces",
            self.spec().name
        )))
    }

    fn joint_state(&self) -> Option<JointState<T>> {
        None
    }

    /// Flattened physical state, for checking that observation wrappers
    /// leave the dynamics alone.
    fn physical_state(&self) -> Vec<T> {
        Vec::new()
    }
}

impl<T: Scalar, E: Environment<T> + ?Sized> Environment<T> for Box<E> {
    fn spec(&self) -> &EnvSpec<T> {
        (**self).spec()
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<T>> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        (**self).step(action)
    }
    fn apply_external_force(&mut self, force: &[T], duration_steps: usize) -> Result<()> {
        (**self).apply_external_force(force, duration_steps)
    }
    fn joint_state(&self) -> Option<JointState<T>> {
        (**self).joint_state()
    }
    fn physical_state(&self) -> Vec<T> {
        (**self).physical_state()
    }
}

pub(crate) fn check_action<T: Scalar>(spec: &EnvSpec<T>, action: &[T]) -> Result<()> {
    ensure!(
        action.len() == spec.joint_count,
        "{} expects {} action entries, got {}",
        spec.name,
        spec.joint_count,
        action.len()
    );
    ensure!(action.iter().all(|a| a.is_finite()), "action contains non-finite values");
    Ok(())
}

/// Pending external force and the number of control steps it stays active.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ForceSchedule<T> {
    force: Vec<T>,
    remaining: usize,
}

impl<T: Scalar> ForceSchedule<T> {
    pub(crate) fn idle(dim: usize) -> Self {
        Self {
            force: vec![T::zero(); dim],
            remaining: 0,
        }
    }

    pub(crate) fn set(&mut self, force: &[T], duration_steps: usize) -> Result<()> {
        ensure!(
            force.len() == self.force.len(),
            "external force must have {} components, got {}",
            self.force.len(),
            force.len()
        );
        ensure!(force.iter().all(|f| f.is_finite()), "external force is not finite");
        self.force.copy_from_slice(force);
        self.remaining = duration_steps;
        Ok(())
    }

    /// Force for the control step about to run, consuming one step.
    pub(crate) fn take(&mut self) -> Option<Vec<T>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.force.clone())
    }
}
