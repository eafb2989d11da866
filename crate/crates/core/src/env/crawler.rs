//! Two point masses on a line joined by a PD-driven linear actuator, with
//! direction-dependent ground drag.
//!
//! The single joint coordinate is the actuator elongation `x2 - x1 - L0`.
//! Drag on each mass is `-c(v) v` with a small coefficient for forward
//! motion and a large one for backward motion, so periodic elongation
//! produces net forward travel. Integration is semi-implicit Euler.

use serde::{Deserialize, Serialize};

use super::{check_action, ActuationMode, EnvSpec, Environment, ForceSchedule, JointState, StepResult, PHYSICS_DT};
use crate::error::{Error, Result};
use crate::oscillator::exact_ratio;
use crate::pd::{torque_one, PdGains};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlerConfig<T> {
    pub mass: T,
    pub rest_length: T,
    pub gains: PdGains<T>,
    /// Drag coefficient for `v > 0`.
    pub drag_forward: T,
    /// Drag coefficient for `v <= 0`.
    pub drag_backward: T,
    pub control_period: T,
    pub episode_horizon: T,
}

impl<T: Scalar> Default for CrawlerConfig<T> {
    fn default() -> Self {
        Self {
            mass: T::one(),
            rest_length: T::one(),
            gains: PdGains {
                kp: T::lit(50.0),
                kd: T::lit(2.0),
                torque_limit: None,
            },
            drag_forward: T::lit(0.5),
            drag_backward: T::lit(5.0),
            control_period: T::lit(0.05),
            episode_horizon: T::lit(20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlerState<T> {
    pub x1: T,
    pub x2: T,
    pub v1: T,
    pub v2: T,
    pub time: T,
}

impl<T: Scalar> CrawlerState<T> {
    pub fn elongation(&self, rest_length: T) -> T {
        self.x2 - self.x1 - rest_length
    }

    pub fn center(&self) -> T {
        (self.x1 + self.x2) * T::lit(0.5)
    }

    fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.v1.is_finite() && self.v2.is_finite()
    }
}

/// Running energy balance since the last reset. Power terms use the mean of
/// the pre- and post-step velocities, which makes the balance exact for the
/// semi-implicit update up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger<T> {
    pub actuator_work: T,
    pub drag_dissipation: T,
    pub external_work: T,
    pub initial_kinetic: T,
    pub kinetic: T,
}

impl<T: Scalar> EnergyLedger<T> {
    /// `actuator + external - dissipation - delta KE`; zero for a consistent
    /// integration.
    pub fn residual(&self) -> T {
        self.actuator_work + self.external_work - self.drag_dissipation - (self.kinetic - self.initial_kinetic)
    }
}

#[derive(Debug, Clone)]
pub struct Crawler<T> {
    config: CrawlerConfig<T>,
    spec: EnvSpec<T>,
    substeps: usize,
    state: CrawlerState<T>,
    steps: usize,
    max_steps: usize,
    done: bool,
    force: ForceSchedule<T>,
    energy: EnergyLedger<T>,
}

impl<T: Scalar> Crawler<T> {
    pub fn new(config: CrawlerConfig<T>) -> Result<Self> {
        config.gains.validate()?;
        if !(config.mass > T::zero()) || !(config.rest_length > T::zero()) {
            return Err(Error::invalid("crawler mass and rest length must be positive"));
        }
        if config.drag_forward < T::zero() || config.drag_backward < T::zero() {
            return Err(Error::invalid("crawler drag coefficients must be non-negative"));
        }
        let spec = EnvSpec {
            name: "crawler".to_string(),
            joint_count: 1,
            obs_dim: 4,
            control_period: config.control_period,
            episode_horizon: config.episode_horizon,
            actuation_mode: ActuationMode::Position,
            action_bounds: vec![(-config.rest_length, config.rest_length)],
            force_dim: 1,
        };
        spec.validate()?;
        let substeps = exact_ratio(config.control_period, T::lit(PHYSICS_DT))?;
        let max_steps = spec.episode_steps();
        let mut env = Self {
            state: Self::rest_state(&config),
            config,
            spec,
            substeps,
            steps: 0,
            max_steps,
            done: false,
            force: ForceSchedule::idle(1),
            energy: EnergyLedger::default(),
        };
        env.reset(0)?;
        Ok(env)
    }

    fn rest_state(config: &CrawlerConfig<T>) -> CrawlerState<T> {
        let half = config.rest_length * T::lit(0.5);
        CrawlerState {
            x1: -half,
            x2: half,
            v1: T::zero(),
            v2: T::zero(),
            time: T::zero(),
        }
    }

    pub fn config(&self) -> &CrawlerConfig<T> {
        &self.config
    }

    pub fn state(&self) -> &CrawlerState<T> {
        &self.state
    }

    pub fn energy(&self) -> &EnergyLedger<T> {
        &self.energy
    }

    fn observe(&self) -> Vec<T> {
        let s = &self.state;
        vec![s.elongation(self.config.rest_length), s.v2 - s.v1, s.v1, s.v2]
    }

    fn drag(&self, v: T) -> T {
        let c = if v > T::zero() {
            self.config.drag_forward
        } else {
            self.config.drag_backward
        };
        -c * v
    }

    fn kinetic(&self) -> T {
        T::lit(0.5) * self.config.mass * (self.state.v1 * self.state.v1 + self.state.v2 * self.state.v2)
    }

    fn substep(&mut self, target: T, external: T) {
        let dt = T::lit(PHYSICS_DT);
        let half = T::lit(0.5);
        let s = self.state.clone();
        let elongation = s.elongation(self.config.rest_length);
        let actuator = torque_one(&self.config.gains, target - elongation, s.v2 - s.v1);
        let drag1 = self.drag(s.v1);
        let drag2 = self.drag(s.v2);
        let inv_m = T::one() / self.config.mass;
        let v1 = s.v1 + (drag1 - actuator + external) * inv_m * dt;
        let v2 = s.v2 + (drag2 + actuator) * inv_m * dt;
        let mean1 = (s.v1 + v1) * half;
        let mean2 = (s.v2 + v2) * half;
        self.energy.actuator_work += actuator * (mean2 - mean1) * dt;
        self.energy.drag_dissipation -= (drag1 * mean1 + drag2 * mean2) * dt;
        self.energy.external_work += external * mean1 * dt;
        self.state = CrawlerState {
            x1: s.x1 + v1 * dt,
            x2: s.x2 + v2 * dt,
            v1,
            v2,
            time: s.time + dt,
        };
        self.energy.kinetic = self.kinetic();
    }
}

impl<T: Scalar> Environment<T> for Crawler<T> {
    fn spec(&self) -> &EnvSpec<T> {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<T>> {
        self.state = Self::rest_state(&self.config);
        self.steps = 0;
        self.done = false;
        self.force = ForceSchedule::idle(1);
        self.energy = EnergyLedger::default();
        Ok(self.observe())
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        check_action(&self.spec, action)?;
        if self.done {
            return Err(Error::invalid("episode is over; call reset"));
        }
        let external = self.force.take().map_or(T::zero(), |f| f[0]);
        let before = self.state.center();
        for _ in 0..self.substeps {
            self.substep(action[0], external);
        }
        self.steps += 1;
        let truncated = self.steps >= self.max_steps;
        if !self.state.is_finite() {
            log::error!("crawler state became non-finite at step {}", self.steps);
            self.done = true;
            return Ok(StepResult {
                observation: vec![T::zero(); self.spec.obs_dim],
                reward: T::zero(),
                terminated: true,
                truncated,
            });
        }
        self.done = truncated;
        Ok(StepResult {
            observation: self.observe(),
            reward: self.state.center() - before,
            terminated: false,
            truncated,
        })
    }

    /// The force acts on the rear mass along the line of motion.
    fn apply_external_force(&mut self, force: &[T], duration_steps: usize) -> Result<()> {
        self.force.set(force, duration_steps)
    }

    fn joint_state(&self) -> Option<JointState<T>> {
        Some(JointState {
            positions: vec![self.state.elongation(self.config.rest_length)],
            velocities: vec![self.state.v2 - self.state.v1],
        })
    }

    fn physical_state(&self) -> Vec<T> {
        let s = &self.state;
        vec![s.x1, s.x2, s.v1, s.v2]
    }
}
