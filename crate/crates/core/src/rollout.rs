//! Policies and the single episode loop shared by optimization, evaluation
//! and robustness sweeps.

use crate::env::{ActuationMode, EnvSpec, Environment, JointState};
use crate::error::{ensure, Error, Result};
use crate::oscillator::{precompute_trajectory, OscillatorParams, PolicyVariant, Trajectory};
use crate::pd::{compute_torque, PdGains};
use crate::scalar::Scalar;

pub trait Policy<T: Scalar> {
    /// Called once before each episode.
    fn begin(&mut self, spec: &EnvSpec<T>) -> Result<()>;

    /// Action for control step `tick`. `joints` is the plant's own joint
    /// reading when it offers one.
    fn act(&mut self, tick: usize, observation: &[T], joints: Option<&JointState<T>>) -> Result<Vec<T>>;
}

/// Replays a precomputed oscillator trajectory. Position-actuated plants get
/// the desired angles directly; torque-actuated ones get PD torques.
#[derive(Debug, Clone)]
pub struct OpenLoopPolicy<T> {
    params: OscillatorParams<T>,
    variant: PolicyVariant,
    dt_phase: T,
    gains: Option<PdGains<T>>,
    trajectory: Option<Trajectory<T>>,
    mode: ActuationMode,
}

impl<T: Scalar> OpenLoopPolicy<T> {
    pub fn new(params: OscillatorParams<T>, variant: PolicyVariant, dt_phase: T, gains: Option<PdGains<T>>) -> Result<Self> {
        params.validate()?;
        if let Some(g) = &gains {
            g.validate()?;
        }
        Ok(Self {
            params,
            variant,
            dt_phase,
            gains,
            trajectory: None,
            mode: ActuationMode::Position,
        })
    }

    pub fn params(&self) -> &OscillatorParams<T> {
        &self.params
    }

    pub fn trajectory(&self) -> Option<&Trajectory<T>> {
        self.trajectory.as_ref()
    }
}

impl<T: Scalar> Policy<T> for OpenLoopPolicy<T> {
    fn begin(&mut self, spec: &EnvSpec<T>) -> Result<()> {
        ensure!(
            spec.joint_count == self.params.joint_count(),
            "policy drives {} joints but {} has {}",
            self.params.joint_count(),
            spec.name,
            spec.joint_count
        );
        if spec.actuation_mode == ActuationMode::Torque && self.gains.is_none() {
            return Err(Error::invalid(format!("{} is torque-actuated and needs PD gains", spec.name)));
        }
        let fresh = match &self.trajectory {
            Some(t) => t.dt_control != spec.control_period || t.rows() != spec.episode_steps(),
            None => true,
        };
        if fresh {
            self.trajectory = Some(precompute_trajectory(
                &self.params,
                self.variant,
                spec.episode_horizon,
                spec.control_period,
                self.dt_phase,
            )?);
        }
        self.mode = spec.actuation_mode;
        Ok(())
    }

    fn act(&mut self, tick: usize, _observation: &[T], joints: Option<&JointState<T>>) -> Result<Vec<T>> {
        let trajectory = self
            .trajectory
            .as_ref()
            .ok_or_else(|| Error::invalid("begin must be called before act"))?;
        ensure!(tick < trajectory.rows(), "tick {tick} is past the trajectory end");
        let q_des = trajectory.row(tick);
        match self.mode {
            ActuationMode::Position => Ok(q_des.to_vec()),
            ActuationMode::Torque => {
                let joints = joints.ok_or_else(|| Error::Unsupported("torque control needs joint readings".into()))?;
                let gains = self.gains.as_ref().expect("checked in begin");
                compute_torque(gains, q_des, &joints.positions, &joints.velocities)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode<T> {
    pub total_return: T,
    pub steps: usize,
    pub terminated: bool,
    /// Applied actions, one row per step, when recording was requested.
    pub actions: Vec<Vec<T>>,
}

/// Runs one episode from `reset(seed)` until termination or truncation.
pub fn run_episode<T: Scalar, E, P>(env: &mut E, policy: &mut P, seed: u64, record: bool) -> Result<Episode<T>>
where
    E: Environment<T> + ?Sized,
    P: Policy<T> + ?Sized,
{
    let spec = env.spec().clone();
    policy.begin(&spec)?;
    let mut observation = env.reset(seed)?;
    let limit = spec.episode_steps();
    let mut episode = Episode {
        total_return: T::zero(),
        steps: 0,
        terminated: false,
        actions: Vec::new(),
    };
    while episode.steps < limit {
        let joints = env.joint_state();
        let action = policy.act(episode.steps, &observation, joints.as_ref())?;
        let result = env.step(&action)?;
        if record {
            episode.actions.push(action);
        }
        episode.total_return += result.reward;
        episode.steps += 1;
        observation = result.observation;
        if result.terminated {
            episode.terminated = true;
            break;
        }
        if result.truncated {
            break;
        }
    }
    Ok(episode)
}
