//! Phase-switched sinusoidal joint trajectory generators.
//!
//! Every joint `i` follows
//!
//! ```text
//! q_i(t)  = a_i * sin(theta_i(t) + phi_i) + b_i
//! dtheta_i/dt = omega_swing   if sin(theta_i + phi_i) > 0
//!             = omega_stance  otherwise
//! ```
//!
//! The two frequencies are shared by all joints. Three ablated variants drop
//! the phase-dependent frequency, the per-joint phase shift, or both. Nothing
//! here observes the robot: a trajectory can be computed once for a whole
//! episode with [`precompute_trajectory`].

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::scalar::Scalar;

/// Largest phase integration step accepted by [`phase_step`], in seconds.
pub const MAX_PHASE_DT: f64 = 1e-3;

/// Default phase integration step, in seconds.
pub const DEFAULT_PHASE_DT: f64 = 1e-3;

// Relative slack on the phase step upper bound.
const DIVISIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams<T> {
    pub amplitudes: Vec<T>,
    pub offsets: Vec<T>,
    pub phase_shifts: Vec<T>,
    pub omega_swing: T,
    pub omega_stance: T,
}

impl<T: Scalar> OscillatorParams<T> {
    pub fn new(
        amplitudes: Vec<T>,
        offsets: Vec<T>,
        phase_shifts: Vec<T>,
        omega_swing: T,
        omega_stance: T,
    ) -> Result<Self> {
        let params = Self {
            amplitudes,
            offsets,
            phase_shifts,
            omega_swing,
            omega_stance,
        };
        params.validate()?;
        Ok(params)
    }

    /// Same amplitude, offset and phase for every joint.
    pub fn uniform(joints: usize, amplitude: T, offset: T, omega_swing: T, omega_stance: T) -> Result<Self> {
        Self::new(
            vec![amplitude; joints],
            vec![offset; joints],
            vec![T::zero(); joints],
            omega_swing,
            omega_stance,
        )
    }

    pub fn joint_count(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.amplitudes.len();
        ensure!(n >= 1, "oscillator needs at least one joint");
        ensure!(
            self.offsets.len() == n && self.phase_shifts.len() == n,
            "amplitudes ({n}), offsets ({}) and phase shifts ({}) differ in length",
            self.offsets.len(),
            self.phase_shifts.len()
        );
        ensure!(
            self.omega_swing > T::zero() && self.omega_swing.is_finite(),
            "omega_swing must be positive and finite, got {}",
            self.omega_swing
        );
        ensure!(
            self.omega_stance > T::zero() && self.omega_stance.is_finite(),
            "omega_stance must be positive and finite, got {}",
            self.omega_stance
        );
        let all_finite = self
            .amplitudes
            .iter()
            .chain(&self.offsets)
            .chain(&self.phase_shifts)
            .all(|v| v.is_finite());
        ensure!(all_finite, "oscillator parameters must be finite");
        Ok(())
    }

    /// Period of one full cycle of the phase-switched oscillator.
    pub fn period(&self, variant: PolicyVariant) -> T {
        if variant.switches_frequency() {
            T::PI() / self.omega_swing + T::PI() / self.omega_stance
        } else {
            T::lit(2.0) * T::PI() / self.omega_swing
        }
    }
}

/// Which terms of the oscillator are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVariant {
    #[default]
    Full,
    /// Single frequency `omega_swing`, phase shifts kept.
    NoSwing,
    /// Phase-dependent frequency kept, all phase shifts forced to zero.
    NoPhase,
    NoPhaseNoSwing,
}

impl PolicyVariant {
    pub const ALL: [PolicyVariant; 4] = [
        PolicyVariant::Full,
        PolicyVariant::NoSwing,
        PolicyVariant::NoPhase,
        PolicyVariant::NoPhaseNoSwing,
    ];

    pub fn uses_phase_shift(self) -> bool {
        matches!(self, PolicyVariant::Full | PolicyVariant::NoSwing)
    }

    pub fn switches_frequency(self) -> bool {
        matches!(self, PolicyVariant::Full | PolicyVariant::NoPhase)
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyVariant::Full => "full",
            PolicyVariant::NoSwing => "no_swing",
            PolicyVariant::NoPhase => "no_phase",
            PolicyVariant::NoPhaseNoSwing => "no_phase_no_swing",
        }
    }

    #[inline]
    fn effective_shift<T: Scalar>(self, phi: T) -> T {
        if self.uses_phase_shift() {
            phi
        } else {
            T::zero()
        }
    }
}

impl std::str::FromStr for PolicyVariant {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| crate::error::Error::invalid(format!("unknown policy variant `{s}`")))
    }
}

impl std::fmt::Display for PolicyVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState<T> {
    pub theta: Vec<T>,
    pub time: T,
}

impl<T: Scalar> PhaseState<T> {
    /// All phases start at zero; the phase shifts absorb any initial offset.
    pub fn zeros(joints: usize) -> Self {
        Self {
            theta: vec![T::zero(); joints],
            time: T::zero(),
        }
    }
}

/// Advances every joint phase by one explicit Euler step.
///
/// The branch is chosen from the phase at the start of the step. At
/// `sin(theta + phi) == 0` the stance frequency is used.
pub fn phase_step<T: Scalar>(
    state: &PhaseState<T>,
    params: &OscillatorParams<T>,
    variant: PolicyVariant,
    dt: T,
) -> Result<PhaseState<T>> {
    ensure!(dt > T::zero(), "phase step must be positive, got {dt}");
    ensure!(
        dt <= T::lit(MAX_PHASE_DT * (1.0 + DIVISIBILITY_TOL)),
        "phase step {dt} exceeds {MAX_PHASE_DT} s"
    );
    ensure!(
        state.theta.len() == params.joint_count(),
        "phase state has {} joints, parameters have {}",
        state.theta.len(),
        params.joint_count()
    );
    let mut next = state.clone();
    advance_in_place(&mut next, params, variant, dt);
    Ok(next)
}

#[inline]
fn advance_in_place<T: Scalar>(state: &mut PhaseState<T>, params: &OscillatorParams<T>, variant: PolicyVariant, dt: T) {
    let swing = params.omega_swing * dt;
    let stance = params.omega_stance * dt;
    for (theta, &phi) in state.theta.iter_mut().zip(&params.phase_shifts) {
        let in_swing = !variant.switches_frequency() || (*theta + variant.effective_shift(phi)).sin() > T::zero();
        let rate = if in_swing { swing } else { stance };
        *theta += rate;
    }
    state.time += dt;
}

/// Desired joint positions for the current phases.
pub fn desired_position<T: Scalar>(
    state: &PhaseState<T>,
    params: &OscillatorParams<T>,
    variant: PolicyVariant,
) -> Result<Vec<T>> {
    ensure!(
        state.theta.len() == params.joint_count(),
        "phase state has {} joints, parameters have {}",
        state.theta.len(),
        params.joint_count()
    );
    let mut out = Vec::with_capacity(state.theta.len());
    fill_positions(state, params, variant, &mut out);
    Ok(out)
}

#[inline]
fn fill_positions<T: Scalar>(state: &PhaseState<T>, params: &OscillatorParams<T>, variant: PolicyVariant, out: &mut Vec<T>) {
    out.clear();
    out.extend(
        state
            .theta
            .iter()
            .zip(&params.amplitudes)
            .zip(&params.offsets)
            .zip(&params.phase_shifts)
            .map(|(((&theta, &a), &b), &phi)| a * (theta + variant.effective_shift(phi)).sin() + b),
    );
}

/// Desired joint positions sampled at the control rate for a whole episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub dt_control: T,
    joints: usize,
    positions: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn rows(&self) -> usize {
        self.positions.len().checked_div(self.joints).unwrap_or(0)
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    /// Desired positions at control tick `tick`.
    pub fn row(&self, tick: usize) -> &[T] {
        &self.positions[tick * self.joints..(tick + 1) * self.joints]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.positions.chunks_exact(self.joints.max(1))
    }

    pub fn column(&self, joint: usize) -> Vec<T> {
        self.iter_rows().map(|r| r[joint]).collect()
    }
}

/// Number of whole `step`s that fit in `span`, or an error when `span` is not
/// an integer multiple of `step`.
pub fn exact_ratio<T: Scalar>(span: T, step: T) -> Result<usize> {
    let ratio = (span / step).as_f64();
    let rounded = ratio.round();
    ensure!(
        rounded >= 1.0 && (ratio - rounded).abs() <= ratio_tolerance::<T>(rounded),
        "{span} is not an integer multiple of {step}"
    );
    Ok(rounded as usize)
}

/// Number of control ticks in an episode, `ceil(horizon / dt_control)`.
pub fn tick_count<T: Scalar>(horizon: T, dt_control: T) -> usize {
    let ratio = (horizon / dt_control).as_f64();
    (ratio - ratio_tolerance::<T>(ratio)).ceil().max(0.0) as usize
}

// Rounding slack for quotients of durations, scaled to the scalar's precision.
fn ratio_tolerance<T: Scalar>(ratio: f64) -> f64 {
    T::epsilon().as_f64() * 1e3 * ratio.abs().max(1.0)
}

/// Integrates the phases at `dt_phase` and samples the desired positions every
/// `dt_control`, starting with the tick at `t = 0`.
pub fn precompute_trajectory<T: Scalar>(
    params: &OscillatorParams<T>,
    variant: PolicyVariant,
    horizon: T,
    dt_control: T,
    dt_phase: T,
) -> Result<Trajectory<T>> {
    params.validate()?;
    ensure!(horizon > T::zero(), "horizon must be positive, got {horizon}");
    ensure!(dt_phase > T::zero(), "phase step must be positive, got {dt_phase}");
    ensure!(
        dt_phase <= T::lit(MAX_PHASE_DT * (1.0 + DIVISIBILITY_TOL)),
        "phase step {dt_phase} exceeds {MAX_PHASE_DT} s"
    );
    ensure!(
        dt_control >= dt_phase,
        "control period {dt_control} is shorter than the phase step {dt_phase}"
    );
    let substeps = exact_ratio(dt_control, dt_phase)?;
    let rows = tick_count(horizon, dt_control);
    let joints = params.joint_count();

    let mut state = PhaseState::zeros(joints);
    let mut positions = Vec::with_capacity(rows * joints);
    let mut row = Vec::with_capacity(joints);
    for tick in 0..rows {
        if tick > 0 {
            for _ in 0..substeps {
                advance_in_place(&mut state, params, variant, dt_phase);
            }
        }
        fill_positions(&state, params, variant, &mut row);
        positions.extend_from_slice(&row);
    }
    Ok(Trajectory {
        dt_control,
        joints,
        positions,
    })
}
