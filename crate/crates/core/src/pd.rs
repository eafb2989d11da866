//! Proportional-derivative joint control.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::scalar::{clamp, Scalar};
use crate::search_space::Preset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains<T> {
    pub kp: T,
    pub kd: T,
    /// Symmetric torque clamp; `None` leaves the command unbounded.
    #[serde(default = "no_limit", skip_serializing_if = "Option::is_none")]
    pub torque_limit: Option<T>,
}

fn no_limit<T>() -> Option<T> {
    None
}

impl<T: Scalar> PdGains<T> {
    pub fn new(kp: T, kd: T, torque_limit: Option<T>) -> Result<Self> {
        let gains = Self { kp, kd, torque_limit };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.kp >= T::zero() && self.kp.is_finite(), "kp must be >= 0, got {}", self.kp);
        ensure!(self.kd >= T::zero() && self.kd.is_finite(), "kd must be >= 0, got {}", self.kd);
        if let Some(limit) = self.torque_limit {
            ensure!(limit > T::zero(), "torque limit must be > 0, got {limit}");
        }
        Ok(())
    }

    /// Default gains for the external tasks. The quadruped has no entry.
    pub fn for_preset(preset: Preset) -> Option<Self> {
        let (kp, kd) = match preset {
            Preset::Ant | Preset::HalfCheetah => (1.0, 0.05),
            Preset::Hopper | Preset::Walker2d => (10.0, 0.5),
            Preset::Swimmer => (7.0, 0.7),
            Preset::Quadruped => return None,
        };
        Some(Self {
            kp: T::lit(kp),
            kd: T::lit(kd),
            torque_limit: None,
        })
    }

    pub fn with_torque_limit(mut self, limit: Option<T>) -> Self {
        self.torque_limit = limit;
        self
    }
}

/// `tau_i = clamp(kp * (q_des_i - q_i) - kd * qdot_i, +-limit)`.
///
/// The desired velocity is taken as zero.
pub fn compute_torque<T: Scalar>(gains: &PdGains<T>, q_des: &[T], q: &[T], q_dot: &[T]) -> Result<Vec<T>> {
    ensure!(
        q_des.len() == q.len() && q.len() == q_dot.len(),
        "PD inputs differ in length: q_des {}, q {}, q_dot {}",
        q_des.len(),
        q.len(),
        q_dot.len()
    );
    Ok(q_des
        .iter()
        .zip(q)
        .zip(q_dot)
        .map(|((&target, &pos), &vel)| torque_one(gains, target - pos, vel))
        .collect())
}

#[inline]
pub(crate) fn torque_one<T: Scalar>(gains: &PdGains<T>, error: T, velocity: T) -> T {
    let tau = gains.kp * error - gains.kd * velocity;
    match gains.torque_limit {
        Some(limit) => clamp(tau, -limit, limit),
        None => tau,
    }
}
