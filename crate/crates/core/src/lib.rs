//! Open-loop oscillator controllers for locomotion.
//!
//! Joint trajectories come from phase-switched sinusoidal oscillators
//! ([`oscillator`]) whose few parameters ([`search_space`]) are tuned with a
//! box-constrained CMA-ES ([`cmaes`]) using episodic returns only. Built-in
//! low-dimensional plants ([`env`]), robustness wrappers ([`perturb`]) and
//! aggregate statistics ([`metrics`]) complete the toolkit; [`bridge`] talks
//! to external simulators over a line-delimited JSON protocol.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`, which is what the runner and
//! the bridge use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod cmaes;
pub mod env;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod oscillator;
pub mod pd;
pub mod perturb;
pub mod rollout;
pub mod scalar;
pub mod search_space;
pub mod seeds;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type OscillatorParams = oscillator::OscillatorParams<f64>;
pub type Trajectory = oscillator::Trajectory<f64>;
pub type PhaseState = oscillator::PhaseState<f64>;
pub type SearchSpace = search_space::SearchSpace<f64>;
pub type CmaState = cmaes::CmaState<f64>;
pub type Candidate = cmaes::Candidate<f64>;
pub type PdGains = pd::PdGains<f64>;

pub use oscillator::PolicyVariant;
pub use search_space::Preset;
