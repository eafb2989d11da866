//! Purcell's three-link swimmer in Stokes flow.
//!
//! Three rigid links of length `2l` are joined by two hinges. The joint
//! angles track the commanded positions through a rate-limited first-order
//! law and the body motion follows from instantaneous force and torque
//! balance: with no inertia, the drag wrench of the whole assembly plus any
//! external force must vanish. Drag uses resistive-force theory,
//!
//! ```text
//! f(s) = -xi_t (v . t) t - xi_n (v . n) n
//! ```
//!
//! integrated along each link with 5-point Gauss-Legendre quadrature. The
//! balance is a 3x3 symmetric positive-definite system for the body velocity
//! `(xdot, ydot, headingdot)` of the center link.
//!
//! Geometry in the body frame (heading along +x, origin at the center link
//! midpoint):
//!
//! * center link: `s e0`, `s in [-l, l]`, `e0 = (1, 0)`
//! * rear link: `(-l, 0) + s (-cos a1, -sin a1)`, `s in [0, 2l]`
//! * front link: `(l, 0) + s (cos a2, sin a2)`, `s in [0, 2l]`
//!
//! The pose is advanced with classical RK4 over each 1 ms substep with the
//! joint angles interpolated linearly, which keeps reciprocal strokes free of
//! spurious drift.

use serde::{Deserialize, Serialize};

use super::{check_action, ActuationMode, EnvSpec, Environment, ForceSchedule, JointState, StepResult, PHYSICS_DT};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, SquareMatrix};
use crate::oscillator::exact_ratio;
use crate::scalar::{clamp, Scalar};

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurcellConfig<T> {
    /// Half link length `l`; each link is `2l` long.
    pub half_length: T,
    pub drag_tangential: T,
    pub drag_normal: T,
    /// Gain of the joint tracking law.
    pub tracking_gain: T,
    /// Joint rate limit (rad/s).
    pub rate_limit: T,
    /// Joint angle limit (rad).
    pub angle_limit: T,
    pub control_period: T,
    pub episode_horizon: T,
}

impl<T: Scalar> Default for PurcellConfig<T> {
    fn default() -> Self {
        Self {
            half_length: T::lit(0.5),
            drag_tangential: T::one(),
            drag_normal: T::lit(2.0),
            tracking_gain: T::lit(20.0),
            rate_limit: T::lit(4.0),
            angle_limit: T::lit(2.0 * std::f64::consts::PI / 3.0),
            control_period: T::lit(0.05),
            episode_horizon: T::lit(20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurcellSwimmerState<T> {
    pub x: T,
    pub y: T,
    pub heading: T,
    pub alpha: [T; 2],
    pub alpha_rate: [T; 2],
    pub time: T,
}

impl<T: Scalar> PurcellSwimmerState<T> {
    fn at_rest() -> Self {
        Self {
            x: T::zero(),
            y: T::zero(),
            heading: T::zero(),
            alpha: [T::zero(); 2],
            alpha_rate: [T::zero(); 2],
            time: T::zero(),
        }
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.heading, self.alpha[0], self.alpha[1]]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Resistance of the assembly in the body frame: `matrix * u` is minus the
/// drag wrench produced by body velocity `u`, `joint_wrench` is the drag
/// wrench produced by the joint rates alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Resistance<T> {
    pub matrix: SquareMatrix<T>,
    pub joint_wrench: [T; 3],
}

#[derive(Debug, Clone)]
pub struct PurcellSwimmer<T> {
    config: PurcellConfig<T>,
    spec: EnvSpec<T>,
    substeps: usize,
    state: PurcellSwimmerState<T>,
    steps: usize,
    max_steps: usize,
    done: bool,
    force: ForceSchedule<T>,
}

impl<T: Scalar> PurcellSwimmer<T> {
    pub fn new(config: PurcellConfig<T>) -> Result<Self> {
        let positive = [
            config.half_length,
            config.drag_tangential,
            config.drag_normal,
            config.tracking_gain,
            config.rate_limit,
            config.angle_limit,
        ];
        if !positive.iter().all(|v| *v > T::zero() && v.is_finite()) {
            return Err(Error::invalid("swimmer constants must be positive and finite"));
        }
        let limit = config.angle_limit;
        let spec = EnvSpec {
            name: "purcell_swimmer".to_string(),
            joint_count: 2,
            obs_dim: 5,
            control_period: config.control_period,
            episode_horizon: config.episode_horizon,
            actuation_mode: ActuationMode::Position,
            action_bounds: vec![(-limit, limit); 2],
            force_dim: 2,
        };
        spec.validate()?;
        let substeps = exact_ratio(config.control_period, T::lit(PHYSICS_DT))?;
        let max_steps = spec.episode_steps();
        Ok(Self {
            config,
            spec,
            substeps,
            state: PurcellSwimmerState::at_rest(),
            steps: 0,
            max_steps,
            done: false,
            force: ForceSchedule::idle(2),
        })
    }

    pub fn config(&self) -> &PurcellConfig<T> {
        &self.config
    }

    pub fn state(&self) -> &PurcellSwimmerState<T> {
        &self.state
    }

    /// Resistance matrix and joint-driven drag wrench for joint angles
    /// `alpha` and rates `rates`, in the body frame.
    pub fn resistance(&self, alpha: [T; 2], rates: [T; 2]) -> Resistance<T> {
        let l = self.config.half_length;
        let (xt, xn) = (self.config.drag_tangential, self.config.drag_normal);
        let two_l = l + l;
        let (s1, c1) = alpha[0].sin_cos();
        let (s2, c2) = alpha[1].sin_cos();
        // (anchor, unit tangent, s range, joint rate)
        let links = [
            ((T::zero(), T::zero()), (T::one(), T::zero()), (-l, l), T::zero()),
            ((-l, T::zero()), (-c1, -s1), (T::zero(), two_l), rates[0]),
            ((l, T::zero()), (c2, s2), (T::zero(), two_l), rates[1]),
        ];
        let mut r = [[T::zero(); 3]; 3];
        let mut jw = [T::zero(); 3];
        let half = T::lit(0.5);
        for (anchor, e, (lo, hi), rate) in links {
            let n = (-e.1, e.0);
            let mid = (lo + hi) * half;
            let span = (hi - lo) * half;
            for (&node, &weight) in GAUSS_NODES.iter().zip(&GAUSS_WEIGHTS) {
                let s = mid + span * T::lit(node);
                let w = span * T::lit(weight);
                let p = (anchor.0 + s * e.0, anchor.1 + s * e.1);
                let basis = [(T::one(), T::zero()), (T::zero(), T::one()), (-p.1, p.0)];
                // K g = xi_t (g.e) e + xi_n (g.n) n
                let kg = basis.map(|g| {
                    let gt = xt * (g.0 * e.0 + g.1 * e.1);
                    let gn = xn * (g.0 * n.0 + g.1 * n.1);
                    (gt * e.0 + gn * n.0, gt * e.1 + gn * n.1)
                });
                for a in 0..3 {
                    for b in 0..3 {
                        r[a][b] += w * (basis[a].0 * kg[b].0 + basis[a].1 * kg[b].1);
                    }
                    // joint velocity rate * s * n is purely normal
                    let kv = rate * s * xn;
                    jw[a] -= w * kv * (basis[a].0 * n.0 + basis[a].1 * n.1);
                }
            }
        }
        Resistance {
            matrix: SquareMatrix::from_row_major(3, r.iter().flatten().copied().collect()),
            joint_wrench: jw,
        }
    }

    /// World-frame body velocity `(xdot, ydot, headingdot)` of the center
    /// link for the given configuration and external force (applied at the
    /// center link midpoint, world frame).
    pub fn velocity_for(&self, heading: T, alpha: [T; 2], rates: [T; 2], force: [T; 2]) -> Result<[T; 3]> {
        let res = self.resistance(alpha, rates);
        self.solve_body(&res, heading, force)
    }

    fn solve_body(&self, res: &Resistance<T>, heading: T, force: [T; 2]) -> Result<[T; 3]> {
        let (s, c) = heading.sin_cos();
        let fb = (c * force[0] + s * force[1], -s * force[0] + c * force[1]);
        let rhs = [res.joint_wrench[0] + fb.0, res.joint_wrench[1] + fb.1, res.joint_wrench[2]];
        let u = cholesky_solve(&res.matrix, &rhs)
            .map_err(|e| Error::Numerical(format!("swimmer resistance matrix: {e}")))?;
        Ok([c * u[0] - s * u[1], s * u[0] + c * u[1], u[2]])
    }

    fn substep(&mut self, target: &[T], force: [T; 2]) -> Result<()> {
        let dt = T::lit(PHYSICS_DT);
        let half_dt = dt * T::lit(0.5);
        let cfg = &self.config;
        let start = self.state.alpha;
        let mut rates = [T::zero(); 2];
        for j in 0..2 {
            let rate = clamp(cfg.tracking_gain * (target[j] - start[j]), -cfg.rate_limit, cfg.rate_limit);
            let next = clamp(start[j] + rate * dt, -cfg.angle_limit, cfg.angle_limit);
            rates[j] = (next - start[j]) / dt;
        }
        let at = |tau: T| [start[0] + rates[0] * tau, start[1] + rates[1] * tau];
        let r0 = self.resistance(start, rates);
        let r_mid = self.resistance(at(half_dt), rates);
        let r1 = self.resistance(at(dt), rates);

        let h0 = self.state.heading;
        let k1 = self.solve_body(&r0, h0, force)?;
        let k2 = self.solve_body(&r_mid, h0 + half_dt * k1[2], force)?;
        let k3 = self.solve_body(&r_mid, h0 + half_dt * k2[2], force)?;
        let k4 = self.solve_body(&r1, h0 + dt * k3[2], force)?;
        let two = T::lit(2.0);
        let sixth = dt / T::lit(6.0);
        let incr = |i: usize| sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);

        let s = &mut self.state;
        s.x += incr(0);
        s.y += incr(1);
        s.heading += incr(2);
        s.alpha = [start[0] + rates[0] * dt, start[1] + rates[1] * dt];
        s.alpha_rate = rates;
        s.time += dt;
        Ok(())
    }

    fn observe(&self) -> Vec<T> {
        let s = &self.state;
        vec![s.alpha[0], s.alpha[1], s.alpha_rate[0], s.alpha_rate[1], s.heading]
    }
}

impl<T: Scalar> Environment<T> for PurcellSwimmer<T> {
    fn spec(&self) -> &EnvSpec<T> {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<T>> {
        self.state = PurcellSwimmerState::at_rest();
        self.steps = 0;
        self.done = false;
        self.force = ForceSchedule::idle(2);
        Ok(self.observe())
    }

    fn step(&mut self, action: &[T]) -> Result<StepResult<T>> {
        check_action(&self.spec, action)?;
        if self.done {
            return Err(Error::invalid("episode is over; call reset"));
        }
        let force = self.force.take().map_or([T::zero(); 2], |f| [f[0], f[1]]);
        let before = self.state.x;
        let mut failure = None;
        for _ in 0..self.substeps {
            if let Err(e) = self.substep(action, force) {
                failure = Some(e);
                break;
            }
        }
        self.steps += 1;
        let truncated = self.steps >= self.max_steps;
        if failure.is_some() || !self.state.is_finite() {
            match failure {
                Some(e) => log::error!("swimmer step {} failed: {e}", self.steps),
                None => log::error!("swimmer state became non-finite at step {}", self.steps),
            }
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
            reward: self.state.x - before,
            terminated: false,
            truncated,
        })
    }

    /// The force acts at the center link midpoint, in the world frame.
    fn apply_external_force(&mut self, force: &[T], duration_steps: usize) -> Result<()> {
        self.force.set(force, duration_steps)
    }

    fn joint_state(&self) -> Option<JointState<T>> {
        Some(JointState {
            positions: self.state.alpha.to_vec(),
            velocities: self.state.alpha_rate.to_vec(),
        })
    }

    fn physical_state(&self) -> Vec<T> {
        let s = &self.state;
        vec![s.x, s.y, s.heading, s.alpha[0], s.alpha[1], s.alpha_rate[0], s.alpha_rate[1]]
    }
}
