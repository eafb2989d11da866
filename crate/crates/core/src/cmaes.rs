//! Box-constrained CMA-ES with an ask/tell interface.
//!
//! The optimizer works in the unit box `[0, 1]^d`. Samples are clipped
//! coordinatewise to the box before they are handed out, and the clipped
//! points are the ones used in the update. Fitness is maximized: higher scores
//! are better.
//!
//! Strategy constants follow Hansen's standard defaults for the
//! `(mu/mu_w, lambda)` strategy with cumulative step-size adaptation and a
//! rank-one plus rank-mu covariance update:
//!
//! | constant  | value                                                        |
//! |-----------|--------------------------------------------------------------|
//! | `mu`      | `floor(lambda / 2)`                                          |
//! | `w_i`     | `ln((lambda + 1) / 2) - ln(i)`, normalized to sum to one     |
//! | `mu_eff`  | `1 / sum(w_i^2)`                                             |
//! | `c_sigma` | `(mu_eff + 2) / (d + mu_eff + 5)`                            |
//! | `d_sigma` | `1 + 2 max(0, sqrt((mu_eff - 1) / (d + 1)) - 1) + c_sigma`   |
//! | `c_c`     | `(4 + mu_eff / d) / (d + 4 + 2 mu_eff / d)`                  |
//! | `c_1`     | `2 / ((d + 1.3)^2 + mu_eff)`                                 |
//! | `c_mu`    | `min(1 - c_1, 2 (mu_eff - 2 + 1/mu_eff) / ((d + 2)^2 + mu_eff))` |
//! | `chi_d`   | `sqrt(d) (1 - 1/(4d) + 1/(21 d^2))`                          |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Error, Result};
use crate::linalg::{SquareMatrix, SymmetricEigen};
use crate::oscillator::OscillatorParams;
use crate::scalar::{clamp, Scalar};
use crate::search_space::SearchSpace;

pub const DEFAULT_POPULATION: usize = 30;
pub const INITIAL_SIGMA: f64 = 0.25;
/// Eigenvalues of the covariance are floored here after every update.
pub const EIGEN_FLOOR: f64 = 1e-14;
/// `should_stop` fires when `sigma * sqrt(max eig C)` drops below this.
pub const MIN_SPREAD: f64 = 1e-12;
pub const STALL_GENERATIONS: usize = 50;
pub const STALL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConstants<T> {
    pub mu: usize,
    pub weights: Vec<T>,
    pub mu_eff: T,
    pub c_sigma: T,
    pub d_sigma: T,
    pub c_c: T,
    pub c_1: T,
    pub c_mu: T,
    pub chi_d: T,
}

impl<T: Scalar> StrategyConstants<T> {
    pub fn new(dim: usize, lambda: usize) -> Self {
        let d = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (d + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d);
        let c_1 = 2.0 / ((d + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0).powi(2) + mu_eff));
        let chi_d = d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));
        Self {
            mu,
            weights: weights.into_iter().map(T::lit).collect(),
            mu_eff: T::lit(mu_eff),
            c_sigma: T::lit(c_sigma),
            d_sigma: T::lit(d_sigma),
            c_c: T::lit(c_c),
            c_1: T::lit(c_1),
            c_mu: T::lit(c_mu),
            chi_d: T::lit(chi_d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    /// Index within the generation, `0..lambda`.
    pub id: usize,
    /// Point in the unit box after clipping.
    pub x: Vec<T>,
    /// The raw Gaussian sample before clipping.
    pub sample: Vec<T>,
    /// Decoded parameters when the state was built from a search space.
    pub params: Option<OscillatorParams<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    SpreadCollapsed,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaState<T> {
    dim: usize,
    lambda: usize,
    seed: u64,
    mean: Vec<T>,
    sigma: T,
    cov: SquareMatrix<T>,
    eigen: SymmetricEigen<T>,
    path_sigma: Vec<T>,
    path_c: Vec<T>,
    generation: u64,
    constants: StrategyConstants<T>,
    rng: ChaCha8Rng,
    pending: Option<Vec<Vec<T>>>,
    space: Option<SearchSpace<T>>,
}

impl<T: Scalar> CmaState<T> {
    /// Starts at the center of the unit box with `sigma = 0.25` and `C = I`.
    pub fn init(space: &SearchSpace<T>, seed: u64, lambda: usize) -> Result<Self> {
        space.validate()?;
        let dim = space.param_count();
        ensure!(dim >= 1, "search space has no free parameters");
        let mut state = Self::with_dimension(dim, seed, lambda)?;
        state.space = Some(space.clone());
        Ok(state)
    }

    /// Same as [`init`](Self::init) on a bare `dim`-dimensional unit box.
    pub fn with_dimension(dim: usize, seed: u64, lambda: usize) -> Result<Self> {
        ensure!(dim >= 1, "dimension must be at least 1");
        ensure!(lambda >= 2, "population size must be at least 2, got {lambda}");
        let cov = SquareMatrix::identity(dim);
        Ok(Self {
            dim,
            lambda,
            seed,
            mean: vec![T::lit(0.5); dim],
            sigma: T::lit(INITIAL_SIGMA),
            eigen: SymmetricEigen::new(&cov)?,
            cov,
            path_sigma: vec![T::zero(); dim],
            path_c: vec![T::zero(); dim],
            generation: 0,
            constants: StrategyConstants::new(dim, lambda),
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            space: None,
        })
    }

    pub fn with_sigma(mut self, sigma: T) -> Result<Self> {
        ensure!(sigma > T::zero() && sigma.is_finite(), "sigma must be positive, got {sigma}");
        self.sigma = sigma;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn population_size(&self) -> usize {
        self.lambda
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn mean(&self) -> &[T] {
        &self.mean
    }
    pub fn sigma(&self) -> T {
        self.sigma
    }
    pub fn covariance(&self) -> &SquareMatrix<T> {
        &self.cov
    }
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigen.values
    }
    pub fn path_sigma(&self) -> &[T] {
        &self.path_sigma
    }
    pub fn path_c(&self) -> &[T] {
        &self.path_c
    }
    pub fn generation(&self) -> u64 {
        self.generation
    }
    pub fn constants(&self) -> &StrategyConstants<T> {
        &self.constants
    }
    pub fn search_space(&self) -> Option<&SearchSpace<T>> {
        self.space.as_ref()
    }

    /// `sigma * sqrt(largest eigenvalue of C)`.
    pub fn spread(&self) -> T {
        self.sigma * self.eigen.max_value().max(T::zero()).sqrt()
    }

    /// Samples `lambda` candidates `clip(m + sigma * N(0, C))`.
    ///
    /// Asking again before telling discards the previous batch.
    pub fn ask(&mut self) -> Result<Vec<Candidate<T>>> {
        if !self.cov.is_finite() || !self.eigen.values.iter().all(|v| v.is_finite() && *v > T::zero()) {
            return Err(Error::Numerical("covariance is not positive-definite".into()));
        }
        let scales: Vec<T> = self.eigen.values.iter().map(|v| v.sqrt()).collect();
        let mut z = vec![T::zero(); self.dim];
        let mut out = Vec::with_capacity(self.lambda);
        for id in 0..self.lambda {
            for (zi, &s) in z.iter_mut().zip(&scales) {
                let draw: f64 = StandardNormal.sample(&mut self.rng);
                *zi = T::lit(draw) * s;
            }
            let y = self.eigen.vectors.mul_vec(&z);
            let sample: Vec<T> = self.mean.iter().zip(&y).map(|(&m, &yi)| m + self.sigma * yi).collect();
            let x: Vec<T> = sample.iter().map(|&v| clamp(v, T::zero(), T::one())).collect();
            let params = match &self.space {
                Some(space) => Some(space.decode(&x)?),
                None => None,
            };
            out.push(Candidate { id, x, sample, params });
        }
        self.pending = Some(out.iter().map(|c| c.x.clone()).collect());
        Ok(out)
    }

    /// Updates the distribution from the scores of the last [`ask`](Self::ask).
    ///
    /// Only the ranking of the scores matters; ties are broken by candidate id
    /// so the result does not depend on the order of `fitnesses`.
    pub fn tell(&mut self, fitnesses: &[(usize, T)]) -> Result<()> {
        let Some(points) = self.pending.as_ref() else {
            return Err(Error::invalid("tell called without a preceding ask"));
        };
        ensure!(
            fitnesses.len() == self.lambda,
            "expected {} scores, got {}",
            self.lambda,
            fitnesses.len()
        );
        let mut seen = vec![false; self.lambda];
        for &(id, score) in fitnesses {
            ensure!(id < self.lambda, "unknown candidate id {id}");
            ensure!(!seen[id], "duplicate candidate id {id}");
            ensure!(score.is_finite(), "score of candidate {id} is not finite: {score}");
            seen[id] = true;
        }
        let mut ranked: Vec<(usize, T)> = fitnesses.to_vec();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));

        let d = self.dim;
        let k = &self.constants;
        let two = T::lit(2.0);
        let steps: Vec<Vec<T>> = ranked[..k.mu]
            .iter()
            .map(|&(id, _)| {
                points[id]
                    .iter()
                    .zip(&self.mean)
                    .map(|(&x, &m)| (x - m) / self.sigma)
                    .collect()
            })
            .collect();
        let mut y_w = vec![T::zero(); d];
        for (w, y) in k.weights.iter().zip(&steps) {
            for (acc, &yi) in y_w.iter_mut().zip(y) {
                *acc += *w * yi;
            }
        }
        for (m, &yi) in self.mean.iter_mut().zip(&y_w) {
            *m += self.sigma * yi;
        }

        // C^{-1/2} y_w = B D^{-1/2} B^T y_w
        let b = &self.eigen.vectors;
        let mut rotated = vec![T::zero(); d];
        for (j, r) in rotated.iter_mut().enumerate() {
            let mut acc = T::zero();
            for i in 0..d {
                acc += b[(i, j)] * y_w[i];
            }
            *r = acc / self.eigen.values[j].sqrt();
        }
        let whitened = b.mul_vec(&rotated);

        let cs = k.c_sigma;
        let sigma_gain = (cs * (two - cs) * k.mu_eff).sqrt();
        for (p, &w) in self.path_sigma.iter_mut().zip(&whitened) {
            *p = (T::one() - cs) * *p + sigma_gain * w;
        }
        let ps_norm = norm(&self.path_sigma);
        let gens = T::lit(2.0 * (self.generation + 1) as f64);
        let ps_unbiased = ps_norm / (T::one() - (T::one() - cs).powf(gens)).sqrt();
        let h_sigma = ps_unbiased < (T::lit(1.4) + two / T::lit(d as f64 + 1.0)) * k.chi_d;

        let cc = k.c_c;
        let c_gain = (cc * (two - cc) * k.mu_eff).sqrt();
        for (p, &y) in self.path_c.iter_mut().zip(&y_w) {
            *p = (T::one() - cc) * *p + if h_sigma { c_gain * y } else { T::zero() };
        }

        let stall_correction = if h_sigma { T::zero() } else { k.c_1 * cc * (two - cc) };
        let decay = T::one() - k.c_1 - k.c_mu + stall_correction;
        for i in 0..d {
            for j in i..d {
                let mut rank_mu = T::zero();
                for (w, y) in k.weights.iter().zip(&steps) {
                    rank_mu += *w * y[i] * y[j];
                }
                let v = decay * self.cov[(i, j)] + k.c_1 * self.path_c[i] * self.path_c[j] + k.c_mu * rank_mu;
                self.cov[(i, j)] = v;
                self.cov[(j, i)] = v;
            }
        }
        self.cov.symmetrize();

        self.sigma *= ((cs / k.d_sigma) * (ps_norm / k.chi_d - T::one())).exp();
        if !self.sigma.is_finite() || self.sigma <= T::zero() {
            return Err(Error::Numerical(format!("step size degenerated to {}", self.sigma)));
        }

        let mut eigen = SymmetricEigen::new(&self.cov)?;
        let floor = T::lit(EIGEN_FLOOR);
        if eigen.values.iter().any(|&v| v < floor) {
            for v in &mut eigen.values {
                *v = v.max(floor);
            }
            self.cov = eigen.reconstruct();
        }
        self.eigen = eigen;
        self.generation += 1;
        self.pending = None;
        Ok(())
    }

    /// Checks the termination rules in order: evaluation budget, collapsed
    /// spread, and a best score that has not moved for
    /// [`STALL_GENERATIONS`] generations.
    ///
    /// `history` holds one best score per generation; a running maximum is
    /// taken internally so either per-generation or best-so-far series work.
    pub fn should_stop(&self, history: &[T], evaluations: usize, budget: usize) -> Option<StopReason> {
        if evaluations >= budget {
            return Some(StopReason::Budget);
        }
        if self.spread() < T::lit(MIN_SPREAD) {
            return Some(StopReason::SpreadCollapsed);
        }
        if history.len() >= STALL_GENERATIONS {
            let best_before = history[..history.len() - STALL_GENERATIONS + 1]
                .iter()
                .fold(T::neg_infinity(), |a, &b| a.max(b));
            let best_now = history.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            if best_now - best_before <= T::lit(STALL_TOLERANCE) {
                return Some(StopReason::Stalled);
            }
        }
        None
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}
