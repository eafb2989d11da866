//! The ask / evaluate / tell loop and its persisted record.

use std::time::Instant;

use openloop::cmaes::{CmaState, StopReason};
use openloop::env::registry::{self, DynEnv};
use openloop::oscillator::OscillatorParams;
use openloop::pd::PdGains;
use openloop::rollout::{run_episode, OpenLoopPolicy};
use openloop::search_space::SearchSpace;
use openloop::{seeds, PolicyVariant};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::Failure;

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best return within this generation.
    pub best: f64,
    /// Best return seen so far.
    pub best_so_far: f64,
    pub mean: f64,
    pub sigma: f64,
    /// Cumulative environment steps after this generation.
    pub env_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCandidate {
    pub fitness: f64,
    pub params: OscillatorParams<f64>,
    pub unit: Vec<f64>,
    pub generation: usize,
    pub candidate: usize,
    /// Environment seed the fitness was measured with.
    pub episode_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub record_version: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub budget_steps: usize,
    pub env_steps: usize,
    pub generations: Vec<GenerationRecord>,
    pub best: Option<BestCandidate>,
    pub stop_reason: Option<String>,
    /// False when the run was cut short by an error or could not start.
    pub complete: bool,
    pub error: Option<String>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    /// Equality ignoring wall time.
    pub fn same_trace(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_time_secs = 0.0;
        let mut b = other.clone();
        b.wall_time_secs = 0.0;
        a == b
    }
}

/// Builds one environment per worker plus the resolved space and gains.
pub struct Setup {
    pub envs: Vec<DynEnv>,
    pub space: SearchSpace<f64>,
    pub gains: Option<PdGains<f64>>,
    pub episode_steps: usize,
}

pub fn setup(config: &ExperimentConfig, workers: usize) -> Result<Setup, Failure> {
    let workers = workers.max(1);
    let mut envs = Vec::with_capacity(workers);
    for _ in 0..workers {
        envs.push(registry::make(&config.env, &config.env_options).map_err(Failure::from_env)?);
    }
    let spec = envs[0].spec().clone();
    let space = config.resolve_space(spec.joint_count)?;
    let gains = config.resolve_gains(&spec)?;
    Ok(Setup {
        envs,
        space,
        gains,
        episode_steps: spec.episode_steps(),
    })
}

pub fn episode_return(
    env: &mut DynEnv,
    params: &OscillatorParams<f64>,
    variant: PolicyVariant,
    dt_phase: f64,
    gains: Option<PdGains<f64>>,
    seed: u64,
) -> openloop::Result<(f64, usize)> {
    let mut policy = OpenLoopPolicy::new(params.clone(), variant, dt_phase, gains)?;
    let ep = run_episode(env, &mut policy, seed, false)?;
    Ok((ep.total_return, ep.steps))
}

/// Scores one generation. Candidates are dealt round-robin to the workers,
/// each owning its environment; results come back keyed by candidate id,
/// so the outcome does not depend on the number of workers.
fn evaluate_generation(
    envs: &mut [DynEnv],
    jobs: &[(usize, OscillatorParams<f64>, u64)],
    variant: PolicyVariant,
    dt_phase: f64,
    gains: Option<PdGains<f64>>,
) -> openloop::Result<Vec<(usize, f64, usize)>> {
    let workers = envs.len();
    let mut results: Vec<openloop::Result<(usize, f64, usize)>> = if workers == 1 {
        jobs.iter()
            .map(|(id, p, seed)| episode_return(&mut envs[0], p, variant, dt_phase, gains, *seed).map(|(r, s)| (*id, r, s)))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = envs
                .iter_mut()
                .enumerate()
                .map(|(w, env)| {
                    scope.spawn(move || {
                        jobs.iter()
                            .skip(w)
                            .step_by(workers)
                            .map(|(id, p, seed)| {
                                episode_return(env, p, variant, dt_phase, gains, *seed).map(|(r, s)| (*id, r, s))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    };
    results.sort_by_key(|r| r.as_ref().map(|t| t.0).unwrap_or(usize::MAX));
    results.into_iter().collect()
}

/// Runs one optimization for master seed `seed` with `workers` parallel
/// evaluators. Errors after construction yield an incomplete record rather
/// than an `Err`.
pub fn optimize(config: &ExperimentConfig, seed: u64, workers: usize) -> Result<RunRecord, Failure> {
    config.check()?;
    let started = Instant::now();
    let Setup {
        mut envs,
        space,
        gains,
        episode_steps,
    } = setup(config, workers)?;
    let budget = config.optimizer.effective_budget();
    let lambda = config.optimizer.population_size;
    let dt_phase = config.optimizer.dt_phase;
    let mut record = RunRecord {
        record_version: RECORD_VERSION,
        config_hash: config.hash(),
        config: config.clone(),
        seed,
        budget_steps: budget,
        env_steps: 0,
        generations: Vec::new(),
        best: None,
        stop_reason: None,
        complete: false,
        error: None,
        wall_time_secs: 0.0,
    };
    let mut cma = CmaState::init(&space, seeds::derive(seed, ["cmaes"]), lambda).map_err(|e| Failure::Config(e.to_string()))?;
    let mut history: Vec<f64> = Vec::new();

    let outcome: openloop::Result<()> = (|| {
        loop {
            if let Some(reason) = cma.should_stop(&history, record.env_steps, budget) {
                record.stop_reason = Some(format!("{reason:?}"));
                return Ok(());
            }
            if record.env_steps + lambda * episode_steps > budget {
                record.stop_reason = Some(format!("{:?}", StopReason::Budget));
                return Ok(());
            }
            let generation = record.generations.len();
            let candidates = cma.ask()?;
            let jobs: Vec<(usize, OscillatorParams<f64>, u64)> = candidates
                .iter()
                .map(|c| {
                    let params = c.params.clone().expect("state built from a search space");
                    (c.id, params, seeds::candidate(seed, generation, c.id))
                })
                .collect();
            let scored = evaluate_generation(&mut envs, &jobs, config.variant, dt_phase, gains)?;
            let steps: usize = scored.iter().map(|s| s.2).sum();
            record.env_steps += steps;
            let fitness: Vec<(usize, f64)> = scored.iter().map(|s| (s.0, s.1)).collect();
            cma.tell(&fitness)?;

            let (best_id, best) = fitness
                .iter()
                .copied()
                .fold((0, f64::NEG_INFINITY), |acc, (id, f)| if f > acc.1 { (id, f) } else { acc });
            if record.best.as_ref().is_none_or(|b| best > b.fitness) {
                record.best = Some(BestCandidate {
                    fitness: best,
                    params: jobs[best_id].1.clone(),
                    unit: candidates[best_id].x.clone(),
                    generation,
                    candidate: best_id,
                    episode_seed: jobs[best_id].2,
                });
            }
            history.push(best);
            let best_so_far = record.best.as_ref().map_or(best, |b| b.fitness);
            record.generations.push(GenerationRecord {
                generation,
                best,
                best_so_far,
                mean: fitness.iter().map(|f| f.1).sum::<f64>() / lambda as f64,
                sigma: cma.sigma(),
                env_steps: record.env_steps,
            });
            log::info!(
                "{} seed {seed} gen {generation}: best {best:.6} overall {best_so_far:.6} sigma {:.4}",
                config.env,
                cma.sigma()
            );
        }
    })();

    match outcome {
        Ok(()) => record.complete = !record.generations.is_empty(),
        Err(e) => {
            log::error!("run aborted: {e}");
            record.error = Some(e.to_string());
        }
    }
    record.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(record)
}
