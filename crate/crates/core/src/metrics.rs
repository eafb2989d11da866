//! Normalized scores and aggregate statistics over seeds and environments.
//!
//! Conventions:
//!
//! * Normalization maps the random-policy anchor to 0 and the open-loop
//!   reference to 1: `s = (r - r_min) / (r_max - r_min)`. Each anchor is the
//!   mean final return of its method on that environment.
//! * The interquartile mean sorts the values, drops `floor(n/4)` from each
//!   end and averages what is left.
//! * The median of an even-length list is the mean of the two middle values.
//! * Bootstrap intervals resample seeds with replacement inside every
//!   (environment, method) stratum and report linear-interpolated percentiles
//!   of the recomputed statistic.
//! * Probability of improvement counts ties as one half. Across several
//!   environments it is computed per environment and averaged.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::seeds;

pub const DEFAULT_RESAMPLES: usize = 2000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const MIN_RESAMPLES: usize = 100;
pub const RANDOM_METHOD: &str = "random";
pub const REFERENCE_METHOD: &str = "open_loop/full";

pub fn normalize(r: f64, r_min: f64, r_max: f64) -> Result<f64> {
    ensure!(r_max != r_min, "normalization anchors coincide at {r_min}");
    Ok((r - r_min) / (r_max - r_min))
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    ensure!(!values.is_empty(), "statistic of an empty list");
    ensure!(values.iter().all(|v| !v.is_nan()), "statistic of a list containing NaN");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn iqm(values: &[f64]) -> Result<f64> {
    let v = sorted(values)?;
    let cut = v.len() / 4;
    let kept = &v[cut..v.len() - cut];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

pub fn median(values: &[f64]) -> Result<f64> {
    let v = sorted(values)?;
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn mean(values: &[f64]) -> Result<f64> {
    ensure!(!values.is_empty(), "mean of an empty list");
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// `0, 0.05, ..., 2`.
pub fn default_tau_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 / 20.0).collect()
}

/// Fraction of `scores` strictly above each threshold.
pub fn performance_profile(scores: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
    ensure!(taus.windows(2).all(|w| w[0] <= w[1]), "tau grid must be sorted ascending");
    if scores.is_empty() {
        return Ok(vec![0.0; taus.len()]);
    }
    let n = scores.len() as f64;
    Ok(taus
        .iter()
        .map(|&t| scores.iter().filter(|&&s| s > t).count() as f64 / n)
        .collect())
}

pub fn probability_of_improvement(x: &[f64], y: &[f64]) -> Result<f64> {
    ensure!(!x.is_empty() && !y.is_empty(), "probability of improvement needs two non-empty lists");
    let mut total = 0.0;
    for a in x {
        for b in y {
            total += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(total / (x.len() * y.len()) as f64)
}

/// Percentile `q` in `[0, 1]` of sorted data, interpolating linearly
/// between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Stratified percentile bootstrap. Every stratum is resampled with
/// replacement to its own size and `statistic` is recomputed on the
/// resampled strata.
pub fn bootstrap_ci<F>(strata: &[Vec<f64>], statistic: F, n_resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[Vec<f64>]) -> Result<f64>,
{
    ensure!(n_resamples >= MIN_RESAMPLES, "need at least {MIN_RESAMPLES} resamples, got {n_resamples}");
    ensure!(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1), got {level}");
    ensure!(strata.iter().all(|s| !s.is_empty()), "every stratum needs at least one value");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_resamples);
    let mut draw: Vec<Vec<f64>> = strata.iter().map(|s| Vec::with_capacity(s.len())).collect();
    for _ in 0..n_resamples {
        for (out, src) in draw.iter_mut().zip(strata) {
            out.clear();
            out.extend((0..src.len()).map(|_| src[rng.random_range(0..src.len())]));
        }
        stats.push(statistic(&draw)?);
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&stats, tail), quantile_sorted(&stats, 1.0 - tail)))
}

/// One line of the runner's CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub env: String,
    pub method: String,
    #[serde(default)]
    pub variant: String,
    pub seed: u64,
    pub generation: u64,
    #[serde(rename = "return")]
    pub value: f64,
}

impl ScoreRow {
    /// Aggregation key: `method`, or `method/variant` when a variant is set.
    pub fn key(&self) -> String {
        if self.variant.is_empty() {
            self.method.clone()
        } else {
            format!("{}/{}", self.method, self.variant)
        }
    }
}

/// Final return per (env, method key, seed). When several generations are
/// present for a run, the latest one wins.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    entries: BTreeMap<(String, String, u64), (u64, f64)>,
}

impl ScoreTable {
    pub fn from_rows<I: IntoIterator<Item = ScoreRow>>(rows: I) -> Result<Self> {
        let mut table = Self::default();
        for row in rows {
            ensure!(row.value.is_finite(), "non-finite return for {} {} seed {}", row.env, row.key(), row.seed);
            let key = (row.env.clone(), row.key(), row.seed);
            let slot = table.entries.entry(key).or_insert((row.generation, row.value));
            if row.generation >= slot.0 {
                *slot = (row.generation, row.value);
            }
        }
        Ok(table)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn envs(&self) -> BTreeSet<String> {
        self.entries.keys().map(|k| k.0.clone()).collect()
    }

    pub fn methods(&self) -> BTreeSet<String> {
        self.entries.keys().map(|k| k.1.clone()).collect()
    }

    /// Returns of `method` on `env`, ordered by seed.
    pub fn returns(&self, env: &str, method: &str) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|((e, m, _), _)| e == env && m == method)
            .map(|(_, &(_, v))| v)
            .collect()
    }

    pub fn seeds(&self, env: &str, method: &str) -> Vec<u64> {
        self.entries
            .keys()
            .filter(|(e, m, _)| e == env && m == method)
            .map(|k| k.2)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub min_method: String,
    pub max_method: String,
    pub taus: Vec<f64>,
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            min_method: RANDOM_METHOD.to_string(),
            max_method: REFERENCE_METHOD.to_string(),
            taus: default_tau_grid(),
            n_resamples: DEFAULT_RESAMPLES,
            level: DEFAULT_LEVEL,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub env: String,
    pub method: String,
    pub seed: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub runs: usize,
    pub iqm: f64,
    pub iqm_ci: (f64, f64),
    pub median: f64,
    pub median_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub x: String,
    pub y: String,
    pub probability: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub anchors: BTreeMap<String, Anchor>,
    pub normalized: Vec<NormalizedScore>,
    pub methods: BTreeMap<String, MethodSummary>,
    pub taus: Vec<f64>,
    pub profiles: BTreeMap<String, Vec<f64>>,
    pub improvements: Vec<Improvement>,
}

fn flat(strata: &[Vec<f64>]) -> Vec<f64> {
    strata.iter().flatten().copied().collect()
}

/// Per-environment probability of improvement averaged over environments.
/// The first half of `strata` belongs to `x`, the second half to `y`.
fn stratified_improvement(strata: &[Vec<f64>]) -> Result<f64> {
    let half = strata.len() / 2;
    let mut total = 0.0;
    for (x, y) in strata[..half].iter().zip(&strata[half..]) {
        total += probability_of_improvement(x, y)?;
    }
    Ok(total / half as f64)
}

/// Normalizes the table and computes every aggregate. Methods other than
/// the random anchor are summarized; improvements compare the reference
/// method with each of them on the environments both were run on.
pub fn report(table: &ScoreTable, options: &ReportOptions) -> Result<EvalReport> {
    ensure!(!table.is_empty(), "score table is empty");
    let mut anchors = BTreeMap::new();
    for env in table.envs() {
        let lo = table.returns(&env, &options.min_method);
        let hi = table.returns(&env, &options.max_method);
        if lo.is_empty() || hi.is_empty() {
            return Err(Error::invalid(format!(
                "environment {env} lacks a `{}` or `{}` anchor",
                options.min_method, options.max_method
            )));
        }
        let anchor = Anchor {
            r_min: mean(&lo)?,
            r_max: mean(&hi)?,
        };
        ensure!(anchor.r_max != anchor.r_min, "anchors coincide for environment {env}");
        anchors.insert(env, anchor);
    }

    let mut normalized = Vec::new();
    let mut by_method: BTreeMap<String, Vec<(String, Vec<f64>)>> = BTreeMap::new();
    for method in table.methods() {
        if method == options.min_method {
            continue;
        }
        for (env, anchor) in &anchors {
            let seeds = table.seeds(env, &method);
            if seeds.is_empty() {
                continue;
            }
            let mut scores = Vec::with_capacity(seeds.len());
            for (seed, r) in seeds.into_iter().zip(table.returns(env, &method)) {
                let score = normalize(r, anchor.r_min, anchor.r_max)?;
                normalized.push(NormalizedScore {
                    env: env.clone(),
                    method: method.clone(),
                    seed,
                    score,
                });
                scores.push(score);
            }
            by_method.entry(method.clone()).or_default().push((env.clone(), scores));
        }
    }

    let mut methods = BTreeMap::new();
    let mut profiles = BTreeMap::new();
    for (method, per_env) in &by_method {
        let strata: Vec<Vec<f64>> = per_env.iter().map(|(_, s)| s.clone()).collect();
        let all = flat(&strata);
        let stream = seeds::derive(options.seed, [method.as_str()]);
        methods.insert(
            method.clone(),
            MethodSummary {
                runs: all.len(),
                iqm: iqm(&all)?,
                iqm_ci: bootstrap_ci(&strata, |s| iqm(&flat(s)), options.n_resamples, options.level, stream)?,
                median: median(&all)?,
                median_ci: bootstrap_ci(
                    &strata,
                    |s| median(&flat(s)),
                    options.n_resamples,
                    options.level,
                    seeds::derive(stream, ["median"]),
                )?,
            },
        );
        profiles.insert(method.clone(), performance_profile(&all, &options.taus)?);
    }

    let mut improvements = Vec::new();
    if let Some(reference) = by_method.get(&options.max_method) {
        for (method, per_env) in &by_method {
            if *method == options.max_method {
                continue;
            }
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (env, y) in per_env {
                if let Some((_, x)) = reference.iter().find(|(e, _)| e == env) {
                    xs.push(x.clone());
                    ys.push(y.clone());
                }
            }
            if xs.is_empty() {
                continue;
            }
            let strata: Vec<Vec<f64>> = xs.into_iter().chain(ys).collect();
            improvements.push(Improvement {
                x: options.max_method.clone(),
                y: method.clone(),
                probability: stratified_improvement(&strata)?,
                ci: bootstrap_ci(
                    &strata,
                    stratified_improvement,
                    options.n_resamples,
                    options.level,
                    seeds::derive(options.seed, ["improvement", method.as_str()]),
                )?,
            });
        }
    }

    Ok(EvalReport {
        anchors,
        normalized,
        methods,
        taus: options.taus.clone(),
        profiles,
        improvements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize(100.0, 100.0, 300.0).unwrap(), 0.0);
        assert_eq!(normalize(300.0, 100.0, 300.0).unwrap(), 1.0);
        assert_eq!(normalize(200.0, 100.0, 300.0).unwrap(), 0.5);
        assert!(normalize(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn iqm_and_median_examples() {
        assert_eq!(iqm(&[0.0, 1.0, 2.0, 3.0]).unwrap(), 1.5);
        assert_eq!(iqm(&[5.0]).unwrap(), 5.0);
        assert_eq!(iqm(&[3.0, 0.0, 100.0, 1.0, 2.0, -50.0, 2.0, 1.0]).unwrap(), 1.5);
        assert!(iqm(&[]).is_err());
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
    }

    #[test]
    fn profile_examples() {
        assert_eq!(performance_profile(&[1.0, 1.0], &[0.5]).unwrap(), vec![1.0]);
        assert_eq!(performance_profile(&[0.2, 0.8], &[0.5, 0.9]).unwrap(), vec![0.5, 0.0]);
        assert!(performance_profile(&[0.2], &[0.5, 0.1]).is_err());
        let grid = default_tau_grid();
        assert_eq!(grid.len(), 41);
        assert_eq!((grid[0], grid[1], grid[40]), (0.0, 0.05, 2.0));
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(probability_of_improvement(&[2.0, 2.0], &[2.0]).unwrap(), 0.5);
        assert_eq!(probability_of_improvement(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(probability_of_improvement(&[1.0, 3.0], &[2.0]).unwrap(), 0.5);
        assert!(probability_of_improvement(&[], &[1.0]).is_err());
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let strata = vec![vec![4.0; 7], vec![4.0; 3]];
        let ci = bootstrap_ci(&strata, |s| mean(&flat(s)), 500, 0.95, 1).unwrap();
        assert_eq!(ci, (4.0, 4.0));
        let strata = vec![vec![1.0, 5.0, 2.0, 8.0], vec![0.5, 3.0]];
        let a = bootstrap_ci(&strata, |s| iqm(&flat(s)), 300, 0.9, 7).unwrap();
        let b = bootstrap_ci(&strata, |s| iqm(&flat(s)), 300, 0.9, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.0 <= a.1);
        assert!(bootstrap_ci(&strata, |s| iqm(&flat(s)), 99, 0.9, 7).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(quantile_sorted(&v, 0.0), 0.0);
        assert_eq!(quantile_sorted(&v, 0.5), 20.0);
        assert_eq!(quantile_sorted(&v, 0.125), 5.0);
        assert_eq!(quantile_sorted(&v, 1.0), 40.0);
    }

    fn row(env: &str, method: &str, variant: &str, seed: u64, generation: u64, value: f64) -> ScoreRow {
        ScoreRow {
            env: env.into(),
            method: method.into(),
            variant: variant.into(),
            seed,
            generation,
            value,
        }
    }

    #[test]
    fn report_uses_final_generation_and_anchors() {
        let rows = vec![
            row("a", "random", "", 0, 0, 0.0),
            row("a", "random", "", 1, 0, 2.0),
            row("a", "open_loop", "full", 0, 0, 1.0),
            row("a", "open_loop", "full", 0, 5, 11.0),
            row("a", "open_loop", "full", 1, 5, 9.0),
            row("a", "sac", "", 0, 3, 6.0),
        ];
        let table = ScoreTable::from_rows(rows).unwrap();
        let options = ReportOptions {
            n_resamples: 200,
            ..ReportOptions::default()
        };
        let rep = report(&table, &options).unwrap();
        assert_eq!(rep.anchors["a"], Anchor { r_min: 1.0, r_max: 10.0 });
        let reference = &rep.methods[REFERENCE_METHOD];
        assert_eq!(reference.iqm, 1.0);
        assert_eq!(rep.methods["sac"].median, 5.0 / 9.0);
        assert_eq!(rep.improvements.len(), 1);
        assert_eq!(rep.improvements[0].probability, 1.0);
        assert!(rep.profiles.values().all(|c| c.windows(2).all(|w| w[0] >= w[1])));
    }

    #[test]
    fn report_requires_anchors() {
        let table = ScoreTable::from_rows(vec![row("a", "sac", "", 0, 0, 1.0)]).unwrap();
        assert!(report(&table, &ReportOptions::default()).is_err());
    }
}
