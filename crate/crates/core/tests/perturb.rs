use openloop::env::{Crawler, CrawlerConfig, Environment, PurcellConfig, PurcellSwimmer};
use openloop::oscillator::OscillatorParams;
use openloop::perturb::{robustness_sweep, standard_suite, wrap, PerturbationConfig, NOISE_GRID};
use openloop::rollout::{run_episode, OpenLoopPolicy};
use openloop::PolicyVariant;

fn long_crawler() -> Crawler<f64> {
    Crawler::new(CrawlerConfig {
        episode_horizon: 50.0,
        ..CrawlerConfig::default()
    })
    .unwrap()
}

fn crawler_policy() -> OpenLoopPolicy<f64> {
    let params = OscillatorParams::new(vec![0.8], vec![0.0], vec![0.0], 11.0, 8.0).unwrap();
    OpenLoopPolicy::new(params, PolicyVariant::Full, 1e-3, None).unwrap()
}

#[test]
fn impulse_rate_matches_probability() {
    let mut policy = crawler_policy();
    let mut counts = Vec::new();
    for seed in 0..100u64 {
        let cfg = PerturbationConfig::external_force(5.0, 0.05).with_seed(seed);
        let mut env = wrap(long_crawler(), cfg).unwrap();
        let ep = run_episode(&mut env, &mut policy, seed, false).unwrap();
        assert_eq!(ep.steps, 1000);
        counts.push(env.impulse_count() as f64);
    }
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    // Binomial(1000, 0.05): sd of the mean over 100 episodes is ~0.69.
    assert!((45.0..=55.0).contains(&mean), "mean impulses {mean}");
}

#[test]
fn observation_perturbations_leave_open_loop_returns_alone() {
    let params = OscillatorParams::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 2.0], 6.0, 7.0).unwrap();
    let policy = OpenLoopPolicy::new(params, PolicyVariant::Full, 1e-3, None).unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let report = robustness_sweep(
        &policy,
        || PurcellSwimmer::new(PurcellConfig::default()),
        &standard_suite(3),
        &seeds,
    )
    .unwrap();
    assert_eq!(report.entries.len(), NOISE_GRID.len() + 3);
    for entry in &report.entries {
        if entry.config.kind.touches_dynamics() {
            let changed = entry.returns.iter().zip(&report.baseline).filter(|(a, b)| a != b).count();
            assert!(changed >= 9, "{} changed only {changed}/10", entry.label);
        } else {
            assert_eq!(entry.returns, report.baseline, "{}", entry.label);
        }
    }
}

#[test]
fn observation_wrappers_do_not_touch_the_state() {
    let mut policy = crawler_policy();
    for cfg in standard_suite(1).into_iter().filter(|c| !c.kind.touches_dynamics()) {
        let mut plain = long_crawler();
        let mut wrapped = wrap(long_crawler(), cfg).unwrap();
        plain.reset(2).unwrap();
        wrapped.reset(2).unwrap();
        openloop::rollout::Policy::begin(&mut policy, plain.spec()).unwrap();
        for k in 0..300 {
            let action = openloop::rollout::Policy::act(&mut policy, k, &[], None).unwrap();
            plain.step(&action).unwrap();
            wrapped.step(&action).unwrap();
            assert_eq!(plain.physical_state(), wrapped.physical_state());
        }
    }
}

#[test]
fn wrapped_spec_is_unchanged() {
    let plain = long_crawler();
    let spec = plain.spec().clone();
    let wrapped = wrap(plain, PerturbationConfig::gaussian_noise(0.2)).unwrap();
    assert_eq!(wrapped.spec(), &spec);
}
