use openloop::metrics::{
    bootstrap_ci, iqm, mean, normalize, performance_profile, probability_of_improvement, default_tau_grid,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn iqm_of_uniform_draws_is_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
    let value = iqm(&draws).unwrap();
    assert!((value - 0.5).abs() < 0.02, "{value}");
}

#[test]
fn bootstrap_mean_interval_matches_normal_theory() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sample: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
    let (lo, hi) = bootstrap_ci(&[sample], |s| mean(&s[0]), 10_000, 0.95, 3).unwrap();
    let analytic = 2.0 * 1.96 / 10.0;
    let width = hi - lo;
    assert!((width - analytic).abs() / analytic < 0.2, "width {width} vs {analytic}");
}

#[test]
fn bootstrap_is_seeded() {
    let strata = vec![vec![0.1, 0.9, 0.4, 0.7], vec![1.2, 0.3, 0.8]];
    let stat = |s: &[Vec<f64>]| iqm(&s.concat());
    let a = bootstrap_ci(&strata, stat, 1000, 0.95, 11).unwrap();
    assert_eq!(a, bootstrap_ci(&strata, stat, 1000, 0.95, 11).unwrap());
    assert_ne!(a, bootstrap_ci(&strata, stat, 1000, 0.95, 12).unwrap());
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 1..40)
}

proptest! {
    #[test]
    fn improvement_is_complementary(x in scores(), y in scores()) {
        let p = probability_of_improvement(&x, &y).unwrap();
        let q = probability_of_improvement(&y, &x).unwrap();
        prop_assert_eq!(p + q, 1.0);
    }

    #[test]
    fn iqm_is_bounded_and_order_free(mut v in scores(), seed in any::<u64>()) {
        let value = iqm(&v).unwrap();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(value >= lo - 1e-9 && value <= hi + 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..v.len()).rev() {
            let j = rng.random_range(0..=i);
            v.swap(i, j);
        }
        prop_assert_eq!(iqm(&v).unwrap(), value);
    }

    #[test]
    fn profiles_fall_and_stay_in_unit_range(v in scores()) {
        let curve = performance_profile(&v, &default_tau_grid()).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(curve.iter().all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn normalization_ignores_common_affine_maps(
        r in -100.0..100.0f64,
        r_min in -50.0..0.0f64,
        gap in 1.0..50.0f64,
        scale in 0.1..10.0f64,
        shift in -100.0..100.0f64,
    ) {
        let r_max = r_min + gap;
        let plain = normalize(r, r_min, r_max).unwrap();
        let mapped = normalize(scale * r + shift, scale * r_min + shift, scale * r_max + shift).unwrap();
        prop_assert!((plain - mapped).abs() < 1e-9 * (1.0 + plain.abs()));
    }
}
