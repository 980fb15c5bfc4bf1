use mpost::engine::{copula_update, run_chain, EngineConfig};
use mpost::grid::{empirical_from_samples, ppd_from_json, ppd_to_json, DistMeta};
use mpost::normal::{copula_h, std_normal_cdf, std_normal_quantile};
use mpost::schedule::ScheduleSpec;
use mpost::{CopulaBandwidth, FunctionalSpec, Functionals, GridDistribution};
use proptest::prelude::*;

fn rho() -> impl Strategy<Value = CopulaBandwidth> {
    (0.01f64..0.99).prop_map(|r| CopulaBandwidth::new(r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normal_round_trip(z in -6.0f64..6.0) {
        let back = std_normal_quantile(std_normal_cdf(z).unwrap()).unwrap();
        prop_assert!((back - z).abs() <= 1e-8 * z.abs().max(1.0));
    }

    #[test]
    fn h_is_monotone_and_bounded(u in 0.001f64..0.999, du in 0.0f64..0.5, v in 0.001f64..0.999, r in rho()) {
        let a = copula_h(u, v, r).unwrap();
        let b = copula_h((u + du).min(0.999), v, r).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a);
    }

    #[test]
    fn alpha_in_unit_interval(i in 1usize..1_000_000, d in 1usize..40) {
        for s in [ScheduleSpec::default(), ScheduleSpec::type1(d).unwrap(), ScheduleSpec::type2(d).unwrap()] {
            let a = s.alpha(i).unwrap();
            prop_assert!(a > 0.0 && a < 1.0, "{s:?} alpha({i}) = {a}");
            prop_assert!(s.alpha(i + 1).unwrap() <= a);
        }
    }

    #[test]
    fn update_keeps_a_valid_distribution(
        m in -3.0f64..3.0, sd in 0.1f64..5.0, w in 0.001f64..0.999, a in 1e-6f64..0.999_999, r in rho()
    ) {
        let p = GridDistribution::normal(m, sd, 128, DistMeta::default()).unwrap();
        let y = p.quantile_at(w).unwrap();
        let q = copula_update(&p, y, a, r).unwrap();
        prop_assert!(q.validate().is_ok());
        let q = copula_update(&p.clone().without_pdf(), y + 40.0 * sd, a, r).unwrap();
        prop_assert!(q.validate().is_ok());
    }

    #[test]
    fn off_grid_update_with_density_is_valid_or_reported(y in -50.0f64..50.0, a in 1e-6f64..0.999_999, r in rho()) {
        let p = GridDistribution::normal(0.0, 0.1, 128, DistMeta::default()).unwrap();
        match copula_update(&p, y, a, r) {
            Ok(q) => prop_assert!(q.validate().is_ok()),
            Err(e) => prop_assert!(matches!(e, mpost::Error::Invariant(_)), "{e}"),
        }
    }

    #[test]
    fn quantile_inverts_cdf(m in -5.0f64..5.0, sd in 0.1f64..3.0, u in 0.001f64..0.999) {
        let p = GridDistribution::normal(m, sd, 256, DistMeta::default()).unwrap();
        let y = p.quantile_at(u).unwrap();
        prop_assert!((p.cdf_at(y).unwrap() - u).abs() <= 1e-9);
    }

    #[test]
    fn empirical_moments(xs in prop::collection::vec(-100.0f64..100.0, 1..60)) {
        let e = empirical_from_samples(&xs).unwrap();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((e.mean() - m).abs() <= 1e-9 * m.abs().max(1.0));
        prop_assert!(e.variance() >= 0.0);
        let med = e.evaluate(&FunctionalSpec::Quantile(0.5)).unwrap();
        prop_assert!(e.cdf_value(med).unwrap() >= 0.5);
    }

    #[test]
    fn ppd_json_round_trip(m in -5.0f64..5.0, sd in 0.1f64..3.0, n in 0usize..1000, x in prop::collection::vec(-3.0f64..3.0, 0..4)) {
        let p = GridDistribution::normal(m, sd, 64, DistMeta::new(n, x)).unwrap();
        let back = ppd_from_json(&ppd_to_json(&p)).unwrap();
        prop_assert_eq!(back, p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chains_stay_valid_and_reproducible(seed in any::<u64>(), r in rho(), n_train in 0usize..200) {
        let p = GridDistribution::normal(0.0, 1.0, 64, DistMeta::default()).unwrap();
        let mut cfg = EngineConfig::new(r, n_train, vec![FunctionalSpec::Mean]);
        cfg.steps = 30;
        cfg.seed = seed;
        let a = run_chain(&p, &cfg, 3).unwrap();
        prop_assert!(a.samples.iter().all(|s| s.is_finite()));
        prop_assert_eq!(&a, &run_chain(&p, &cfg, 3).unwrap());
    }
}
