use mpost::analytic::{
    bspline_basis, clamped_uniform_knots, conjugate_posterior, conjugate_posterior_with_prior, SplineFit,
    SplineModelSpec,
};
use mpost::rng::stream_rng;
use mpost::simgen::{gen_additive_spline, gen_diffusion, gen_funnel, gen_gamma_iid};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

fn var(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / v.len() as f64
}

#[test]
fn spline_label_variance_grows_with_signal() {
    let mut avg = [0.0; 3];
    for seed in 0..50 {
        for (i, phi) in [1, 3, 10].into_iter().enumerate() {
            avg[i] += var(gen_additive_spline(200, 30, phi, 0.5, seed).unwrap().data.y()) / 50.0;
        }
    }
    assert!(avg[0] < avg[1] && avg[1] < avg[2], "{avg:?}");
}

#[test]
fn funnel_noise_vanishes_near_zero() {
    let d = gen_funnel(10_000, 3).unwrap();
    let resid: Vec<f64> =
        d.x().iter().zip(d.y()).filter(|(x, _)| x[0] < 0.05).map(|(x, y)| y - (3.0 * x[0]).sin()).collect();
    assert!(resid.len() > 300);
    assert!(var(&resid).sqrt() < 0.1);
    assert!(d.x().iter().all(|x| (0.0..1.0).contains(&x[0])));
}

#[test]
fn diffusion_is_normalized_and_heteroscedastic() {
    let s = gen_diffusion(5000, 2).unwrap();
    let d = s.data.as_ref().unwrap();
    assert!(d.y().iter().all(|y| (0.0..=1.0).contains(y)));
    assert!(d.x().iter().all(|x| (-2.5..=2.5).contains(&x[0])));
    // lower-tail spread from the exact quantiles, at the two ends
    let q = |x: f64, l: f64| s.quantile(x, l).unwrap();
    let left = q(-2.25, 0.3) - q(-2.25, 0.03);
    let right = q(2.25, 0.3) - q(2.25, 0.03);
    assert!(right / left > 2.0, "{right} vs {left}");
}

#[test]
fn gamma_first_two_moments() {
    let g = gen_gamma_iid(1_000_000, 2.0, 2.0, 17).unwrap();
    let m = g.iter().sum::<f64>() / g.len() as f64;
    assert!((m - 4.0).abs() < 0.02, "mean {m}");
    assert!((var(&g) - 8.0).abs() < 0.1, "var {}", var(&g));
}

#[test]
fn conjugate_posterior_matches_dense_inverse() {
    let mut rng = stream_rng(4, 0);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let x = DMatrix::from_fn(50, 20, |_, _| z());
    let y = DVector::from_fn(50, |_, _| z());
    let (s2, tau2) = (0.7, 2.0);
    let post = conjugate_posterior_with_prior(&x, &y, s2, tau2).unwrap();
    let prec = x.transpose() * &x / s2 + DMatrix::identity(20, 20) / tau2;
    let cov = prec.try_inverse().unwrap();
    let mean = &cov * x.transpose() * &y / s2;
    assert!((&post.cov - &cov).abs().max() < 1e-8);
    assert!((&post.mean - &mean).abs().max() < 1e-8);
}

#[test]
fn huge_noise_returns_prior() {
    let x = DMatrix::from_element(10, 3, 1.0);
    let y = DVector::from_element(10, 5.0);
    let post = conjugate_posterior(&x, &y, 1e9).unwrap();
    assert!((&post.cov - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-6);
    assert!(post.mean.abs().max() < 1e-6);
}

#[test]
fn cubic_basis_partition_of_unity_on_default_knots() {
    let k = clamped_uniform_knots(-2.5, 2.5, 20, 3).unwrap();
    assert_eq!(k.len(), 24);
    for i in 0..=500 {
        let b = bspline_basis(-2.5 + i as f64 / 100.0, &k, 3).unwrap();
        assert!((b.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn spline_fit_contracts_towards_truth() {
    let sim = gen_additive_spline(1000, 2, 1, 0.5, 6).unwrap();
    let spec = SplineModelSpec::new(2, -2.5, 2.5).unwrap();
    let spec = SplineModelSpec { sigma2: 0.5, ..spec };
    let fit = SplineFit::fit(spec.clone(), &sim.data).unwrap();
    let prior = SplineFit::prior(spec).unwrap();
    for x in [-2.0, -0.5, 1.0, 2.2] {
        let (m, sd) = fit.component_moments(0, x).unwrap();
        assert!((m - sim.component(0, x)).abs() < 4.0 * sd + 0.05, "x {x}: {m} +- {sd} vs {}", sim.component(0, x));
        assert!(sd < prior.component_moments(0, x).unwrap().1);
    }
}
