//! Repeated-sampling coverage of the martingale posterior for a normal mean.
//!
//! Each replication draws n = 100 points from N(0, 1), starts the recursion
//! at the known-variance conjugate predictive N(ybar, 1 + 1/n) and checks
//! whether the 90% interval for the mean covers 0.
//!
//!     cargo run --release --example gaussian_coverage -- [reps] [rho|auto]

use mpost::engine::{run_posterior, EngineConfig};
use mpost::grid::{DistMeta, DEFAULT_GRID};
use mpost::rng::{derive_seed, stream_rng};
use mpost::schedule::ScheduleSpec;
use mpost::tuner::{tune_rho, TunerOptions};
use mpost::{CopulaBandwidth, FunctionalSpec, GridDistribution};
use rand_distr::{Distribution, StandardNormal};

fn main() -> mpost::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps: usize = args.next().map_or(50, |s| s.parse().expect("reps"));
    let rho_arg = args.next().unwrap_or_else(|| "auto".into());
    let n = 100;
    let mut covered = 0;
    let mut sds = Vec::new();
    for r in 0..reps {
        let mut rng = stream_rng(derive_seed(2024, r as u64), 0);
        let ys: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ybar = ys.iter().sum::<f64>() / n as f64;
        let p0 = GridDistribution::normal(ybar, (1.0 + 1.0 / n as f64).sqrt(), DEFAULT_GRID, DistMeta::new(n, vec![]))?;
        let rho = match rho_arg.as_str() {
            "auto" => tune_rho(&p0, &ScheduleSpec::default(), &TunerOptions::default(), r as u64)?.rho,
            s => CopulaBandwidth::new(s.parse().expect("rho"))?,
        };
        let mut cfg = EngineConfig::new(rho, n, vec![FunctionalSpec::Mean]);
        cfg.chains = 200;
        cfg.seed = r as u64;
        let post = run_posterior(&p0, &cfg)?;
        let m = &post.functionals[0];
        if m.contains(0.0) {
            covered += 1;
        }
        sds.push(m.sd);
        println!("rep {r:2}: ybar {ybar:+.4} rho {:.3} interval [{:+.4}, {:+.4}]", rho.get(), m.lower, m.upper);
    }
    let mean_sd = sds.iter().sum::<f64>() / sds.len() as f64;
    println!(
        "covered {covered}/{reps}; mean posterior sd {mean_sd:.4} (exact posterior sd {:.4})",
        (1.0 / n as f64).sqrt()
    );
    Ok(())
}
