//! Martingale posterior of a few functionals from a single predictive.
//!
//!     cargo run --release --example quickstart

use mpost::engine::{run_posterior, EngineConfig};
use mpost::grid::{DistMeta, DEFAULT_GRID};
use mpost::{CopulaBandwidth, FunctionalSpec, GridDistribution};

fn main() -> mpost::Result<()> {
    // a predictive that has already seen n = 50 observations
    let p0 = GridDistribution::normal(1.0, 0.8, DEFAULT_GRID, DistMeta::new(50, vec![]))?;
    let functionals = vec![
        FunctionalSpec::Mean,
        FunctionalSpec::Variance,
        FunctionalSpec::quantile(0.9)?,
        FunctionalSpec::CdfAt(0.0),
    ];
    let mut cfg = EngineConfig::new(CopulaBandwidth::new(0.8)?, 50, functionals);
    cfg.chains = 200;
    cfg.seed = 1;
    let post = run_posterior(&p0, &cfg)?;
    for f in &post.functionals {
        println!(
            "{:>14}: mean {:+.4} sd {:.4} 90% [{:+.4}, {:+.4}]",
            f.functional.to_string(),
            f.mean,
            f.sd,
            f.lower,
            f.upper
        );
    }
    Ok(())
}
