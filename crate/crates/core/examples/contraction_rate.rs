//! How fast P_N(y) settles: mean |P_N(y) - P_M(y)| against n + N, with the
//! fitted log-log slope (about -1/2 for the default schedule).
//!
//!     cargo run --release --example contraction_rate

use mpost::engine::{contraction_probe, EngineConfig};
use mpost::grid::{DistMeta, DEFAULT_GRID};
use mpost::schedule::ScheduleSpec;
use mpost::{CopulaBandwidth, GridDistribution};

fn main() -> mpost::Result<()> {
    let p0 = GridDistribution::normal(0.0, 1.0, DEFAULT_GRID, DistMeta::default())?;
    let cps = [10, 20, 50, 100, 200, 500, 1000, 2000];
    for (name, sched) in [("default", ScheduleSpec::default()), ("c=1, beta=0.75", ScheduleSpec::custom(1.0, 0.75)?)] {
        let mut cfg = EngineConfig::new(CopulaBandwidth::new(0.5)?, 0, vec![]);
        cfg.schedule = sched;
        let t = contraction_probe(&p0, &cfg, &[-1.0, 0.0, 1.0], 10_000, &cps, 200)?;
        println!("{name}: slope {:.3}", t.loglog_slope().unwrap_or(f64::NAN));
        for r in &t.rows {
            println!("  N {:5}  {:.5}", r.steps, r.mean_abs_dev);
        }
    }
    Ok(())
}
