//! Bandwidth selection by prequential log score on samples from the predictive.
//!
//! A heavy-tailed predictive and a normal one usually select different
//! bandwidths; the score curve is printed for both.
//!
//!     cargo run --release --example tune_bandwidth

use mpost::grid::{linspace, DistMeta};
use mpost::schedule::ScheduleSpec;
use mpost::tuner::{tune_rho, TunerOptions};
use mpost::GridDistribution;

fn student_t3() -> mpost::Result<GridDistribution> {
    let s3 = 3f64.sqrt();
    let cdf = move |t: f64| 0.5 + (t / (s3 * (1.0 + t * t / 3.0)) + (t / s3).atan()) / std::f64::consts::PI;
    let pdf = move |t: f64| 6.0 * s3 / (std::f64::consts::PI * (3.0 + t * t).powi(2));
    GridDistribution::tabulate_truncated(linspace(-30.0, 30.0, 4096), cdf, Some(&pdf), DistMeta::default())
}

fn main() -> mpost::Result<()> {
    let sched = ScheduleSpec::default();
    let opts = TunerOptions { tuning_size: 400, ..TunerOptions::default() };
    let cases = [
        ("student t3", student_t3()?),
        ("N(0, 0.1^2)", GridDistribution::normal(0.0, 0.1, 1024, DistMeta::default())?),
    ];
    for (name, p0) in cases {
        let t = tune_rho(&p0, &sched, &opts, 3)?;
        println!("{name}: rho {:.3}, score {:.2}", t.rho.get(), t.score);
        for (r, s) in t.curve.iter().step_by(3) {
            println!("  rho {r:.3}  score {s:.2}");
        }
    }
    Ok(())
}
