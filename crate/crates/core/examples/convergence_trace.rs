//! Running means of 30 chains on spline data, written as a trace CSV.
//!
//!     cargo run --release --example convergence_trace -- [out.csv]

use mpost::engine::{log_checkpoints, run_posterior_with_chains, write_trace_csv, EngineConfig};
use mpost::schedule::ScheduleSpec;
use mpost::simgen::gen_additive_spline;
use mpost::sources::{GaussianSource, PpdSource};
use mpost::tuner::{tune_rho, TunerOptions};
use mpost::FunctionalSpec;

fn main() -> mpost::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "trace.csv".into());
    let sim = gen_additive_spline(100, 30, 1, 0.5, 3)?;
    let mut src = GaussianSource::new();
    src.fit(&sim.data)?;
    let p0 = src.ppd_at(&[0.0; 30])?;
    let sched = ScheduleSpec::parse_with_dim("default", 30)?;
    let rho = tune_rho(&p0, &sched, &TunerOptions::default(), 0)?.rho;

    let mut cfg = EngineConfig::new(rho, 100, vec![FunctionalSpec::Mean]);
    cfg.chains = 30;
    cfg.steps = 1000;
    cfg.checkpoints = Some(log_checkpoints(1000));
    let (_, chains) = run_posterior_with_chains(&p0, &cfg)?;
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &chains).map_err(|e| mpost::Error::io(&out, e))?;
    std::fs::write(&out, buf).map_err(|e| mpost::Error::io(&out, e))?;

    let spread = |k: usize| {
        let v: Vec<f64> = chains.iter().map(|c| c.trace.as_ref().unwrap()[k].running_mean).collect();
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let cps = log_checkpoints(1000);
    for (k, n) in cps.iter().enumerate() {
        println!("N {n:5}: spread of running means {:.4}", spread(k));
    }
    println!("rho {:.3}; wrote {out}", rho.get());
    Ok(())
}
