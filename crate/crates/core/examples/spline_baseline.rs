//! Closed-form additive spline posterior against the true first component.
//!
//!     cargo run --release --example spline_baseline

use mpost::analytic::{optimal_ci, SplineFit, SplineModelSpec};
use mpost::simgen::gen_additive_spline;

fn main() -> mpost::Result<()> {
    let sim = gen_additive_spline(300, 30, 1, 0.5, 11)?;
    let spec = SplineModelSpec { sigma2: 0.5, ..SplineModelSpec::new(30, -2.5, 2.5)? };
    let fit = SplineFit::fit(spec, &sim.data)?;
    let mut covered = 0;
    for i in 0..10 {
        let x = -2.5 + 5.0 * i as f64 / 9.0;
        let (lo, hi) = optimal_ci(&fit, 0, x, 0.9)?;
        let truth = sim.component(0, x);
        covered += (lo <= truth && truth <= hi) as usize;
        println!("x {x:+.2}: f1 {truth:+.3}  90% [{lo:+.3}, {hi:+.3}]");
    }
    println!("{covered}/10 covered");
    Ok(())
}
