//! The four synthetic generators, with a few summary statistics each.
//!
//!     cargo run --release --example simulate_data

use mpost::simgen::Generator;

fn main() -> mpost::Result<()> {
    for kind in ["spline", "funnel", "diffusion", "gamma"] {
        let sim = Generator::parse_kind(kind)?.generate(500, 7)?;
        let y = sim.data.y();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        println!(
            "{kind:>9}: n {} d {:2}  y mean {mean:+.3} sd {sd:.3} range [{lo:+.3}, {hi:+.3}]",
            sim.data.n(),
            sim.data.d()
        );
    }
    let csv = Generator::parse_kind("funnel")?.generate(5, 7)?.data.to_csv();
    print!("\nfunnel, first rows:\n{csv}");
    Ok(())
}
