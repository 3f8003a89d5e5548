//! Builds a synthetic saturated-sensing instance and reports how the
//! readings split between analog and clipped.
//!
//!     cargo run --release --example saturated_sensing -- [d k m n s_n seed]

use m1bit::sensing::{SyntheticProblem, SyntheticProblemSpec};

fn main() -> m1bit::Result<()> {
    let a: Vec<f64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let arg = |i: usize, dflt: f64| a.get(i).copied().unwrap_or(dflt);
    let spec = SyntheticProblemSpec::new(
        arg(0, 200.0) as usize,
        arg(1, 20.0) as usize,
        arg(2, 120.0) as usize,
        arg(3, 24.0) as usize,
        arg(4, 20.0),
        arg(5, 1.0) as u64,
    );
    let prob = SyntheticProblem::generate(spec)?;
    let obs = &prob.obs;
    let upper = obs.y.iter().filter(|y| matches!(y, Some(m1bit::sensing::Side::Upper))).count();
    println!("d={} K={} m={} n={}", spec.d, spec.k, spec.m, spec.n);
    println!("thresholds s- = {:.4}, s+ = {:.4}", obs.s_minus, obs.s_plus);
    println!(
        "{} analog, {} saturated ({} upper, {} lower)",
        obs.analog_indices().len(),
        obs.saturated_count(),
        upper,
        obs.saturated_count() - upper
    );
    let (u, p) = prob.unsaturated_part()?;
    println!("unsaturated system: {} rows, first reading {:.4}", m1bit::linalg::LinearOperator::rows(&u), p[0]);
    Ok(())
}
