//! Tabulates the pinball loss and its proximal map for a few slopes.
//!
//!     cargo run --example pinball_prox

use m1bit::prox::{pinball_loss, pinball_shrink, soft_threshold};

fn main() -> m1bit::Result<()> {
    let rho = 1.0;
    println!("{:>6} {:>8} {:>8} {:>8}", "t", "tau=0", "-0.5", "-1");
    for k in -6..=6 {
        let t = 0.5 * k as f64;
        let row: Vec<String> = [0.0, -0.5, -1.0]
            .iter()
            .map(|&tau| pinball_shrink(t, rho, tau).map(|e| format!("{e:>8.3}")))
            .collect::<m1bit::Result<_>>()?;
        println!("{t:>6.2} {}", row.join(" "));
    }
    println!("L_-0.5(-2) = {}", pinball_loss(-2.0, -0.5));
    println!("soft threshold of [2, -0.5] at 1: {:?}", soft_threshold(&[2.0, -0.5], 1.0));
    Ok(())
}
