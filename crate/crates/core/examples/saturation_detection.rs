//! Saturation detection on a toy lower-saturated system: one pixel, two
//! rays, both reading zero. The ray through the pixel keeps its flag; the
//! one that misses it becomes an analog zero.
//!
//!     cargo run --example saturation_detection

use m1bit::isd::{compare_indicators, run_isd, IsdConfig, IsdMonitor};
use m1bit::sensing::{SaturatedObservations, SensingMatrix};

fn main() -> m1bit::Result<()> {
    let u = SensingMatrix::from_rows(2, 1, vec![1.0, 0.0])?;
    let p = [0.0, 0.0];
    let cfg = IsdConfig::new(vec![0.5, 0.5]);
    // Stand-in reconstructor that knows the pixel value.
    let mut recon = |obs: &SaturatedObservations, _warm: Option<&[f64]>| -> m1bit::Result<Vec<f64>> {
        println!("  reconstructing with flags {:?}", obs.psi);
        Ok(vec![2.0])
    };
    let out = run_isd(&u, &p, &cfg, &mut recon, IsdMonitor::default())?;
    println!("final flags {:?} after {} rounds", out.psi, out.history.rounds.len());
    println!("(false, missing) vs truth: {:?}", compare_indicators(&[true, false], &out.psi)?);
    print!("{}", out.history.to_csv());
    Ok(())
}
