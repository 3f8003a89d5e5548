//! A reduced saturation-ratio sweep written to CSV.
//!
//!     cargo run --release --example sweep -- [out_dir]

use m1bit::bench::{emit_sweep, run_sweep, Experiment, SweepSpec};
use m1bit::sensing::SyntheticProblemSpec;
use m1bit::solvers::Model;

fn main() -> m1bit::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep_out".into());
    let mut spec = SweepSpec::preset(Experiment::SaturationRatio, 3, 7);
    spec.base = SyntheticProblemSpec::new(200, 40, 120, 0, 10.0, 7);
    spec.grid = vec![0.0, 0.2, 0.4];
    spec.methods = vec![Model::Lasso, Model::Rdcs, Model::Csc];
    let res = run_sweep(&spec)?;
    std::fs::create_dir_all(&out).map_err(|e| m1bit::Error::Io { path: out.clone().into(), source: e })?;
    emit_sweep(&res, std::path::Path::new(&out))?;
    for r in &res.rows {
        println!("{:<10} n/m={:<4} {:>6.2} dB (std {:.2})", r.method, r.value, r.mean, r.std);
    }
    println!("wrote {out}/summary.csv, trials.csv, timing.log");
    Ok(())
}
