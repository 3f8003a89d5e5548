//! Solves one saturated instance with every model and prints the SNR.
//!
//!     cargo run --release --example compare_solvers -- [seed]

use m1bit::bench::bench_solver_params;
use m1bit::sensing::{snr_db, SyntheticProblem, SyntheticProblemSpec};
use m1bit::solvers::{solve_model, Model, SolverParams};

fn main() -> m1bit::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = SyntheticProblemSpec::new(400, 40, 240, 72, 20.0, seed);
    let prob = SyntheticProblem::generate(spec)?;
    let params = SolverParams { mu: 0.3, ..bench_solver_params() }.with_defaults_for(spec.m, spec.n);
    println!("tau={:.3} lambda={:.3} mu={}", params.tau, params.lambda, params.mu);
    for model in [Model::Lasso, Model::Rdcs, Model::Csc, Model::Csr] {
        let sol = solve_model(model, &prob.matrix, &prob.obs, &params)?;
        println!(
            "{:<10} snr {:>6.2} dB  |x| {:.3}  {} iters  {:.2}s{}",
            model.name(),
            snr_db(prob.x_true.as_slice(), sol.x_hat.as_slice())?,
            sol.x_hat.norm(),
            sol.iters,
            sol.wall_time,
            if sol.converged { "" } else { "  (not converged)" }
        );
    }
    Ok(())
}
