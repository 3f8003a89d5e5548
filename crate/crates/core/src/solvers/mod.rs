//! ADMM solvers for the mixed one-bit models and the lasso / RDCS baselines.
//!
//! All four models share one engine ([`Admm`]): the slack `e` carries the
//! saturated readings through the pinball loss, `z` carries the norm term
//! (ball constraint or ridge penalty), and `x` is updated by FISTA on the
//! remaining quadratic-plus-regularizer subproblem.

mod admm;
mod fista;

pub use admm::{Admm, AdmmState, NormTerm, Residuals, TraceRow};
pub use fista::{fista_x_subproblem, L1Norm, Regularizer, XSubproblem};

use crate::error::{Error, Result};
use crate::linalg::{norm1, LinearOperator};
use crate::prox::pinball_loss;
use crate::sensing::{SaturatedObservations, SensingMatrix, Signal};

/// Hyperparameters shared by every model. Fields a model does not use are
/// ignored (`c` outside the ball model, `gamma` outside the ridge model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Weight of the sparsity regularizer.
    pub mu: f64,
    /// Weight of the one-bit (saturated) terms.
    pub lambda: f64,
    /// Ridge weight of the regularized model.
    pub gamma: f64,
    /// Radius of the norm ball of the constrained model.
    pub c: f64,
    /// Pinball slope.
    pub tau: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_outer: usize,
    pub fista_iters: usize,
    /// FISTA stops early once a step moves `x` by less than this, relative
    /// to `max(1, ||x||)`.
    pub fista_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            mu: 0.1,
            lambda: 1.0,
            gamma: DEFAULT_GAMMA,
            c: 1.0,
            tau: 0.0,
            theta1: 1.0,
            theta2: 1.0,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_outer: 2000,
            fista_iters: 50,
            fista_tol: 1e-10,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidSpec(what.to_string()));
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad("mu must be finite and >= 0");
        }
        if !(self.lambda >= 0.0) || self.lambda.is_nan() {
            return bad("lambda must be >= 0");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be finite and >= 0");
        }
        if !(self.c > 0.0) {
            return bad("c must be > 0");
        }
        if !(-1.0..=0.0).contains(&self.tau) {
            return bad("tau must lie in [-1, 0]");
        }
        if !(self.theta1 > 0.0) || !(self.theta2 > 0.0) {
            return bad("theta1 and theta2 must be > 0");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be >= 1");
        }
        Ok(())
    }

    /// Applies [`default_hyperparams`] for `m` readings of which `n` saturated.
    pub fn with_defaults_for(mut self, m: usize, n: usize) -> Self {
        let h = default_hyperparams(m, n);
        self.tau = h.tau;
        self.lambda = h.lambda;
        self.gamma = h.gamma;
        self
    }
}

pub const DEFAULT_GAMMA: f64 = 1e-4;

/// Heuristic `tau`, `lambda`, `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub tau: f64,
    pub lambda: f64,
    pub gamma: f64,
}

/// `tau = -n/(5m)`, `lambda = m/(100n)`, `gamma = 1e-4`. Without saturated
/// readings the one-bit terms are disabled (`tau = 0`, `lambda = 0`).
pub fn default_hyperparams(m: usize, n: usize) -> Hyperparams {
    if n == 0 || m == 0 {
        return Hyperparams {
            tau: 0.0,
            lambda: 0.0,
            gamma: DEFAULT_GAMMA,
        };
    }
    let (m, n) = (m as f64, n as f64);
    Hyperparams {
        tau: -n / (5.0 * m),
        lambda: m / (100.0 * n),
        gamma: DEFAULT_GAMMA,
    }
}

/// Scale of the one-bit weight used to turn the hinge into the hard
/// consistency constraints of RDCS.
pub const RDCS_LAMBDA_SCALE: f64 = 1e6;

/// Which model a solve targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    /// Ball-constrained mixed model, `||x|| <= c`.
    Csc,
    /// Ridge-regularized mixed model, `+ gamma/2 ||x||^2`.
    Csr,
    /// Analog readings only.
    Lasso,
    /// Analog fit with hard consistency on saturated readings.
    Rdcs,
}

impl Model {
    /// Accepts `csc`, `csr`, `lasso`, `rdcs`, or the full names.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csc" | "m1bit-csc" => Ok(Model::Csc),
            "csr" | "m1bit-csr" => Ok(Model::Csr),
            "lasso" => Ok(Model::Lasso),
            "rdcs" => Ok(Model::Rdcs),
            _ => Err(Error::InvalidSpec(format!("unknown model '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Csc => "m1bit-csc",
            Model::Csr => "m1bit-csr",
            Model::Lasso => "lasso",
            Model::Rdcs => "rdcs",
        }
    }
}

/// Returned estimate with solve diagnostics.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x_hat: Signal,
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    pub wall_time: f64,
    pub residuals: Residuals,
}

/// `sum_{analog} (u'x - p)^2 / 2 + lambda sum_{sat} L_tau(y (s - u'x))`
/// evaluated from precomputed measurements `ux`.
pub(crate) fn data_terms(ux: &[f64], obs: &SaturatedObservations, lambda: f64, tau: f64) -> f64 {
    let mut analog = 0.0;
    let mut onebit = 0.0;
    for i in 0..ux.len() {
        match obs.y[i] {
            None => {
                let r = ux[i] - obs.p[i];
                analog += 0.5 * r * r;
            }
            Some(side) => {
                onebit += pinball_loss(side.sign() * (obs.s[i] - ux[i]), tau);
            }
        }
    }
    analog + if onebit != 0.0 { lambda * onebit } else { 0.0 }
}

/// Largest violation of `y_i (u_i'x - s_i) >= 0` over saturated readings.
pub fn consistency_violation<Op: LinearOperator + ?Sized>(op: &Op, obs: &SaturatedObservations, x: &[f64]) -> f64 {
    let ux = op.apply_vec(x);
    obs.y
        .iter()
        .enumerate()
        .filter_map(|(i, y)| y.map(|side| (side.sign() * (obs.s[i] - ux[i])).max(0.0)))
        .fold(0.0, f64::max)
}

/// Objective of `model` at `x` with the l1 regularizer. Constraint models
/// return `+inf` outside their feasible set (the ball for CSC; RDCS is
/// reported without its constraints, see [`consistency_violation`]).
pub fn model_objective<Op: LinearOperator + ?Sized>(
    model: Model,
    op: &Op,
    obs: &SaturatedObservations,
    params: &SolverParams,
    x: &[f64],
) -> f64 {
    let ux = op.apply_vec(x);
    let l1 = params.mu * norm1(x);
    match model {
        Model::Csc => {
            if crate::linalg::norm2(x) > params.c * (1.0 + 1e-12) {
                return f64::INFINITY;
            }
            l1 + data_terms(&ux, obs, params.lambda, params.tau)
        }
        Model::Csr => {
            let nx2: f64 = x.iter().map(|v| v * v).sum();
            l1 + 0.5 * params.gamma * nx2 + data_terms(&ux, obs, params.lambda, params.tau)
        }
        Model::Lasso | Model::Rdcs => l1 + data_terms(&ux, obs, 0.0, 0.0),
    }
}

fn check_dims<Op: LinearOperator + ?Sized>(op: &Op, obs: &SaturatedObservations) -> Result<()> {
    obs.validate()?;
    if op.rows() != obs.len() {
        return Err(Error::Dimension(format!(
            "operator has {} rows, {} observations",
            op.rows(),
            obs.len()
        )));
    }
    Ok(())
}

/// Ball-constrained mixed one-bit model.
pub fn solve_m1bitcsc(u: &SensingMatrix, obs: &SaturatedObservations, params: &SolverParams) -> Result<Solution> {
    check_dims(u, obs)?;
    Admm::new(u, obs, *params, NormTerm::Ball(params.c))?
        .with_regularizer(L1Norm::new(params.mu))
        .solve()
}

/// Ridge-regularized mixed one-bit model.
pub fn solve_m1bitcsr(u: &SensingMatrix, obs: &SaturatedObservations, params: &SolverParams) -> Result<Solution> {
    check_dims(u, obs)?;
    Admm::new(u, obs, *params, NormTerm::Ridge(params.gamma))?
        .with_regularizer(L1Norm::new(params.mu))
        .solve()
}

/// `min mu ||x||_1 + ||U x - p||^2 / 2` over the given (analog) rows.
pub fn solve_lasso(u: &SensingMatrix, p: &[f64], mu: f64, params: &SolverParams) -> Result<Solution> {
    let obs = SaturatedObservations::all_analog(p.to_vec());
    check_dims(u, &obs)?;
    let params = SolverParams {
        mu,
        lambda: 0.0,
        ..*params
    };
    let sol = Admm::new(u, &obs, params, NormTerm::Ridge(0.0))?
        .with_regularizer(L1Norm::new(mu))
        .solve();
    sol
}

/// RDCS: analog fit subject to `y_i (u_i'x - s_i) >= 0` on saturated
/// readings, solved as the hinge model with a very large one-bit weight,
/// `tau = 0` and no norm term.
pub fn solve_rdcs(u: &SensingMatrix, obs: &SaturatedObservations, mu: f64, params: &SolverParams) -> Result<Solution> {
    check_dims(u, obs)?;
    let n = obs.saturated_count();
    let lambda = RDCS_LAMBDA_SCALE * default_hyperparams(obs.len(), n.max(1)).lambda;
    let params = SolverParams {
        mu,
        lambda,
        tau: 0.0,
        ..*params
    };
    let mut sol = Admm::new(u, obs, params, NormTerm::Ridge(0.0))?
        .with_regularizer(L1Norm::new(mu))
        .solve()?;
    sol.objective = model_objective(Model::Rdcs, u, obs, &params, sol.x_hat.as_slice());
    let viol = consistency_violation(u, obs, sol.x_hat.as_slice());
    if viol > RDCS_MAX_VIOLATION {
        sol.converged = false;
    }
    Ok(sol)
}

/// Constraint violation above which an RDCS solve is flagged.
pub const RDCS_MAX_VIOLATION: f64 = 1e-4;

/// Dispatch on [`Model`]. For the lasso, only the analog rows are used.
pub fn solve_model(model: Model, u: &SensingMatrix, obs: &SaturatedObservations, params: &SolverParams) -> Result<Solution> {
    match model {
        Model::Csc => solve_m1bitcsc(u, obs, params),
        Model::Csr => solve_m1bitcsr(u, obs, params),
        Model::Rdcs => solve_rdcs(u, obs, params.mu, params),
        Model::Lasso => {
            let idx = obs.analog_indices();
            let ua = u.select_rows(&idx)?;
            let pa: Vec<f64> = idx.iter().map(|&i| obs.p[i]).collect();
            solve_lasso(&ua, &pa, params.mu, params)
        }
    }
}

#[cfg(test)]
mod tests;
