use std::time::Instant;

use super::fista::{L1Norm, Regularizer, XSubproblem};
use super::{data_terms, Solution, SolverParams};
use crate::error::{Error, Result};
use crate::linalg::{norm2, power_iteration, LinearOperator};
use crate::prox::{pinball_shrink_unchecked, project_l2_ball_in_place};
use crate::sensing::{SaturatedObservations, Signal};

/// How the `z` copy of `x` is constrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormTerm {
    /// `||z|| <= c`; an infinite radius means no constraint.
    Ball(f64),
    /// `gamma/2 ||z||^2`; zero disables the term.
    Ridge(f64),
}

impl NormTerm {
    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            NormTerm::Ball(_) => 0.0,
            NormTerm::Ridge(g) if g > 0.0 => 0.5 * g * x.iter().map(|v| v * v).sum::<f64>(),
            NormTerm::Ridge(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    /// `||e - y(s - U'x)||` over saturated rows.
    pub primal_e: f64,
    /// `||z - x||`
    pub primal_z: f64,
    /// Change of the constrained quantities between iterations, scaled by
    /// the penalties.
    pub dual: f64,
}

/// Primal and dual iterates. `e` and `alpha` have one entry per reading;
/// entries on analog readings stay zero.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: Vec<f64>,
    pub e: Vec<f64>,
    pub z: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub iter: usize,
    pub residuals: Residuals,
}

impl AdmmState {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            x: vec![0.0; d],
            e: vec![0.0; m],
            z: vec![0.0; d],
            alpha: vec![0.0; m],
            beta: vec![0.0; d],
            iter: 0,
            residuals: Residuals::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub primal_e: f64,
    pub primal_z: f64,
    pub dual: f64,
    pub wall_time: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "iter,objective,primal_e,primal_z,dual,wall_time";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.iter, self.objective, self.primal_e, self.primal_z, self.dual, self.wall_time
        )
    }
}

type TraceFn<'a> = Box<dyn FnMut(&TraceRow) + 'a>;

/// ADMM for `R(x) + analog LS + lambda * pinball(saturated) + norm term`.
///
/// Each iteration updates `e`, `z`, `x`, `alpha`, `beta` in that order.
/// The slack is `e_i = y_i (s_i - u_i'x)`, positive when reading `i` is on
/// the wrong side of its threshold.
pub struct Admm<'a, Op: LinearOperator + ?Sized, R: Regularizer = L1Norm> {
    op: &'a Op,
    obs: &'a SaturatedObservations,
    params: SolverParams,
    norm: NormTerm,
    reg: R,
    state: AdmmState,
    trace: Option<TraceFn<'a>>,
    trace_every: usize,
}

impl<'a, Op: LinearOperator + ?Sized> Admm<'a, Op, L1Norm> {
    pub fn new(op: &'a Op, obs: &'a SaturatedObservations, params: SolverParams, norm: NormTerm) -> Result<Self> {
        params.validate()?;
        if op.rows() != obs.len() {
            return Err(Error::Dimension(format!(
                "operator has {} rows, {} observations",
                op.rows(),
                obs.len()
            )));
        }
        match norm {
            NormTerm::Ball(c) if !(c > 0.0) => return Err(Error::InvalidSpec("ball radius must be > 0".into())),
            NormTerm::Ridge(g) if !(g >= 0.0) || !g.is_finite() => {
                return Err(Error::InvalidSpec("ridge weight must be finite and >= 0".into()))
            }
            _ => {}
        }
        Ok(Self {
            op,
            obs,
            params,
            norm,
            reg: L1Norm::new(params.mu),
            state: AdmmState::zeros(op.rows(), op.cols()),
            trace: None,
            trace_every: 1,
        })
    }
}

impl<'a, Op: LinearOperator + ?Sized, R: Regularizer> Admm<'a, Op, R> {
    pub fn with_regularizer<R2: Regularizer>(self, reg: R2) -> Admm<'a, Op, R2> {
        Admm {
            op: self.op,
            obs: self.obs,
            params: self.params,
            norm: self.norm,
            reg,
            state: self.state,
            trace: self.trace,
            trace_every: self.trace_every,
        }
    }

    /// Starts from `x0` (with `z = x0`) instead of zero.
    pub fn warm_start(mut self, x0: &[f64]) -> Result<Self> {
        if x0.len() != self.op.cols() {
            return Err(Error::Dimension(format!(
                "warm start has length {}, expected {}",
                x0.len(),
                self.op.cols()
            )));
        }
        self.state.x.copy_from_slice(x0);
        self.state.z.copy_from_slice(x0);
        Ok(self)
    }

    /// Calls `f` every `every` iterations (and on the last one).
    pub fn trace(mut self, every: usize, f: impl FnMut(&TraceRow) + 'a) -> Self {
        self.trace = Some(Box::new(f));
        self.trace_every = every.max(1);
        self
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    fn objective(&mut self, x: &[f64], ux: &[f64]) -> f64 {
        self.reg.value(x) + self.norm.value(x) + data_terms(ux, self.obs, self.params.lambda, self.params.tau)
    }

    pub fn solve(mut self) -> Result<Solution> {
        let start = Instant::now();
        let (m, d) = (self.op.rows(), self.op.cols());
        let p = self.params;
        let (t1, t2) = (p.theta1, p.theta2);
        let obs = self.obs;
        let sat: Vec<usize> = (0..m).filter(|&i| obs.y[i].is_some()).collect();
        let n = sat.len();

        let mut sub = XSubproblem::from_iterates(obs, &self.state.e, &self.state.z, &self.state.alpha, &self.state.beta, t1, t2);
        let top = power_iteration(self.op, Some(&sub.weights), 60);
        let lip = 1.02 * top + t2;

        let mut ux = self.op.apply_vec(&self.state.x);
        let mut ux_prev = ux.clone();
        let mut x_prev = self.state.x.clone();
        let tol_e = p.tol_primal * (n.max(1) as f64).sqrt();
        let tol_z = p.tol_primal * (d.max(1) as f64).sqrt();
        let tol_dual = p.tol_dual * ((n + d).max(1) as f64).sqrt();
        let mut converged = false;

        let mut iter = 0;
        while iter < p.max_outer {
            iter += 1;
            let st = &mut self.state;
            // e-step
            for &i in &sat {
                let y = obs.y[i].expect("saturated row").sign();
                let t = y * (obs.s[i] - ux[i]) - st.alpha[i] / t1;
                st.e[i] = pinball_shrink_unchecked(t, p.lambda / t1, p.tau);
            }
            // z-step
            match self.norm {
                NormTerm::Ball(c) => {
                    for k in 0..d {
                        st.z[k] = st.x[k] - st.beta[k] / t2;
                    }
                    project_l2_ball_in_place(&mut st.z, c);
                }
                NormTerm::Ridge(g) => {
                    for k in 0..d {
                        st.z[k] = (t2 * st.x[k] - st.beta[k]) / (t2 + g);
                    }
                }
            }
            // x-step
            x_prev.copy_from_slice(&st.x);
            ux_prev.copy_from_slice(&ux);
            if top == 0.0 {
                sub.update_center(&st.z, &st.beta);
                self.reg.prox(&sub.center, 1.0 / t2, &mut st.x);
                self.op.apply(&st.x, &mut ux);
            } else {
                sub.update_targets(obs, &st.e, &st.alpha, t1);
                sub.update_center(&st.z, &st.beta);
                sub.solve(self.op, &mut self.reg, lip, &mut st.x, &mut ux, p.fista_iters, p.fista_tol);
            }
            // dual steps and residuals
            let mut r_e = 0.0;
            let mut r_dual = 0.0;
            for &i in &sat {
                let y = obs.y[i].expect("saturated row").sign();
                let r = st.e[i] - y * (obs.s[i] - ux[i]);
                st.alpha[i] += t1 * r;
                r_e += r * r;
                let du = ux[i] - ux_prev[i];
                r_dual += t1 * t1 * du * du;
            }
            let mut r_z = 0.0;
            for k in 0..d {
                let r = st.z[k] - st.x[k];
                st.beta[k] += t2 * r;
                r_z += r * r;
                let dx = st.x[k] - x_prev[k];
                r_dual += t2 * t2 * dx * dx;
            }
            st.residuals = Residuals {
                primal_e: r_e.sqrt(),
                primal_z: r_z.sqrt(),
                dual: r_dual.sqrt(),
            };
            st.iter = iter;
            let res = st.residuals;
            if !(res.primal_e.is_finite() && res.primal_z.is_finite() && res.dual.is_finite()) {
                return Err(Error::Solver(format!("non-finite residual at iteration {iter}")));
            }
            converged = res.primal_e < tol_e && res.primal_z < tol_z && res.dual < tol_dual;
            let last = converged || iter == p.max_outer;
            if self.trace.is_some() && (iter % self.trace_every == 0 || last) {
                let x = self.state.x.clone();
                let objective = self.objective(&x, &ux);
                let row = TraceRow {
                    iter,
                    objective,
                    primal_e: res.primal_e,
                    primal_z: res.primal_z,
                    dual: res.dual,
                    wall_time: start.elapsed().as_secs_f64(),
                };
                if let Some(f) = self.trace.as_mut() {
                    f(&row);
                }
            }
            if converged {
                break;
            }
        }

        let mut x = std::mem::take(&mut self.state.x);
        if let NormTerm::Ball(c) = self.norm {
            project_l2_ball_in_place(&mut x, c);
            ux = self.op.apply_vec(&x);
        }
        let objective = self.objective(&x, &ux);
        if !objective.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite solution".into()));
        }
        log::debug!(
            "admm: {} iterations, converged={}, residuals {:?}, |x|={:.4}",
            iter,
            converged,
            self.state.residuals,
            norm2(&x)
        );
        Ok(Solution {
            x_hat: Signal::new(x)?,
            objective,
            iters: iter,
            converged,
            wall_time: start.elapsed().as_secs_f64(),
            residuals: self.state.residuals,
        })
    }
}
