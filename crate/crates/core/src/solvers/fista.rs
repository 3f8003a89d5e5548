//! The `x`-subproblem: a weighted least-squares term plus a proximal
//! penalty and a simple regularizer, solved by monotone FISTA.

use crate::error::{Error, Result};
use crate::linalg::{dist2, norm1, norm2, power_iteration, LinearOperator};
use crate::prox::soft_threshold_scalar;
use crate::sensing::SaturatedObservations;

/// A regularizer with a cheap proximal map.
pub trait Regularizer {
    fn value(&self, x: &[f64]) -> f64;
    /// `out = argmin_u step R(u) + ||u - v||^2 / 2`
    fn prox(&mut self, v: &[f64], step: f64, out: &mut [f64]);
}

/// `mu ||x||_1`
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub mu: f64,
}

impl L1Norm {
    pub fn new(mu: f64) -> Self {
        Self { mu }
    }
}

impl Regularizer for L1Norm {
    fn value(&self, x: &[f64]) -> f64 {
        self.mu * norm1(x)
    }

    fn prox(&mut self, v: &[f64], step: f64, out: &mut [f64]) {
        let t = self.mu * step;
        for (o, &vi) in out.iter_mut().zip(v) {
            *o = soft_threshold_scalar(vi, t);
        }
    }
}

/// Smooth part `sum_i w_i (u_i'x - t_i)^2 / 2 + theta2/2 ||x - v||^2`.
///
/// For the mixed models `t_i = p_i`, `w_i = 1` on analog rows and
/// `t_i = s_i - y_i (e_i + alpha_i/theta1)`, `w_i = theta1` on saturated
/// rows; `v = z + beta/theta2`.
#[derive(Debug, Clone)]
pub struct XSubproblem {
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub center: Vec<f64>,
    pub theta2: f64,
}

impl XSubproblem {
    /// Builds the subproblem from the current ADMM iterates.
    #[allow(clippy::too_many_arguments)]
    pub fn from_iterates(
        obs: &SaturatedObservations,
        e: &[f64],
        z: &[f64],
        alpha: &[f64],
        beta: &[f64],
        theta1: f64,
        theta2: f64,
    ) -> Self {
        let m = obs.len();
        let mut targets = vec![0.0; m];
        let mut weights = vec![1.0; m];
        for i in 0..m {
            match obs.y[i] {
                None => targets[i] = obs.p[i],
                Some(side) => {
                    targets[i] = obs.s[i] - side.sign() * (e[i] + alpha[i] / theta1);
                    weights[i] = theta1;
                }
            }
        }
        let center = z.iter().zip(beta).map(|(zi, bi)| zi + bi / theta2).collect();
        Self {
            targets,
            weights,
            center,
            theta2,
        }
    }

    pub fn update_targets(&mut self, obs: &SaturatedObservations, e: &[f64], alpha: &[f64], theta1: f64) {
        for i in 0..obs.len() {
            if let Some(side) = obs.y[i] {
                self.targets[i] = obs.s[i] - side.sign() * (e[i] + alpha[i] / theta1);
            }
        }
    }

    pub fn update_center(&mut self, z: &[f64], beta: &[f64]) {
        for ((c, zi), bi) in self.center.iter_mut().zip(z).zip(beta) {
            *c = zi + bi / self.theta2;
        }
    }

    /// Value of the smooth part given `x` and `ux = U'x`.
    pub fn smooth_value_with(&self, x: &[f64], ux: &[f64]) -> f64 {
        let mut f = 0.0;
        for i in 0..ux.len() {
            let r = ux[i] - self.targets[i];
            f += 0.5 * self.weights[i] * r * r;
        }
        let mut g = 0.0;
        for (xi, ci) in x.iter().zip(&self.center) {
            g += (xi - ci) * (xi - ci);
        }
        f + 0.5 * self.theta2 * g
    }

    pub fn smooth_value<Op: LinearOperator + ?Sized>(&self, op: &Op, x: &[f64]) -> f64 {
        let ux = op.apply_vec(x);
        self.smooth_value_with(x, &ux)
    }

    pub fn smooth_gradient<Op: LinearOperator + ?Sized>(&self, op: &Op, x: &[f64]) -> Vec<f64> {
        let ux = op.apply_vec(x);
        let mut r = vec![0.0; ux.len()];
        let mut g = vec![0.0; x.len()];
        self.gradient_with(op, x, &ux, &mut r, &mut g);
        g
    }

    fn gradient_with<Op: LinearOperator + ?Sized>(&self, op: &Op, x: &[f64], ux: &[f64], r: &mut [f64], g: &mut [f64]) {
        for i in 0..ux.len() {
            r[i] = self.weights[i] * (ux[i] - self.targets[i]);
        }
        op.adjoint(r, g);
        for ((gi, xi), ci) in g.iter_mut().zip(x).zip(&self.center) {
            *gi += self.theta2 * (xi - ci);
        }
    }

    /// Lipschitz constant of the smooth gradient: power-iteration estimate
    /// of `||U' W U||` inflated by 2%, plus `theta2`.
    pub fn lipschitz<Op: LinearOperator + ?Sized>(&self, op: &Op) -> f64 {
        let top = power_iteration(op, Some(&self.weights), 60);
        1.02 * top + self.theta2
    }

    /// Monotone FISTA with function-value restart, warm-started from `x`
    /// (with `ux = U'x` kept in sync). Returns the number of prox steps.
    ///
    /// A step is only accepted when it does not increase the objective;
    /// otherwise momentum is reset and the step retried from `x`.
    #[allow(clippy::too_many_arguments)]
    pub fn solve<Op: LinearOperator + ?Sized, R: Regularizer + ?Sized>(
        &self,
        op: &Op,
        reg: &mut R,
        lipschitz: f64,
        x: &mut Vec<f64>,
        ux: &mut Vec<f64>,
        max_iter: usize,
        tol: f64,
    ) -> usize {
        let d = x.len();
        let m = ux.len();
        let step = 1.0 / lipschitz;
        let mut f_x = self.smooth_value_with(x, ux) + reg.value(x);
        let mut y = x.clone();
        let mut uy = ux.clone();
        let mut grad = vec![0.0; d];
        let mut resid = vec![0.0; m];
        let mut arg = vec![0.0; d];
        let mut cand = vec![0.0; d];
        let mut ucand = vec![0.0; m];
        let mut t = 1.0f64;
        let mut momentum = false;
        let mut steps = 0;
        while steps < max_iter {
            steps += 1;
            self.gradient_with(op, &y, &uy, &mut resid, &mut grad);
            for k in 0..d {
                arg[k] = y[k] - step * grad[k];
            }
            reg.prox(&arg, step, &mut cand);
            op.apply(&cand, &mut ucand);
            let f_c = self.smooth_value_with(&cand, &ucand) + reg.value(&cand);
            if f_c > f_x {
                if momentum {
                    t = 1.0;
                    y.copy_from_slice(x);
                    uy.copy_from_slice(ux);
                    momentum = false;
                    continue;
                }
                // No descent from x itself: x is optimal to working precision.
                break;
            }
            let moved = dist2(&cand, x);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let w = (t - 1.0) / t_next;
            for k in 0..d {
                y[k] = cand[k] + w * (cand[k] - x[k]);
            }
            for i in 0..m {
                uy[i] = ucand[i] + w * (ucand[i] - ux[i]);
            }
            std::mem::swap(x, &mut cand);
            std::mem::swap(ux, &mut ucand);
            f_x = f_c;
            t = t_next;
            momentum = true;
            if moved <= tol * norm2(x).max(1.0) {
                break;
            }
        }
        steps
    }
}

/// Approximate minimizer of the ADMM `x`-subproblem
/// `mu ||x||_1 + sum_{analog} (u'x - p)^2/2 + theta2/2 ||x - z - beta/theta2||^2
///  + theta1/2 sum_{sat} (e - y(s - u'x) + alpha/theta1)^2`,
/// warm-started from `x0`. `beta` is the multiplier of `z - x` and `alpha`
/// that of `e - y(s - U'x)`.
///
/// When the data operator is zero the subproblem is separable and the
/// soft-thresholded center is returned directly.
#[allow(clippy::too_many_arguments)]
pub fn fista_x_subproblem<Op: LinearOperator + ?Sized>(
    op: &Op,
    obs: &SaturatedObservations,
    e: &[f64],
    z: &[f64],
    alpha: &[f64],
    beta: &[f64],
    x0: &[f64],
    params: &super::SolverParams,
) -> Result<Vec<f64>> {
    let (m, d) = (op.rows(), op.cols());
    if obs.len() != m || e.len() != m || alpha.len() != m || z.len() != d || beta.len() != d || x0.len() != d {
        return Err(Error::Dimension("x-subproblem inputs disagree with the operator".into()));
    }
    let sub = XSubproblem::from_iterates(obs, e, z, alpha, beta, params.theta1, params.theta2);
    let top = power_iteration(op, Some(&sub.weights), 60);
    let mut reg = L1Norm::new(params.mu);
    if top == 0.0 {
        let mut out = vec![0.0; d];
        reg.prox(&sub.center, 1.0 / params.theta2, &mut out);
        return Ok(out);
    }
    let lip = 1.02 * top + params.theta2;
    let mut x = x0.to_vec();
    let mut ux = op.apply_vec(&x);
    sub.solve(op, &mut reg, lip, &mut x, &mut ux, params.fista_iters, params.fista_tol);
    Ok(x)
}
