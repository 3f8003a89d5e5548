use super::{FanBeamProjector, ImageGrid};
use crate::error::{Error, Result};
use crate::isd::{round_observations, run_isd, IsdConfig, IsdFailure, IsdMonitor, IsdOutcome};
use crate::linalg::LinearOperator;
use crate::prox::{total_variation, tv_prox_warm};
use crate::sensing::SaturatedObservations;
use crate::solvers::{Admm, NormTerm, Regularizer, Solution, SolverParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SartParams {
    pub iters: usize,
    pub relax: f64,
}

impl Default for SartParams {
    fn default() -> Self {
        Self { iters: 30, relax: 0.5 }
    }
}

/// View-by-view SART on the rays where `mask` holds, starting from `x0`
/// (zero if absent). Negative pixels are clamped after every sweep.
pub fn sart(
    proj: &FanBeamProjector,
    p: &[f64],
    mask: &[bool],
    params: SartParams,
    x0: Option<&[f64]>,
) -> Result<ImageGrid> {
    let (m, d) = (proj.rows(), proj.cols());
    if p.len() != m || mask.len() != m {
        return Err(Error::Dimension(format!(
            "{} readings and {} mask entries for {m} rays",
            p.len(),
            mask.len()
        )));
    }
    if !(params.relax > 0.0 && params.relax < 2.0) {
        return Err(Error::InvalidSpec(format!("SART relaxation must lie in (0, 2), got {}", params.relax)));
    }
    let mut x = match x0 {
        Some(v) if v.len() == d => v.to_vec(),
        Some(v) => return Err(Error::Dimension(format!("initial image has {} pixels, expected {d}", v.len()))),
        None => vec![0.0; d],
    };
    let geom = *proj.geometry();
    let nb = geom.n_bins;
    let row_sums: Vec<f64> = (0..m).map(|r| proj.row(r).1.iter().map(|&v| v as f64).sum()).collect();
    let mut delta = vec![0.0; d];
    let mut col = vec![0.0; d];
    let mut touched: Vec<usize> = Vec::new();
    for _ in 0..params.iters {
        for v in 0..geom.n_views {
            touched.clear();
            for r in v * nb..(v + 1) * nb {
                if !mask[r] || row_sums[r] <= 0.0 {
                    continue;
                }
                let (cols, vals) = proj.row(r);
                let mut ax = 0.0;
                for (&c, &a) in cols.iter().zip(vals) {
                    ax += a as f64 * x[c as usize];
                }
                let corr = (p[r] - ax) / row_sums[r];
                for (&c, &a) in cols.iter().zip(vals) {
                    let c = c as usize;
                    if col[c] == 0.0 {
                        touched.push(c);
                    }
                    delta[c] += a as f64 * corr;
                    col[c] += a as f64;
                }
            }
            for &c in &touched {
                x[c] += params.relax * delta[c] / col[c];
                delta[c] = 0.0;
                col[c] = 0.0;
            }
        }
        x.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    proj.grid().with_values(x)
}

/// `weight TV(x)` restricted to non-negative images. The proximal map
/// applies the TV proximal map (warm-started from the previous dual field)
/// and clamps negative pixels.
#[derive(Debug, Clone)]
pub struct TvNonneg {
    pub weight: f64,
    pub nx: usize,
    pub ny: usize,
    pub inner_iters: usize,
    dual: (Vec<f64>, Vec<f64>),
}

impl TvNonneg {
    pub fn new(weight: f64, nx: usize, ny: usize, inner_iters: usize) -> Self {
        Self {
            weight,
            nx,
            ny,
            inner_iters,
            dual: (Vec::new(), Vec::new()),
        }
    }
}

impl Regularizer for TvNonneg {
    fn value(&self, x: &[f64]) -> f64 {
        self.weight * total_variation(x, self.nx, self.ny)
    }

    fn prox(&mut self, v: &[f64], step: f64, out: &mut [f64]) {
        match tv_prox_warm(v, self.nx, self.ny, self.weight * step, self.inner_iters, Some(&mut self.dual)) {
            Ok(r) => {
                for (o, u) in out.iter_mut().zip(r.image) {
                    *o = u.max(0.0);
                }
            }
            Err(_) => {
                for (o, &u) in out.iter_mut().zip(v) {
                    *o = u.max(0.0);
                }
            }
        }
    }
}

/// Hyperparameters of the TV-regularized ridge model on a CT system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvReconParams {
    pub tv_weight: f64,
    /// One-bit weight; `None` uses `m / (100 n)`.
    pub lambda: Option<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub max_outer: usize,
    /// Proximal-gradient steps per `x`-subproblem.
    pub inner_iters: usize,
    pub tv_inner_iters: usize,
    pub tol: f64,
}

impl Default for TvReconParams {
    fn default() -> Self {
        Self {
            tv_weight: 0.05,
            lambda: None,
            gamma: 1e-4,
            tau: 0.0,
            theta1: 1.0,
            theta2: 1.0,
            max_outer: 300,
            inner_iters: 5,
            tv_inner_iters: 20,
            tol: 1e-6,
        }
    }
}

/// Ridge-regularized mixed one-bit model with TV in place of the l1 norm:
/// analog least squares on unflagged readings, pinball terms on flagged
/// (lower-saturated) ones, `gamma/2 ||x||^2`, and `x >= 0`.
pub fn m1bitcsr_tv_reconstruct(
    proj: &FanBeamProjector,
    obs: &SaturatedObservations,
    params: &TvReconParams,
    warm: Option<&[f64]>,
) -> Result<Solution> {
    obs.validate()?;
    let grid = proj.grid();
    let n = obs.saturated_count();
    let lambda = params
        .lambda
        .unwrap_or(if n == 0 { 0.0 } else { obs.len() as f64 / (100.0 * n as f64) });
    let sp = SolverParams {
        mu: params.tv_weight,
        lambda,
        gamma: params.gamma,
        tau: params.tau,
        theta1: params.theta1,
        theta2: params.theta2,
        tol_primal: params.tol,
        tol_dual: params.tol,
        max_outer: params.max_outer,
        fista_iters: params.inner_iters,
        ..SolverParams::default()
    };
    let reg = TvNonneg::new(params.tv_weight, grid.nx, grid.ny, params.tv_inner_iters);
    let mut admm = Admm::new(proj, obs, sp, NormTerm::Ridge(params.gamma))?.with_regularizer(reg);
    if let Some(x0) = warm {
        admm = admm.warm_start(x0)?;
    }
    let mut sol = admm.solve()?;
    let x: Vec<f64> = sol.x_hat.as_slice().iter().map(|v| v.max(0.0)).collect();
    sol.x_hat = crate::sensing::Signal::new(x)?;
    Ok(sol)
}

/// Final image and detection history of a CT ISD run.
#[derive(Debug, Clone)]
pub struct CtIsdResult {
    pub image: ImageGrid,
    pub outcome: IsdOutcome,
}

/// SART-ISD: each round runs SART on the readings not flagged saturated.
pub fn sart_isd(
    proj: &FanBeamProjector,
    p: &[f64],
    cfg: &IsdConfig,
    params: SartParams,
    monitor: IsdMonitor<'_>,
) -> std::result::Result<CtIsdResult, IsdFailure> {
    let mut recon = |obs: &SaturatedObservations, warm: Option<&[f64]>| -> Result<Vec<f64>> {
        let mask: Vec<bool> = obs.psi.iter().map(|s| !s).collect();
        Ok(sart(proj, &obs.p, &mask, params, warm)?.values)
    };
    let outcome = run_isd(proj, p, cfg, &mut recon, monitor)?;
    let image = proj.grid().with_values(outcome.x_hat.clone()).map_err(|error| IsdFailure {
        error,
        history: outcome.history.clone(),
    })?;
    Ok(CtIsdResult { image, outcome })
}

/// M1bit-CSR-ISD with the TV-regularized reconstructor.
pub fn m1bitcsr_tv_isd(
    proj: &FanBeamProjector,
    p: &[f64],
    cfg: &IsdConfig,
    params: &TvReconParams,
    monitor: IsdMonitor<'_>,
) -> std::result::Result<CtIsdResult, IsdFailure> {
    let mut recon = |obs: &SaturatedObservations, warm: Option<&[f64]>| -> Result<Vec<f64>> {
        Ok(m1bitcsr_tv_reconstruct(proj, obs, params, warm)?.x_hat.into_vec())
    };
    let outcome = run_isd(proj, p, cfg, &mut recon, monitor)?;
    let image = proj.grid().with_values(outcome.x_hat.clone()).map_err(|error| IsdFailure {
        error,
        history: outcome.history.clone(),
    })?;
    Ok(CtIsdResult { image, outcome })
}

/// Observations that flag exactly `psi` among the candidate readings.
pub fn ideal_observations(p: &[f64], s_ray: &[f64], psi: &[bool]) -> SaturatedObservations {
    round_observations(p, s_ray, psi)
}
