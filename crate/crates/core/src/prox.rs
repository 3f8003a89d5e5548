//! Closed-form proximal maps and losses used by every solver.
//!
//! Sign convention for the one-bit terms: for a saturated reading the solver
//! tracks the slack `e = y (s - u'x)`, which is positive when the estimate
//! lands on the wrong side of the threshold. The pinball loss charges that
//! side with unit slope and applies slope `-tau` on the consistent side, so
//! `tau = 0` is the hinge and `tau = -1` the linear correlation loss.

use crate::error::{Error, Result};
use crate::linalg::norm2;

/// Pinball slope parameter, `-1 <= tau <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinballParams {
    tau: f64,
}

impl PinballParams {
    pub fn new(tau: f64) -> Result<Self> {
        if !(-1.0..=0.0).contains(&tau) {
            return Err(Error::InvalidSpec(format!(
                "pinball tau must lie in [-1, 0], got {tau}"
            )));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// `L_tau(t) = t` for `t >= 0`, `-tau * t` for `t < 0`.
#[inline]
pub fn pinball_loss(t: f64, tau: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        -tau * t
    }
}

/// Proximal map of `rho * L_tau`: `argmin_e rho L_tau(e) + (e - t)^2 / 2`.
///
/// The subdifferential of `L_tau` at zero is `[-tau, 1]`, so the dead zone is
/// `[-tau rho, rho]`.
pub fn pinball_shrink(t: f64, rho: f64, tau: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "shrinkage radius must be positive, got {rho}"
        )));
    }
    Ok(pinball_shrink_unchecked(t, rho, tau))
}

#[inline]
pub(crate) fn pinball_shrink_unchecked(t: f64, rho: f64, tau: f64) -> f64 {
    if t >= rho {
        t - rho
    } else if t <= -tau * rho {
        t + tau * rho
    } else {
        0.0
    }
}

/// Euclidean projection onto the ball `||v|| <= c`.
pub fn project_l2_ball(v: &[f64], c: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    project_l2_ball_in_place(&mut out, c);
    out
}

pub(crate) fn project_l2_ball_in_place(v: &mut [f64], c: f64) {
    if c.is_infinite() {
        return;
    }
    let n = norm2(v);
    if n > c {
        let s = c / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Componentwise `sign(v) max(|v| - mu, 0)`.
pub fn soft_threshold(v: &[f64], mu: f64) -> Vec<f64> {
    v.iter().map(|&x| soft_threshold_scalar(x, mu)).collect()
}

#[inline]
pub(crate) fn soft_threshold_scalar(x: f64, mu: f64) -> f64 {
    if x > mu {
        x - mu
    } else if x < -mu {
        x + mu
    } else {
        0.0
    }
}

/// Closed-form `z` step of the ridge-regularized model:
/// `z = (theta2 x - beta) / (theta2 + gamma)`.
pub fn shrink_m1bitcsr_z(x: &[f64], beta: &[f64], theta2: f64, gamma: f64) -> Vec<f64> {
    let denom = theta2 + gamma;
    x.iter()
        .zip(beta)
        .map(|(xi, bi)| (theta2 * xi - bi) / denom)
        .collect()
}

/// Result of [`tv_prox`].
#[derive(Debug, Clone)]
pub struct TvProx {
    pub image: Vec<f64>,
    /// Primal objective `weight TV(u) + ||u - img||^2 / 2` of the best iterate
    /// after each inner iteration.
    pub objective: Vec<f64>,
    /// Primal-dual gap at the returned iterate.
    pub gap: f64,
}

/// Isotropic discrete total variation with forward differences and
/// reflexive (Neumann) boundary.
pub fn total_variation(u: &[f64], nx: usize, ny: usize) -> f64 {
    let mut tv = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let k = iy * nx + ix;
            let gx = if ix + 1 < nx { u[k + 1] - u[k] } else { 0.0 };
            let gy = if iy + 1 < ny { u[k + nx] - u[k] } else { 0.0 };
            tv += (gx * gx + gy * gy).sqrt();
        }
    }
    tv
}

fn gradient(u: &[f64], nx: usize, ny: usize, gx: &mut [f64], gy: &mut [f64]) {
    for iy in 0..ny {
        for ix in 0..nx {
            let k = iy * nx + ix;
            gx[k] = if ix + 1 < nx { u[k + 1] - u[k] } else { 0.0 };
            gy[k] = if iy + 1 < ny { u[k + nx] - u[k] } else { 0.0 };
        }
    }
}

/// `div = -grad^T`.
fn divergence(px: &[f64], py: &[f64], nx: usize, ny: usize, out: &mut [f64]) {
    for iy in 0..ny {
        for ix in 0..nx {
            let k = iy * nx + ix;
            let dx = if nx == 1 {
                0.0
            } else if ix == 0 {
                px[k]
            } else if ix + 1 == nx {
                -px[k - 1]
            } else {
                px[k] - px[k - 1]
            };
            let dy = if ny == 1 {
                0.0
            } else if iy == 0 {
                py[k]
            } else if iy + 1 == ny {
                -py[k - nx]
            } else {
                py[k] - py[k - nx]
            };
            out[k] = dx + dy;
        }
    }
}

/// Dual step of the fixed-point iteration; `1/8` bounds `||grad||^2 <= 8`.
pub const TV_DUAL_STEP: f64 = 0.125;
pub const TV_DEFAULT_INNER_ITERS: usize = 30;

/// Approximate `argmin_u weight TV(u) + ||u - img||^2 / 2` on an `nx` by `ny`
/// row-major image by the dual fixed-point iteration
/// `p <- (p + s grad(div p - img/w)) / (1 + s |grad(div p - img/w)|)`.
///
/// The best primal iterate seen so far is returned, so the recorded
/// objective never increases.
pub fn tv_prox(img: &[f64], nx: usize, ny: usize, weight: f64, inner_iters: usize) -> Result<TvProx> {
    tv_prox_warm(img, nx, ny, weight, inner_iters, None)
}

/// [`tv_prox`] with an optional warm-start dual field `(px, py)`, updated in
/// place.
pub fn tv_prox_warm(
    img: &[f64],
    nx: usize,
    ny: usize,
    weight: f64,
    inner_iters: usize,
    dual: Option<&mut (Vec<f64>, Vec<f64>)>,
) -> Result<TvProx> {
    let n = nx * ny;
    if img.len() != n {
        return Err(Error::Dimension(format!(
            "image has {} values, grid is {nx}x{ny}",
            img.len()
        )));
    }
    if !weight.is_finite() || weight < 0.0 {
        return Err(Error::InvalidSpec(format!("TV weight must be >= 0, got {weight}")));
    }
    let data_obj = |u: &[f64]| {
        let fid: f64 = u.iter().zip(img).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
        weight * total_variation(u, nx, ny) + fid
    };
    if inner_iters == 0 || weight == 0.0 {
        let obj = data_obj(img);
        return Ok(TvProx {
            image: img.to_vec(),
            objective: vec![obj],
            gap: if weight == 0.0 { 0.0 } else { f64::NAN },
        });
    }

    let mut local = (vec![0.0; n], vec![0.0; n]);
    let (px, py) = match dual {
        Some(d) if d.0.len() == n && d.1.len() == n => (&mut d.0, &mut d.1),
        Some(d) => {
            d.0 = vec![0.0; n];
            d.1 = vec![0.0; n];
            (&mut d.0, &mut d.1)
        }
        None => (&mut local.0, &mut local.1),
    };

    let mut div = vec![0.0; n];
    let mut arg = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut best = img.to_vec();
    let mut best_obj = data_obj(img);
    let mut history = Vec::with_capacity(inner_iters);
    let inv_w = 1.0 / weight;

    for _ in 0..inner_iters {
        divergence(px, py, nx, ny, &mut div);
        for k in 0..n {
            arg[k] = div[k] - img[k] * inv_w;
        }
        gradient(&arg, nx, ny, &mut gx, &mut gy);
        for k in 0..n {
            let mag = (gx[k] * gx[k] + gy[k] * gy[k]).sqrt();
            let den = 1.0 + TV_DUAL_STEP * mag;
            px[k] = (px[k] + TV_DUAL_STEP * gx[k]) / den;
            py[k] = (py[k] + TV_DUAL_STEP * gy[k]) / den;
        }
        divergence(px, py, nx, ny, &mut div);
        for k in 0..n {
            u[k] = img[k] - weight * div[k];
        }
        let obj = data_obj(&u);
        if obj <= best_obj {
            best_obj = obj;
            best.copy_from_slice(&u);
        }
        history.push(best_obj);
    }

    // Dual value at the final p: ||img||^2/2 - ||img - w div p||^2/2.
    divergence(px, py, nx, ny, &mut div);
    let dual_val: f64 = img
        .iter()
        .zip(&div)
        .map(|(g, d)| {
            let r = g - weight * d;
            0.5 * (g * g - r * r)
        })
        .sum();

    Ok(TvProx {
        image: best,
        objective: history,
        gap: (best_obj - dual_val).max(0.0),
    })
}
