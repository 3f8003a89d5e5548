use rand_distr::{Distribution, StandardNormal};

use super::Sinogram;
use crate::error::{Error, Result};
use crate::sensing::{seeded_rng, ObservationMode, SaturatedObservations, Side};

/// A sinogram after overexposure, with the per-view thresholds.
#[derive(Debug, Clone)]
pub struct Overexposure {
    /// Zero-filled readings; every reading at or below its view threshold is
    /// flagged lower-saturated.
    pub obs: SaturatedObservations,
    /// `s_beta` per view.
    pub s_beta: Vec<f64>,
    /// `s_beta` expanded to one entry per reading.
    pub s_ray: Vec<f64>,
}

/// Detector with dynamic range `kappa`: in view `b` only line integrals
/// above `s_b = max(p_max(b) - kappa, 0)` are measured, the rest read zero.
pub fn apply_overexposure(sino: &Sinogram, kappa: f64) -> Result<Overexposure> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidSpec(format!("kappa must be positive, got {kappa}")));
    }
    if sino.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sinogram"));
    }
    let nb = sino.n_bins;
    let s_beta: Vec<f64> = sino.view_max().into_iter().map(|p| (p - kappa).max(0.0)).collect();
    let m = sino.values.len();
    let mut obs = SaturatedObservations {
        p: vec![0.0; m],
        psi: vec![false; m],
        y: vec![None; m],
        s: vec![0.0; m],
        s_minus: s_beta.iter().copied().fold(f64::INFINITY, f64::min),
        s_plus: f64::INFINITY,
        mode: ObservationMode::ZeroFilled,
    };
    let mut s_ray = vec![0.0; m];
    for i in 0..m {
        let s = s_beta[i / nb];
        s_ray[i] = s;
        obs.s[i] = s;
        let q = sino.values[i];
        if q > s {
            obs.p[i] = q;
        } else {
            obs.psi[i] = true;
            obs.y[i] = Some(Side::Lower);
        }
    }
    Ok(Overexposure { obs, s_beta, s_ray })
}

/// Readings that are truly lower-saturated: `0 < q <= s`, from the clean
/// line integrals.
pub fn true_saturation_mask(clean: &Sinogram, s_ray: &[f64]) -> Result<Vec<bool>> {
    if clean.values.len() != s_ray.len() {
        return Err(Error::Dimension("threshold count".into()));
    }
    Ok(clean.values.iter().zip(s_ray).map(|(&q, &s)| q > 0.0 && q <= s).collect())
}

/// Adds i.i.d. `N(0, sigma^2)` to every line integral.
pub fn add_projection_noise(sino: &Sinogram, sigma: f64, seed: u64) -> Result<Sinogram> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSpec(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut out = sino.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = seeded_rng(seed, 2);
    for v in &mut out.values {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * e;
    }
    Ok(out)
}

/// Estimates the per-view thresholds of an overexposed sinogram when the
/// dynamic range is unknown.
///
/// Every positive reading in view `b` exceeds `p_max(b) - kappa`, so the
/// largest gap `p_max(b) - min_positive(b)` bounds `kappa` from below. The
/// estimate uses that bound, kept strictly below each view's smallest
/// positive reading so that only zero readings become candidates.
pub fn estimate_view_thresholds(observed: &Sinogram) -> Result<Vec<f64>> {
    if observed.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sinogram"));
    }
    let stats: Vec<(f64, f64)> = (0..observed.n_views)
        .map(|v| {
            let row = observed.view(v);
            let max = row.iter().copied().fold(0.0, f64::max);
            let min_pos = row.iter().copied().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min);
            (max, min_pos)
        })
        .collect();
    let kappa = stats
        .iter()
        .filter(|(_, lo)| lo.is_finite())
        .map(|(hi, lo)| hi - lo)
        .fold(0.0, f64::max);
    Ok(stats
        .iter()
        .map(|&(hi, lo)| {
            let s = (hi - kappa).max(0.0);
            if lo.is_finite() && s >= lo {
                f64::from_bits(lo.to_bits() - 1)
            } else {
                s
            }
        })
        .collect())
}
