use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FanBeamGeometry, ImageGrid, Sinogram};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbpFilter {
    RamLak,
    /// Ramp apodized by a raised cosine reaching zero at Nyquist.
    Hann,
}

/// Flat-detector fan-beam filtered back projection over a full scan.
///
/// Readings are rescaled to a virtual detector through the isocenter,
/// cosine weighted, filtered with the sampled ramp kernel, and back
/// projected with the inverse squared source distance.
pub fn fbp(sino: &Sinogram, geom: &FanBeamGeometry, grid: &ImageGrid, filter: FbpFilter) -> Result<ImageGrid> {
    geom.check_grid(grid)?;
    if sino.n_views != geom.n_views || sino.n_bins != geom.n_bins {
        return Err(Error::Dimension(format!(
            "sinogram {}x{} for geometry {}x{}",
            sino.n_views, sino.n_bins, geom.n_views, geom.n_bins
        )));
    }
    if geom.n_bins < 2 {
        return Err(Error::Geometry("filtered back projection needs at least two bins".into()));
    }
    let r = geom.source_to_isocenter;
    let mag = r / (r + geom.isocenter_to_detector);
    let du = geom.detector_pixel * mag;
    let nb = geom.n_bins;
    let u0 = geom.bin_coordinate(0) * mag;

    let nfft = (2 * nb).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);

    let mut kernel = vec![Complex::new(0.0, 0.0); nfft];
    kernel[0].re = 1.0 / (4.0 * du * du);
    for n in 1..nb {
        if n % 2 == 1 {
            let v = -1.0 / ((n * n) as f64 * std::f64::consts::PI.powi(2) * du * du);
            kernel[n].re = v;
            kernel[nfft - n].re = v;
        }
    }
    fwd.process(&mut kernel);
    if filter == FbpFilter::Hann {
        for (k, h) in kernel.iter_mut().enumerate() {
            let f = k.min(nfft - k) as f64 / (nfft / 2) as f64;
            *h *= 0.5 * (1.0 + (std::f64::consts::PI * f).cos());
        }
    }

    let weights: Vec<f64> = (0..nb)
        .map(|b| {
            let u = u0 + b as f64 * du;
            r / (r * r + u * u).sqrt()
        })
        .collect();
    let mut filtered = vec![0.0; geom.n_views * nb];
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for v in 0..geom.n_views {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, q) in sino.view(v).iter().enumerate() {
            buf[b].re = q * weights[b];
        }
        fwd.process(&mut buf);
        for (c, h) in buf.iter_mut().zip(&kernel) {
            *c *= h;
        }
        inv.process(&mut buf);
        let scale = du / nfft as f64;
        for b in 0..nb {
            filtered[v * nb + b] = buf[b].re * scale;
        }
    }

    let dbeta = geom.angular_step.to_radians();
    let trig: Vec<(f64, f64)> = (0..geom.n_views).map(|v| geom.view_angle(v).sin_cos()).collect();
    let mut out = grid.clone();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.pixel_center(ix, iy);
            let mut acc = 0.0;
            for (v, &(s, c)) in trig.iter().enumerate() {
                let l = r - (x * c + y * s);
                let u = r * (-x * s + y * c) / l;
                let pos = (u - u0) / du;
                if pos < 0.0 || pos > (nb - 1) as f64 {
                    continue;
                }
                let k = (pos.floor() as usize).min(nb - 2);
                let w = pos - k as f64;
                let row = &filtered[v * nb..(v + 1) * nb];
                let val = (1.0 - w) * row[k] + w * row[k + 1];
                acc += r * r / (l * l) * val;
            }
            out.values[iy * grid.nx + ix] = 0.5 * acc * dbeta;
        }
    }
    Ok(out)
}
