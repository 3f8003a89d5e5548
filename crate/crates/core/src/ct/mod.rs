//! Fan-beam CT with detector overexposure: phantoms, an exact ray-tracing
//! projector, the overexposure model, and the FBP / SART / TV-regularized
//! one-bit reconstructions.
//!
//! Images are row-major with row 0 at the top; attenuation is in 1/mm and
//! line integrals are dimensionless.

mod fbp;
mod overexposure;
mod phantom;
mod projector;
mod recon;

pub use fbp::{fbp, FbpFilter};
pub use overexposure::{
    add_projection_noise, apply_overexposure, estimate_view_thresholds, true_saturation_mask, Overexposure,
};
pub use phantom::{analytic_sinogram, make_phantom, Ellipse, PhantomKind};
pub use projector::FanBeamProjector;
pub use recon::{
    ideal_observations, m1bitcsr_tv_isd, m1bitcsr_tv_reconstruct, sart, sart_isd, CtIsdResult, SartParams, TvNonneg,
    TvReconParams,
};

use crate::error::{Error, Result};

pub const DEFAULT_MU_WATER: f64 = 0.02;

/// Square-pixel image centred on the isocenter.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub nx: usize,
    pub ny: usize,
    /// Pixel edge in mm.
    pub pixel_size: f64,
    pub values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(nx: usize, ny: usize, pixel_size: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(pixel_size > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "image grid {nx}x{ny} with pixel {pixel_size}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            pixel_size,
            values: vec![0.0; nx * ny],
        })
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nx * self.ny {
            return Err(Error::Dimension(format!(
                "{} values for a {}x{} grid",
                values.len(),
                self.nx,
                self.ny
            )));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Centre of pixel `(ix, iy)` in mm.
    pub fn pixel_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let x = (ix as f64 - 0.5 * (self.nx as f64 - 1.0)) * self.pixel_size;
        let y = (0.5 * (self.ny as f64 - 1.0) - iy as f64) * self.pixel_size;
        (x, y)
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.pixel_size == other.pixel_size
    }
}

/// Full-scan flat-detector fan-beam trajectory.
///
/// For view `b` the source sits at `R (cos a, sin a)` with
/// `a = b * angular_step`; the detector is perpendicular to the central ray
/// at distance `D` beyond the isocenter, bin coordinates increasing along
/// `(-sin a, cos a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanBeamGeometry {
    pub source_to_isocenter: f64,
    pub isocenter_to_detector: f64,
    pub n_views: usize,
    /// Degrees.
    pub angular_step: f64,
    pub n_bins: usize,
    /// Detector pixel pitch in mm.
    pub detector_pixel: f64,
}

impl Default for FanBeamGeometry {
    fn default() -> Self {
        Self {
            source_to_isocenter: 750.0,
            isocenter_to_detector: 450.0,
            n_views: 360,
            angular_step: 1.0,
            n_bins: 620,
            detector_pixel: 1.0,
        }
    }
}

impl FanBeamGeometry {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.source_to_isocenter,
            self.isocenter_to_detector,
            self.angular_step,
            self.detector_pixel,
        ];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidSpec("geometry distances and steps must be positive".into()));
        }
        if self.n_views == 0 || self.n_bins == 0 {
            return Err(Error::InvalidSpec("geometry needs at least one view and one bin".into()));
        }
        Ok(())
    }

    pub fn rays(&self) -> usize {
        self.n_views * self.n_bins
    }

    pub fn view_angle(&self, view: usize) -> f64 {
        (view as f64 * self.angular_step).to_radians()
    }

    pub fn detector_length(&self) -> f64 {
        self.n_bins as f64 * self.detector_pixel
    }

    /// Bin centre coordinate along the detector, mm.
    pub fn bin_coordinate(&self, bin: usize) -> f64 {
        (bin as f64 - 0.5 * (self.n_bins as f64 - 1.0)) * self.detector_pixel
    }

    /// Source and detector-bin positions of one ray.
    pub fn ray(&self, view: usize, bin: usize) -> ((f64, f64), (f64, f64)) {
        let a = self.view_angle(view);
        let (s, c) = a.sin_cos();
        let r = self.source_to_isocenter;
        let d = self.isocenter_to_detector;
        let u = self.bin_coordinate(bin);
        ((r * c, r * s), (-d * c - u * s, -d * s + u * c))
    }

    /// Errors if the source circle enters the image.
    pub fn check_grid(&self, grid: &ImageGrid) -> Result<()> {
        self.validate()?;
        let hx = 0.5 * grid.nx as f64 * grid.pixel_size;
        let hy = 0.5 * grid.ny as f64 * grid.pixel_size;
        if (hx * hx + hy * hy).sqrt() >= self.source_to_isocenter {
            return Err(Error::Geometry("source trajectory passes through the image".into()));
        }
        Ok(())
    }
}

/// Line integrals, one row of `n_bins` per view.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_views: usize,
    pub n_bins: usize,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn new(n_views: usize, n_bins: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_views * n_bins {
            return Err(Error::Dimension(format!(
                "{} values for {n_views} views x {n_bins} bins",
                values.len()
            )));
        }
        Ok(Self {
            n_views,
            n_bins,
            values,
        })
    }

    pub fn zeros(geom: &FanBeamGeometry) -> Self {
        Self {
            n_views: geom.n_views,
            n_bins: geom.n_bins,
            values: vec![0.0; geom.rays()],
        }
    }

    pub fn view(&self, v: usize) -> &[f64] {
        &self.values[v * self.n_bins..(v + 1) * self.n_bins]
    }

    /// `p_max` of every view.
    pub fn view_max(&self) -> Vec<f64> {
        (0..self.n_views)
            .map(|v| self.view(v).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `1000 (mu - mu_w) / mu_w`.
pub fn to_hu(mu: f64, mu_water: f64) -> f64 {
    1000.0 * (mu - mu_water) / mu_water
}

/// Root-mean-square difference of two images in HU.
pub fn rmse_hu(img_true: &ImageGrid, img_hat: &ImageGrid, mu_water: f64) -> Result<f64> {
    if !img_true.same_shape(img_hat) {
        return Err(Error::Dimension(format!(
            "grids {}x{} and {}x{}",
            img_true.nx, img_true.ny, img_hat.nx, img_hat.ny
        )));
    }
    if !(mu_water > 0.0) {
        return Err(Error::InvalidSpec("mu_water must be > 0".into()));
    }
    let sq: Vec<f64> = img_true
        .values
        .iter()
        .zip(&img_hat.values)
        .map(|(a, b)| {
            let d = to_hu(*a, mu_water) - to_hu(*b, mu_water);
            d * d
        })
        .collect();
    Ok((crate::linalg::pairwise_sum(&sq) / sq.len() as f64).sqrt())
}

#[cfg(test)]
mod tests;
