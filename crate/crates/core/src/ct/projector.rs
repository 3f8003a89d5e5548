use rayon::prelude::*;

use super::{FanBeamGeometry, ImageGrid, Sinogram};
use crate::error::{Error, Result};
use crate::linalg::LinearOperator;

/// Exact ray-pixel intersection lengths (Siddon tracing), stored as a sparse
/// matrix with one row per ray and its transpose for the back projection.
///
/// Rows are ordered view-major, so the rays of view `v` are rows
/// `v * n_bins .. (v + 1) * n_bins`.
#[derive(Debug, Clone)]
pub struct FanBeamProjector {
    geom: FanBeamGeometry,
    grid: ImageGrid,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f32>,
    col_ptr: Vec<usize>,
    rows_t: Vec<u32>,
    vals_t: Vec<f32>,
}

impl FanBeamProjector {
    pub fn new(grid: &ImageGrid, geom: &FanBeamGeometry) -> Result<Self> {
        geom.check_grid(grid)?;
        let npix = grid.nx * grid.ny;
        if npix > u32::MAX as usize || geom.rays() > u32::MAX as usize {
            return Err(Error::InvalidSpec("system too large for 32-bit indices".into()));
        }
        let per_view: Vec<(Vec<usize>, Vec<u32>, Vec<f32>)> = (0..geom.n_views)
            .into_par_iter()
            .map(|v| {
                let mut lens = vec![0usize; geom.n_bins];
                let mut cols = Vec::new();
                let mut vals = Vec::new();
                let mut scratch = Vec::new();
                for b in 0..geom.n_bins {
                    let (s, p) = geom.ray(v, b);
                    let before = cols.len();
                    trace_ray(grid, s, p, &mut scratch, |k, len| {
                        cols.push(k as u32);
                        vals.push(len as f32);
                    });
                    lens[b] = cols.len() - before;
                }
                (lens, cols, vals)
            })
            .collect();

        let mut row_ptr = Vec::with_capacity(geom.rays() + 1);
        row_ptr.push(0);
        let nnz: usize = per_view.iter().map(|v| v.1.len()).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for (lens, c, w) in per_view {
            for l in lens {
                row_ptr.push(row_ptr.last().unwrap() + l);
            }
            cols.extend(c);
            vals.extend(w);
        }

        let mut counts = vec![0usize; npix + 1];
        for &c in &cols {
            counts[c as usize + 1] += 1;
        }
        for k in 0..npix {
            counts[k + 1] += counts[k];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut rows_t = vec![0u32; nnz];
        let mut vals_t = vec![0f32; nnz];
        for r in 0..geom.rays() {
            for j in row_ptr[r]..row_ptr[r + 1] {
                let c = cols[j] as usize;
                rows_t[fill[c]] = r as u32;
                vals_t[fill[c]] = vals[j];
                fill[c] += 1;
            }
        }
        log::debug!("projector: {} rays, {} pixels, {} nonzeros", geom.rays(), npix, nnz);
        Ok(Self {
            geom: *geom,
            grid: grid.clone(),
            row_ptr,
            cols,
            vals,
            col_ptr,
            rows_t,
            vals_t,
        })
    }

    pub fn geometry(&self) -> &FanBeamGeometry {
        &self.geom
    }

    /// The image grid (values are zero).
    pub fn grid(&self) -> ImageGrid {
        ImageGrid {
            values: vec![0.0; self.grid.nx * self.grid.ny],
            ..self.grid.clone()
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Pixel indices and intersection lengths of ray `r`.
    pub fn row(&self, r: usize) -> (&[u32], &[f32]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn forward_project(&self, img: &ImageGrid) -> Result<Sinogram> {
        self.check_image(img)?;
        Sinogram::new(self.geom.n_views, self.geom.n_bins, self.apply_vec(&img.values))
    }

    pub fn back_project(&self, sino: &Sinogram) -> Result<ImageGrid> {
        if sino.n_views != self.geom.n_views || sino.n_bins != self.geom.n_bins {
            return Err(Error::Dimension(format!(
                "sinogram {}x{} for geometry {}x{}",
                sino.n_views, sino.n_bins, self.geom.n_views, self.geom.n_bins
            )));
        }
        self.grid().with_values(self.adjoint_vec(&sino.values))
    }

    fn check_image(&self, img: &ImageGrid) -> Result<()> {
        if !img.same_shape(&self.grid) {
            return Err(Error::Dimension(format!(
                "image {}x{} for projector grid {}x{}",
                img.nx, img.ny, self.grid.nx, self.grid.ny
            )));
        }
        Ok(())
    }
}

impl LinearOperator for FanBeamProjector {
    fn rows(&self) -> usize {
        self.geom.rays()
    }

    fn cols(&self) -> usize {
        self.grid.nx * self.grid.ny
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.par_chunks_mut(self.geom.n_bins).enumerate().for_each(|(v, chunk)| {
            let base = v * self.geom.n_bins;
            for (b, o) in chunk.iter_mut().enumerate() {
                let r = base + b;
                let mut acc = 0.0;
                for j in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[j] as f64 * x[self.cols[j] as usize];
                }
                *o = acc;
            }
        });
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.par_chunks_mut(self.grid.nx).enumerate().for_each(|(iy, chunk)| {
            let base = iy * self.grid.nx;
            for (ix, o) in chunk.iter_mut().enumerate() {
                let c = base + ix;
                let mut acc = 0.0;
                for j in self.col_ptr[c]..self.col_ptr[c + 1] {
                    acc += self.vals_t[j] as f64 * y[self.rows_t[j] as usize];
                }
                *o = acc;
            }
        });
    }
}

/// Calls `emit(pixel, length)` for every pixel the segment `s -> p` crosses,
/// in order from `s`.
pub(crate) fn trace_ray(
    grid: &ImageGrid,
    s: (f64, f64),
    p: (f64, f64),
    scratch: &mut Vec<f64>,
    mut emit: impl FnMut(usize, f64),
) {
    let ps = grid.pixel_size;
    let x0 = -0.5 * grid.nx as f64 * ps;
    let y0 = -0.5 * grid.ny as f64 * ps;
    let (dx, dy) = (p.0 - s.0, p.1 - s.1);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return;
    }
    let (mut t_in, mut t_out) = (0.0f64, 1.0f64);
    for (start, d, lo, n) in [(s.0, dx, x0, grid.nx), (s.1, dy, y0, grid.ny)] {
        let hi = lo + n as f64 * ps;
        if d == 0.0 {
            if start <= lo || start >= hi {
                return;
            }
        } else {
            let (a, b) = ((lo - start) / d, (hi - start) / d);
            t_in = t_in.max(a.min(b));
            t_out = t_out.min(a.max(b));
        }
    }
    if t_in >= t_out {
        return;
    }
    scratch.clear();
    scratch.push(t_in);
    for (start, d, lo, n) in [(s.0, dx, x0, grid.nx), (s.1, dy, y0, grid.ny)] {
        if d == 0.0 {
            continue;
        }
        for i in 1..n {
            let t = (lo + i as f64 * ps - start) / d;
            if t > t_in && t < t_out {
                scratch.push(t);
            }
        }
    }
    scratch.push(t_out);
    scratch.sort_by(f64::total_cmp);
    for w in scratch.windows(2) {
        let seg = w[1] - w[0];
        if seg <= 1e-14 {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let ix = ((s.0 + tm * dx - x0) / ps).floor();
        let jy = ((s.1 + tm * dy - y0) / ps).floor();
        if ix < 0.0 || jy < 0.0 || ix >= grid.nx as f64 || jy >= grid.ny as f64 {
            continue;
        }
        let iy = grid.ny - 1 - jy as usize;
        emit(iy * grid.nx + ix as usize, seg * len);
    }
}
