use super::{FanBeamGeometry, ImageGrid, Sinogram};
use crate::error::{Error, Result};

/// One ellipse of an additive phantom, in mm and 1/mm.
///
/// Ellipses sharing a nonzero `group` form a union: a point inside several
/// members of the group receives the group density once. Group members must
/// carry the same density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    /// Rotation of the `a` axis from the x axis, degrees counter-clockwise.
    pub phi: f64,
    pub density: f64,
    pub group: u8,
}

impl Ellipse {
    fn new(cx: f64, cy: f64, a: f64, b: f64, phi: f64, density: f64) -> Self {
        Self {
            cx,
            cy,
            a,
            b,
            phi,
            density,
            group: 0,
        }
    }

    fn scaled(mut self, s: f64) -> Self {
        self.cx *= s;
        self.cy *= s;
        self.a *= s;
        self.b *= s;
        self
    }

    /// Boundary counts as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi.to_radians().sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (c * dx + s * dy) / self.a;
        let v = (-s * dx + c * dy) / self.b;
        u * u + v * v <= 1.0
    }

    /// Parameter interval `[t0, t1]` where `p + t dir` lies inside.
    pub fn chord(&self, p: (f64, f64), dir: (f64, f64)) -> Option<(f64, f64)> {
        let (s, c) = self.phi.to_radians().sin_cos();
        let (px, py) = (p.0 - self.cx, p.1 - self.cy);
        let pu = (c * px + s * py) / self.a;
        let pv = (-s * px + c * py) / self.b;
        let du = (c * dir.0 + s * dir.1) / self.a;
        let dv = (-s * dir.0 + c * dir.1) / self.b;
        let qa = du * du + dv * dv;
        let qb = 2.0 * (pu * du + pv * dv);
        let qc = pu * pu + pv * pv - 1.0;
        let disc = qb * qb - 4.0 * qa * qc;
        if qa == 0.0 || disc <= 0.0 {
            return None;
        }
        let r = disc.sqrt();
        Some(((-qb - r) / (2.0 * qa), (-qb + r) / (2.0 * qa)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Two overlapping soft-tissue discs, each with a bone ring around
    /// marrow; mirror-symmetric about the vertical axis.
    Knee,
    /// Shepp-Logan geometry with a dense skull ring and water-like brain.
    Head,
    /// The original Shepp-Logan table, densities scaled by 0.01/mm.
    Shepp,
    /// No ellipses.
    Empty,
}

impl PhantomKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "knee" => Ok(Self::Knee),
            "head" => Ok(Self::Head),
            "shepp" => Ok(Self::Shepp),
            "empty" => Ok(Self::Empty),
            _ => Err(Error::InvalidSpec(format!("unknown phantom '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Knee => "knee",
            Self::Head => "head",
            Self::Shepp => "shepp",
            Self::Empty => "empty",
        }
    }

    /// Ellipses for a field of view of half-width `half` mm.
    pub fn ellipses(&self, half: f64) -> Vec<Ellipse> {
        let table: Vec<Ellipse> = match self {
            Self::Empty => vec![],
            Self::Shepp => SHEPP
                .iter()
                .map(|r| Ellipse::new(r[0], r[1], r[2], r[3], r[4], 0.01 * r[5]))
                .collect(),
            Self::Head => {
                let rho = [0.045, -0.025, -0.004, -0.004, 0.002, 0.003, 0.003, 0.002, 0.002, 0.002];
                SHEPP
                    .iter()
                    .zip(rho)
                    .map(|(r, d)| Ellipse::new(0.9 * r[0], 0.9 * r[1], 0.9 * r[2], 0.9 * r[3], r[4], d))
                    .collect()
            }
            Self::Knee => {
                let mut v = Vec::new();
                for sx in [-1.0, 1.0] {
                    let mut disc = Ellipse::new(sx * 0.36, 0.0, 0.46, 0.46, 0.0, 0.02);
                    disc.group = 1;
                    v.push(disc);
                }
                for sx in [-1.0, 1.0] {
                    v.push(Ellipse::new(sx * 0.36, 0.02, 0.2, 0.17, 0.0, 0.025));
                    v.push(Ellipse::new(sx * 0.36, 0.02, 0.13, 0.1, 0.0, -0.015));
                }
                v
            }
        };
        table.into_iter().map(|e| e.scaled(half)).collect()
    }
}

/// `(x0, y0, a, b, phi, density)` on the unit square.
const SHEPP: [[f64; 6]; 10] = [
    [0.0, 0.0, 0.69, 0.92, 0.0, 2.0],
    [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98],
    [0.22, 0.0, 0.11, 0.31, -18.0, -0.02],
    [-0.22, 0.0, 0.16, 0.41, 18.0, -0.02],
    [0.0, 0.35, 0.21, 0.25, 0.0, 0.01],
    [0.0, 0.1, 0.046, 0.046, 0.0, 0.01],
    [0.0, -0.1, 0.046, 0.046, 0.0, 0.01],
    [-0.08, -0.605, 0.046, 0.023, 0.0, 0.01],
    [0.0, -0.606, 0.023, 0.023, 0.0, 0.01],
    [0.06, -0.605, 0.023, 0.046, 0.0, 0.01],
];

fn fov_half(grid: &ImageGrid) -> f64 {
    0.5 * grid.nx.min(grid.ny) as f64 * grid.pixel_size
}

/// Density at `(x, y)`.
pub fn phantom_value(ellipses: &[Ellipse], x: f64, y: f64) -> f64 {
    let mut v = 0.0;
    let mut groups_hit = [false; 256];
    for e in ellipses {
        if !e.contains(x, y) {
            continue;
        }
        if e.group == 0 {
            v += e.density;
        } else if !groups_hit[e.group as usize] {
            groups_hit[e.group as usize] = true;
            v += e.density;
        }
    }
    v
}

/// Renders `kind` on `grid` by pixel-centre membership; the phantom spans
/// the largest centred square of the grid.
pub fn make_phantom(kind: PhantomKind, grid: &ImageGrid) -> ImageGrid {
    let ellipses = kind.ellipses(fov_half(grid));
    let mut out = grid.clone();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.pixel_center(ix, iy);
            out.values[iy * grid.nx + ix] = phantom_value(&ellipses, x, y);
        }
    }
    out
}

/// Exact line integrals of the continuous phantom.
pub fn analytic_sinogram(kind: PhantomKind, grid: &ImageGrid, geom: &FanBeamGeometry) -> Result<Sinogram> {
    geom.check_grid(grid)?;
    let ellipses = kind.ellipses(fov_half(grid));
    Ok(ellipse_sinogram(&ellipses, geom))
}

pub(crate) fn ellipse_sinogram(ellipses: &[Ellipse], geom: &FanBeamGeometry) -> Sinogram {
    let mut sino = Sinogram::zeros(geom);
    for v in 0..geom.n_views {
        for b in 0..geom.n_bins {
            let (s, p) = geom.ray(v, b);
            let dir = (p.0 - s.0, p.1 - s.1);
            let len = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
            sino.values[v * geom.n_bins + b] = line_integral(ellipses, s, dir) * len;
        }
    }
    sino
}

/// Integral along `p + t dir` for `t` in R, in units of `t`.
fn line_integral(ellipses: &[Ellipse], p: (f64, f64), dir: (f64, f64)) -> f64 {
    let mut total = 0.0;
    let mut groups: Vec<(u8, f64, Vec<(f64, f64)>)> = Vec::new();
    for e in ellipses {
        let Some((t0, t1)) = e.chord(p, dir) else { continue };
        if e.group == 0 {
            total += e.density * (t1 - t0);
        } else {
            match groups.iter_mut().find(|g| g.0 == e.group) {
                Some(g) => g.2.push((t0, t1)),
                None => groups.push((e.group, e.density, vec![(t0, t1)])),
            }
        }
    }
    for (_, density, mut iv) in groups {
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let (mut lo, mut hi) = iv[0];
        for &(a, b) in &iv[1..] {
            if a > hi {
                covered += hi - lo;
                lo = a;
                hi = b;
            } else {
                hi = hi.max(b);
            }
        }
        covered += hi - lo;
        total += density * covered;
    }
    total
}
