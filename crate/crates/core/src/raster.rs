//! Pixel rasters over the square `[-R1, R1]^2` that bounds the outer disk.
//!
//! Pixel `(i, j)` has its center at `(-R1 + (i + 1/2) dx, -R1 + (j + 1/2) dy)`
//! and is stored at index `j * nx + i`, so rows run from the bottom of the
//! square upwards. Off-center values are obtained by bilinear interpolation
//! between pixel centers, clamped to the outermost centers.

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Raster layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Half side length of the square; equals the outer disk radius.
    pub half_width: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, half_width: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2x2 pixels, got {nx}x{ny}"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid half width must be positive, got {half_width}"
            )));
        }
        Ok(Grid { nx, ny, half_width })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.nx as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        2.0 * self.half_width / self.ny as f64
    }

    #[inline]
    pub fn pixel_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Larger of the two pixel side lengths.
    #[inline]
    pub fn pixel_size(&self) -> f64 {
        self.dx().max(self.dy())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            -self.half_width + (i as f64 + 0.5) * self.dx(),
            -self.half_width + (j as f64 + 0.5) * self.dy(),
        )
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Vec2 {
        let (i, j) = self.coords(idx);
        self.center(i, j)
    }

    /// Pixel containing `p`, if `p` lies inside the square.
    pub fn locate(&self, p: Vec2) -> Option<usize> {
        let fx = (p.x + self.half_width) / self.dx();
        let fy = (p.y + self.half_width) / self.dy();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        (i < self.nx && j < self.ny).then(|| self.index(i, j))
    }

    /// Indices and weights of the four pixel centers surrounding `p`.
    /// Weights are nonnegative and sum to one.
    #[inline]
    pub fn bilinear_stencil(&self, p: Vec2) -> [(usize, f64); 4] {
        let (i0, tx) = axis_cell((p.x + self.half_width) / self.dx() - 0.5, self.nx);
        let (j0, ty) = axis_cell((p.y + self.half_width) / self.dy() - 0.5, self.ny);
        let base = j0 * self.nx + i0;
        [
            (base, (1.0 - tx) * (1.0 - ty)),
            (base + 1, tx * (1.0 - ty)),
            (base + self.nx, (1.0 - tx) * ty),
            (base + self.nx + 1, tx * ty),
        ]
    }

    #[inline]
    pub fn sample(&self, data: &[f64], p: Vec2) -> f64 {
        self.bilinear_stencil(p)
            .iter()
            .map(|&(k, w)| w * data[k])
            .sum()
    }

    /// Transpose of [`Grid::sample`]: adds `value` into `data` with the
    /// bilinear weights of `p`.
    #[inline]
    pub fn scatter(&self, data: &mut [f64], p: Vec2, value: f64) {
        for (k, w) in self.bilinear_stencil(p) {
            data[k] += w * value;
        }
    }

    /// Indices of pixels whose centers lie strictly inside the disk of the
    /// given radius.
    pub fn pixels_in_disk(&self, radius: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.center_of(k).norm() < radius)
            .collect()
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} (R1 = {}) vs {}x{} (R1 = {})",
                self.nx, self.ny, self.half_width, other.nx, other.ny, other.half_width
            )))
        }
    }
}

#[inline]
pub(crate) fn axis_cell(f: f64, n: usize) -> (usize, f64) {
    let max0 = (n - 2) as f64;
    let c = f.floor().clamp(0.0, max0);
    ((c as usize), (f - c).clamp(0.0, 1.0))
}

/// A scalar field sampled at pixel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn zeros(grid: Grid) -> Self {
        Raster {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_data(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "raster data has {} values, grid needs {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Raster { grid, data })
    }

    /// Samples `f` at every pixel center.
    pub fn from_fn(grid: Grid, f: impl Fn(Vec2) -> f64) -> Self {
        let data = (0..grid.len()).map(|k| f(grid.center_of(k))).collect();
        Raster { grid, data }
    }

    #[inline]
    pub fn sample(&self, p: Vec2) -> f64 {
        self.grid.sample(&self.data, p)
    }

    /// Zeroes every pixel whose center is not strictly inside the disk.
    pub fn mask_disk(mut self, radius: f64) -> Self {
        for k in 0..self.grid.len() {
            if self.grid.center_of(k).norm() >= radius {
                self.data[k] = 0.0;
            }
        }
        self
    }

    /// `L^2` inner product with pixel-area weights.
    pub fn dot(&self, other: &Raster) -> f64 {
        self.grid.pixel_area()
            * self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(mut self, factor: f64) -> Self {
        self.data.iter_mut().for_each(|v| *v *= factor);
        self
    }

    pub fn sub(&self, other: &Raster) -> Raster {
        Raster {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Central-difference gradient magnitude (one-sided at the raster edge).
    pub fn gradient_magnitude(&self) -> Raster {
        let g = self.grid;
        let at = |i: usize, j: usize| self.data[g.index(i, j)];
        let mut out = Raster::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (il, ir) = (i.saturating_sub(1), (i + 1).min(g.nx - 1));
                let (jd, ju) = (j.saturating_sub(1), (j + 1).min(g.ny - 1));
                let gx = (at(ir, j) - at(il, j)) / ((ir - il) as f64 * g.dx());
                let gy = (at(i, ju) - at(i, jd)) / ((ju - jd) as f64 * g.dy());
                out.data[g.index(i, j)] = gx.hypot(gy);
            }
        }
        out
    }
}
