//! Test sources with known singularities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{DiskGeometry, Vec2};
use crate::raster::{Grid, Raster};
use crate::tomography::EdgePoint;
use crate::transport::PhaseSpaceField;

/// A disk of constant value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiskBlob {
    pub center: Vec2,
    pub radius: f64,
    pub value: f64,
}

/// Indicator of a disk at pixel centers, times `value`.
pub fn disk(grid: Grid, center: Vec2, radius: f64, value: f64) -> Raster {
    Raster::from_fn(grid, |x| {
        if (x - center).norm() < radius {
            value
        } else {
            0.0
        }
    })
}

/// Sum of disk indicators, cut to `Omega`.
pub fn blobs(grid: Grid, geom: &DiskGeometry, blobs: &[DiskBlob]) -> Raster {
    Raster::from_fn(grid, |x| {
        if !geom.in_inner(x) {
            return 0.0;
        }
        blobs
            .iter()
            .filter(|b| (x - b.center).norm() < b.radius)
            .map(|b| b.value)
            .sum()
    })
}

pub fn gaussian(grid: Grid, center: Vec2, width: f64, amplitude: f64) -> Raster {
    Raster::from_fn(grid, |x| {
        amplitude * (-(x - center).norm_sq() / (width * width)).exp()
    })
}

/// 1 on the pixels of `Omega`.
pub fn ones_on_omega(grid: Grid, geom: &DiskGeometry) -> Raster {
    Raster::from_fn(grid, |x| if geom.in_inner(x) { 1.0 } else { 0.0 })
}

/// Uniform noise in `[-1, 1)` on the pixels of `Omega`, reproducible from
/// `seed`.
pub fn white_noise(grid: Grid, geom: &DiskGeometry, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Raster::zeros(grid);
    for k in 0..grid.len() {
        let v: f64 = rng.gen_range(-1.0..1.0);
        if geom.in_inner(grid.center_of(k)) {
            out.data[k] = v;
        }
    }
    out
}

/// Independent noise per direction, zero outside `Omega`.
pub fn white_noise_field(
    grid: Grid,
    n_theta: usize,
    geom: &DiskGeometry,
    seed: u64,
) -> PhaseSpaceField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PhaseSpaceField::zeros(grid, n_theta);
    for q in 0..n_theta {
        for k in 0..grid.len() {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if geom.in_inner(grid.center_of(k)) {
                out.data[q * grid.len() + k] = v;
            }
        }
    }
    out
}

/// `count` equally spaced points on the circle `|x - center| = radius` with
/// outward normals, starting at angle 0.
pub fn disk_edge_points(center: Vec2, radius: f64, jump: f64, count: usize) -> Vec<EdgePoint> {
    (0..count)
        .map(|i| {
            let n = Vec2::from_angle(std::f64::consts::TAU * i as f64 / count as f64);
            EdgePoint {
                z: center + n * radius,
                normal: n,
                jump,
            }
        })
        .collect()
}
