use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::coefficients::{AbsorptionField, ScatteringKernel};
use crate::error::Result;
use crate::geometry::{CutoffSpec, DiskGeometry, Vec2};
use crate::raster::Raster;
use crate::transport::{Discretization, Transport};

use super::matrix::OperatorMatrix;
use super::ray_transform::AttenuationTable;

/// `N = X_V^* X_V f` on the pixels of `Omega` and its edge-strength map.
#[derive(Clone, Debug, PartialEq)]
pub struct WavefrontImage {
    pub normal: Raster,
    /// Central-difference `|grad N|`, zero outside `Omega`.
    pub edge_strength: Raster,
}

impl WavefrontImage {
    pub fn new(normal: Raster, radius_inner: f64) -> Self {
        let edge_strength = normal.gradient_magnitude().mask_disk(radius_inner);
        WavefrontImage {
            normal,
            edge_strength,
        }
    }
}

/// How the adjoint of the measurement map is realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalPath {
    /// Weighted transpose of the assembled dense matrix (small grids).
    Matrix,
    /// Transposed source iteration, matrix-free.
    Iterative,
}

/// `X_V^* X_V f = I^* I f + L f` with the ballistic part computed by the
/// same code path with the kernel removed.
#[derive(Clone, Debug)]
pub struct NormalSplit {
    pub image: WavefrontImage,
    pub ballistic: Raster,
    pub remainder: Raster,
}

/// `X_V^* X_V f` by the chosen path, values at the pixels of `Omega`.
fn normal_apply(
    transport: &Transport,
    spec: &CutoffSpec,
    f: &Raster,
    path: NormalPath,
) -> Result<Raster> {
    let tol = transport.settings().tol;
    match path {
        NormalPath::Iterative => {
            let y = transport.measure_xv(spec, f)?;
            transport.adjoint_measure(spec, &y)
        }
        NormalPath::Matrix => {
            let cols = transport.inner_pixels();
            let (m, _) = OperatorMatrix::assemble(transport, spec, &cols, tol)?;
            let x: Vec<f64> = cols.iter().map(|&k| f.data[k]).collect();
            let n = m.apply_normal(&x);
            let mut out = Raster::zeros(f.grid);
            for (&k, v) in cols.iter().zip(n) {
                out.data[k] = v;
            }
            Ok(out)
        }
    }
}

pub fn normal_operator_full(
    transport: &Transport,
    spec: &CutoffSpec,
    f: &Raster,
    path: NormalPath,
) -> Result<NormalSplit> {
    transport.discretization().grid.ensure_same(&f.grid)?;
    let normal = normal_apply(transport, spec, f, path)?;
    let ballistic = if transport.kernel().is_empty() {
        normal.clone()
    } else {
        let ballistic_model =
            transport.with_kernel(ScatteringKernel::none(transport.geometry()))?;
        normal_apply(&ballistic_model, spec, f, path)?
    };
    let remainder = normal.sub(&ballistic);
    Ok(NormalSplit {
        image: WavefrontImage::new(normal, transport.geometry().radius_inner()),
        ballistic,
        remainder,
    })
}

/// `<X_V f, X_V phi_z>_{d Sigma}` with `phi_z` the discrete delta at pixel
/// `z` (value `1 / pixel area`).
pub fn point_source_pairing(
    transport: &Transport,
    spec: &CutoffSpec,
    f: &Raster,
    z: usize,
    tol: f64,
) -> Result<f64> {
    let grid = transport.discretization().grid;
    if z >= grid.len() {
        return Err(crate::Error::InvalidArgument(format!(
            "pixel {z} is off the grid"
        )));
    }
    let xf = transport.measure_xv_with_tol(spec, f, tol)?;
    let mut phi = Raster::zeros(grid);
    phi.data[z] = 1.0 / grid.pixel_area();
    let xp = transport.measure_xv_with_tol(spec, &phi, tol)?;
    Ok(xf.dot(&xp))
}

/// `G(a, b) = int_0^a int_0^b dx dy / |(x, y)|` for `a, b >= 0`.
fn quadrant_integral(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        a * (b / a).asinh() + b * (a / b).asinh()
    }
}

/// `int int_{[x0,x1] x [y0,y1]} dx dy / |(x, y)|`.
fn rectangle_integral(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let s = |x: f64, y: f64| x.signum() * y.signum() * quadrant_integral(x.abs(), y.abs());
    s(x1, y1) - s(x0, y1) - s(x1, y0) + s(x0, y0)
}

/// Pixel offsets (in each axis) that use exact cell integrals of `1/r`.
const NEAR_FIELD: i64 = 2;

/// Direct quadrature of the weakly singular kernel
/// `[E(x,w)E(y,w) chi#(x,w)^2 + E(x,-w)E(y,-w) chi#(x,-w)^2] / |y - x|`,
/// `w = (y - x)/|y - x|`. Cells near the singularity use the exact integral
/// of `1/r` over the cell with the angular factor frozen at the cell
/// center; the diagonal cell uses the angular average.
pub fn normal_operator_kernel(
    spec: &CutoffSpec,
    sigma: &AbsorptionField,
    geom: &DiskGeometry,
    disc: &Discretization,
    f: &Raster,
) -> Result<Raster> {
    let grid = disc.grid;
    grid.ensure_same(&f.grid)?;
    grid.ensure_same(&sigma.grid())?;
    let pixels: Vec<usize> = (0..grid.len())
        .filter(|&k| geom.in_inner(grid.center_of(k)))
        .collect();
    if spec.arcs.is_empty() {
        return Ok(Raster::zeros(grid));
    }
    let n_angles = (4 * disc.n_theta).max(256);
    let table = AttenuationTable::build(sigma, geom, grid, n_angles, disc.h_ray);
    let (dx, dy) = (grid.dx(), grid.dy());
    let area = grid.pixel_area();
    let w_diag = 4.0 * quadrant_integral(0.5 * dx, 0.5 * dy);
    let side = (2 * NEAR_FIELD + 1) as usize;
    let mut near = vec![0.0; side * side];
    for dj in -NEAR_FIELD..=NEAR_FIELD {
        for di in -NEAR_FIELD..=NEAR_FIELD {
            let (cx, cy) = (di as f64 * dx, dj as f64 * dy);
            near[((dj + NEAR_FIELD) as usize) * side + (di + NEAR_FIELD) as usize] =
                rectangle_integral(cx - 0.5 * dx, cx + 0.5 * dx, cy - 0.5 * dy, cy + 0.5 * dy);
        }
    }
    let chi_sq = |x: Vec2, w: Vec2| {
        let c = spec.eval_extended(geom, x, w);
        c * c
    };
    let data_in: Vec<f64> = pixels
        .par_iter()
        .map(|&kx| {
            let x = grid.center_of(kx);
            let (ix, jx) = grid.coords(kx);
            // Angular average of the bracket for the singular cell.
            let mut avg = 0.0;
            for a in 0..n_angles {
                let ang = TAU * a as f64 / n_angles as f64;
                let e = table.values[kx * n_angles + a];
                avg += e * e * chi_sq(x, Vec2::from_angle(ang));
            }
            avg *= 2.0 / n_angles as f64;
            let mut acc = f.data[kx] * w_diag * avg;
            for &ky in &pixels {
                if ky == kx || f.data[ky] == 0.0 {
                    continue;
                }
                let y = grid.center_of(ky);
                let d = y - x;
                let r = d.norm();
                let w = d * (1.0 / r);
                let ang = w.angle();
                let fwd = table.eval(kx, ang) * table.eval(ky, ang) * chi_sq(x, w);
                let bwd =
                    table.eval_reversed(kx, ang) * table.eval_reversed(ky, ang) * chi_sq(x, -w);
                let (iy, jy) = grid.coords(ky);
                let (di, dj) = (iy as i64 - ix as i64, jy as i64 - jx as i64);
                let weight = if di.abs() <= NEAR_FIELD && dj.abs() <= NEAR_FIELD {
                    near[((dj + NEAR_FIELD) as usize) * side + (di + NEAR_FIELD) as usize]
                } else {
                    area / r
                };
                acc += (fwd + bwd) * f.data[ky] * weight;
            }
            acc
        })
        .collect();
    let mut out = Raster::zeros(grid);
    for (&k, v) in pixels.iter().zip(data_in) {
        out.data[k] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomography::{adjoint_ray_transform, ray_transform};

    #[test]
    fn singular_cell_integral() {
        // Centered square: 4 h asinh(1).
        let h = 0.1;
        let w = 4.0 * quadrant_integral(h / 2.0, h / 2.0);
        assert!((w - 4.0 * h * (1.0_f64).asinh()).abs() < 1e-14);
        // Off-center cell by brute-force midpoint refinement.
        let (x0, x1, y0, y1) = (0.05, 0.15, -0.05, 0.05);
        let n = 800;
        let mut brute = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = x0 + (i as f64 + 0.5) * (x1 - x0) / n as f64;
                let y = y0 + (j as f64 + 0.5) * (y1 - y0) / n as f64;
                brute += 1.0 / x.hypot(y);
            }
        }
        brute *= (x1 - x0) * (y1 - y0) / (n * n) as f64;
        assert!((rectangle_integral(x0, x1, y0, y1) - brute).abs() < 1e-6);
    }

    #[test]
    fn kernel_path_trivial_cases() {
        let geom = DiskGeometry::new(0.8, 1.0).unwrap();
        let disc = Discretization::new(&geom, 16, 16, 16, 32).unwrap();
        let zero_sigma = AbsorptionField::zero(disc.grid, &geom);
        let f = Raster::from_fn(disc.grid, |x| (-x.norm_sq() * 6.0).exp());
        let z = normal_operator_kernel(
            &CutoffSpec::full(),
            &zero_sigma,
            &geom,
            &disc,
            &Raster::zeros(disc.grid),
        )
        .unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let e =
            normal_operator_kernel(&CutoffSpec::empty(), &zero_sigma, &geom, &disc, &f).unwrap();
        assert_eq!(e.max_abs(), 0.0);
    }

    #[test]
    fn kernel_path_matches_composition_coarse() {
        let geom = DiskGeometry::new(0.8, 1.0).unwrap();
        let disc = Discretization::new(&geom, 32, 32, 64, 256).unwrap();
        let s = AbsorptionField::zero(disc.grid, &geom);
        let f = Raster::from_fn(disc.grid, |x| {
            (-(x - Vec2::new(0.1, 0.05)).norm_sq() * 8.0).exp()
        })
        .mask_disk(0.8);
        let spec = CutoffSpec::full();
        let a = normal_operator_kernel(&spec, &s, &geom, &disc, &f).unwrap();
        let b = adjoint_ray_transform(
            &spec,
            &s,
            &geom,
            &disc,
            &ray_transform(&spec, &s, &geom, &disc, &f).unwrap(),
        )
        .unwrap();
        let rel = a.sub(&b).l2_norm() / b.l2_norm();
        assert!(rel < 0.05, "{rel}");
    }
}
