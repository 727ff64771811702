use std::f64::consts::{PI, TAU};

use rayon::prelude::*;

use crate::coefficients::{attenuation_e, AbsorptionField};
use crate::error::Result;
use crate::geometry::{CutoffSpec, DiskGeometry};
use crate::raster::{Grid, Raster};
use crate::transport::{cutoff_values, BoundaryData, Discretization, TracePlan};

/// `I_{sigma,V} f = chi_V int E f` on every boundary sample. `f` is read on
/// the pixels of `Omega` only.
///
/// The chord quadrature is the one used for the boundary trace of the
/// transport solver, so for `k = 0` this agrees with the measurement map to
/// rounding.
pub fn ray_transform(
    spec: &CutoffSpec,
    sigma: &AbsorptionField,
    geom: &DiskGeometry,
    disc: &Discretization,
    f: &Raster,
) -> Result<BoundaryData> {
    disc.grid.ensure_same(&f.grid)?;
    disc.grid.ensure_same(&sigma.grid())?;
    let npix = disc.grid.len();
    let masked: Vec<f64> = (0..npix)
        .map(|k| {
            if geom.in_inner(disc.grid.center_of(k)) {
                f.data[k]
            } else {
                0.0
            }
        })
        .collect();
    let mut g = Vec::with_capacity(npix * disc.n_theta);
    for _ in 0..disc.n_theta {
        g.extend_from_slice(&masked);
    }
    let plan = TracePlan::build(geom, disc, sigma);
    let mut out = BoundaryData::zeros(disc);
    out.values = plan.apply(disc, &g, 1);
    for (v, c) in out.values.iter_mut().zip(cutoff_values(spec, geom, disc)) {
        *v *= c;
    }
    Ok(out)
}

/// Pixel-driven `I^*_{sigma,V} h (x) = sum_q E(x, theta_q) chi^#(x, theta_q)
/// h^#(x, theta_q) d theta`, with `h^#` interpolated linearly in the exit
/// angle. Zero outside `Omega`.
///
/// This is an independent discretization of the `L^2(d Sigma) -> L^2(Omega)`
/// adjoint of [`ray_transform`], not its exact transpose.
pub fn adjoint_ray_transform(
    spec: &CutoffSpec,
    sigma: &AbsorptionField,
    geom: &DiskGeometry,
    disc: &Discretization,
    h: &BoundaryData,
) -> Result<Raster> {
    disc.grid.ensure_same(&sigma.grid())?;
    if h.n_bdry != disc.n_bdry || h.n_theta != disc.n_theta {
        return Err(crate::Error::GridMismatch(format!(
            "boundary data is {}x{}, expected {}x{}",
            h.n_bdry, h.n_theta, disc.n_bdry, disc.n_theta
        )));
    }
    let grid = disc.grid;
    let dth = disc.dtheta();
    let absorbing = !sigma.is_zero();
    let data = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.center_of(k);
            if !geom.in_inner(x) {
                return 0.0;
            }
            let mut acc = 0.0;
            for q in 0..disc.n_theta {
                let th = disc.direction(q);
                let chi = spec.eval_extended(geom, x, th);
                if chi == 0.0 {
                    continue;
                }
                let e = if absorbing {
                    attenuation_e(sigma, geom, x, disc.direction_angle(q), disc.h_ray)
                } else {
                    1.0
                };
                let z = x + th * geom.exit_time(x, th);
                acc += e * chi * exit_interpolate(h, z.angle(), q);
            }
            acc * dth
        })
        .collect();
    Ok(Raster { grid, data })
}

/// Linear interpolation of `h(., q)` at boundary angle `phi`.
fn exit_interpolate(h: &BoundaryData, phi: f64, q: usize) -> f64 {
    let n = h.n_bdry;
    let f = phi.rem_euclid(TAU) / TAU * n as f64;
    let p0 = (f.floor() as usize) % n;
    let t = f - f.floor();
    let p1 = (p0 + 1) % n;
    (1.0 - t) * h.get(p0, q) + t * h.get(p1, q)
}

/// `E(x, omega)` tabulated at pixel centers inside `Omega` for `n_angles`
/// uniform directions; linear interpolation in angle.
#[derive(Clone, Debug)]
pub struct AttenuationTable {
    pub grid: Grid,
    pub n_angles: usize,
    /// `values[pixel * n_angles + a]`; 1 at pixels outside `Omega`.
    pub values: Vec<f64>,
}

impl AttenuationTable {
    pub fn build(
        sigma: &AbsorptionField,
        geom: &DiskGeometry,
        grid: Grid,
        n_angles: usize,
        h_ray: f64,
    ) -> Self {
        let n_angles = n_angles.max(4);
        let values = if sigma.is_zero() {
            vec![1.0; grid.len() * n_angles]
        } else {
            (0..grid.len())
                .into_par_iter()
                .flat_map_iter(|k| {
                    let x = grid.center_of(k);
                    let inside = geom.in_inner(x);
                    (0..n_angles).map(move |a| {
                        if inside {
                            attenuation_e(sigma, geom, x, TAU * a as f64 / n_angles as f64, h_ray)
                        } else {
                            1.0
                        }
                    })
                })
                .collect()
        };
        AttenuationTable {
            grid,
            n_angles,
            values,
        }
    }

    #[inline]
    pub fn eval(&self, pixel: usize, angle: f64) -> f64 {
        let f = angle.rem_euclid(TAU) / TAU * self.n_angles as f64;
        let a0 = (f.floor() as usize) % self.n_angles;
        let t = f - f.floor();
        let row = &self.values[pixel * self.n_angles..(pixel + 1) * self.n_angles];
        (1.0 - t) * row[a0] + t * row[(a0 + 1) % self.n_angles]
    }

    /// `E` in the opposite direction.
    #[inline]
    pub fn eval_reversed(&self, pixel: usize, angle: f64) -> f64 {
        self.eval(pixel, angle + PI)
    }
}
