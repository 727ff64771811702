//! Forward transport on the outer disk.
//!
//! Phase-space fields live on the pixel grid times `n_theta` uniform
//! directions. `T1^{-1}` is applied per direction by marching along a
//! rotated family of parallel lines (sample spacing half a pixel) and
//! interpolating back to pixel centers; its exact discrete transpose is
//! available as well, so adjoint solves are transposes of forward solves to
//! rounding.
//!
//! The boundary trace is evaluated from the transport *source*
//! `g = Ku + Jf` by a long-characteristic quadrature along the whole chord
//! ending at each boundary sample, `u(z, theta) = int E g`. This is the
//! attenuated ray transform of `g` and involves no extrapolation off the grid.
//!
//! Every operator works on column batches: a batch of width `B` stores
//! `data[(q * npix + pixel) * B + b]`, so a single field is a batch of width 1.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::coefficients::{AbsorptionField, Harmonic, ScatteringKernel};
use crate::error::{Error, Result};
use crate::geometry::{CutoffSpec, DiskGeometry, Vec2};
use crate::raster::{axis_cell, Grid, Raster};

/// `theta . nu` threshold below which a boundary sample counts as incoming.
pub const OUTGOING_EPS: f64 = 1e-12;

/// Columns solved together during dense assembly.
const ASSEMBLY_BATCH: usize = 16;

/// Sampling of phase space and of the outgoing boundary bundle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discretization {
    pub grid: Grid,
    pub n_theta: usize,
    pub n_bdry: usize,
    /// Step bound of the ray quadratures.
    pub h_ray: f64,
}

impl Discretization {
    /// Uses the default ray step `R1 / 256`.
    pub fn new(
        geom: &DiskGeometry,
        nx: usize,
        ny: usize,
        n_theta: usize,
        n_bdry: usize,
    ) -> Result<Self> {
        let grid = geom.grid(nx, ny)?;
        if n_theta < 4 || n_bdry < 4 {
            return Err(Error::InvalidArgument(format!(
                "need at least 4 directions and 4 boundary samples, got {n_theta} and {n_bdry}"
            )));
        }
        Ok(Discretization {
            grid,
            n_theta,
            n_bdry,
            h_ray: geom.radius_outer() / 256.0,
        })
    }

    pub fn with_h_ray(mut self, h_ray: f64) -> Result<Self> {
        if !(h_ray > 0.0 && h_ray.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ray step must be positive, got {h_ray}"
            )));
        }
        self.h_ray = h_ray;
        Ok(self)
    }

    #[inline]
    pub fn dtheta(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    #[inline]
    pub fn direction_angle(&self, q: usize) -> f64 {
        TAU * q as f64 / self.n_theta as f64
    }

    #[inline]
    pub fn direction(&self, q: usize) -> Vec2 {
        Vec2::from_angle(self.direction_angle(q))
    }

    #[inline]
    pub fn boundary_angle(&self, p: usize) -> f64 {
        TAU * p as f64 / self.n_bdry as f64
    }

    /// Arc length `dS` per boundary sample.
    #[inline]
    pub fn boundary_step(&self) -> f64 {
        self.grid.half_width * TAU / self.n_bdry as f64
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_bdry * self.n_theta
    }
}

/// `u(x_i, theta_q)` on the pixel grid; zero at pixels centered outside the
/// outer disk.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceField {
    pub grid: Grid,
    pub n_theta: usize,
    /// `data[q * npix + pixel]`.
    pub data: Vec<f64>,
}

impl PhaseSpaceField {
    pub fn zeros(grid: Grid, n_theta: usize) -> Self {
        PhaseSpaceField {
            grid,
            n_theta,
            data: vec![0.0; grid.len() * n_theta],
        }
    }

    /// Samples `f(x, theta)` at pixel centers strictly inside the outer disk.
    pub fn from_fn(grid: Grid, n_theta: usize, f: impl Fn(Vec2, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, n_theta);
        let npix = grid.len();
        for q in 0..n_theta {
            let th = TAU * q as f64 / n_theta as f64;
            for k in 0..npix {
                let x = grid.center_of(k);
                if x.norm() < grid.half_width {
                    out.data[q * npix + k] = f(x, th);
                }
            }
        }
        out
    }

    #[inline]
    pub fn direction(&self, q: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[q * n..(q + 1) * n]
    }

    pub fn direction_raster(&self, q: usize) -> Raster {
        Raster {
            grid: self.grid,
            data: self.direction(q).to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, pixel: usize, q: usize) -> f64 {
        self.data[q * self.grid.len() + pixel]
    }

    /// `L^2(Omega_1 x S^1)` inner product (pixel area times `d theta`).
    pub fn dot(&self, other: &PhaseSpaceField) -> f64 {
        let w = self.grid.pixel_area() * TAU / self.n_theta as f64;
        w * self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check(&self, disc: &Discretization) -> Result<()> {
        disc.grid.ensure_same(&self.grid)?;
        if self.n_theta != disc.n_theta {
            return Err(Error::GridMismatch(format!(
                "field has {} directions, operator has {}",
                self.n_theta, disc.n_theta
            )));
        }
        Ok(())
    }
}

/// Samples on the boundary bundle: `n_bdry` boundary angles times `n_theta`
/// directions, stored at `p * n_theta + q`. Incoming samples are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub n_bdry: usize,
    pub n_theta: usize,
    pub radius_outer: f64,
    pub values: Vec<f64>,
}

impl BoundaryData {
    pub fn zeros(disc: &Discretization) -> Self {
        BoundaryData {
            n_bdry: disc.n_bdry,
            n_theta: disc.n_theta,
            radius_outer: disc.grid.half_width,
            values: vec![0.0; disc.n_rows()],
        }
    }

    #[inline]
    pub fn index(&self, p: usize, q: usize) -> usize {
        p * self.n_theta + q
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.values[self.index(p, q)]
    }

    #[inline]
    pub fn boundary_angle(&self, p: usize) -> f64 {
        TAU * p as f64 / self.n_bdry as f64
    }

    #[inline]
    pub fn direction_angle(&self, q: usize) -> f64 {
        TAU * q as f64 / self.n_theta as f64
    }

    /// `theta_q . nu(z_p)`.
    #[inline]
    pub fn incidence(&self, p: usize, q: usize) -> f64 {
        Vec2::from_angle(self.direction_angle(q)).dot(Vec2::from_angle(self.boundary_angle(p)))
    }

    #[inline]
    pub fn is_outgoing(&self, p: usize, q: usize) -> bool {
        self.incidence(p, q) > OUTGOING_EPS
    }

    /// Quadrature weight of `d Sigma = |theta . nu| dS d theta`; 0 on
    /// incoming samples.
    pub fn measure_weight(&self, p: usize, q: usize) -> f64 {
        let c = self.incidence(p, q);
        if c > OUTGOING_EPS {
            c * self.radius_outer * TAU / self.n_bdry as f64 * TAU / self.n_theta as f64
        } else {
            0.0
        }
    }

    /// All row weights in storage order.
    pub fn measure_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.values.len());
        for p in 0..self.n_bdry {
            for q in 0..self.n_theta {
                w.push(self.measure_weight(p, q));
            }
        }
        w
    }

    /// `L^2(d Sigma)` inner product.
    pub fn dot(&self, other: &BoundaryData) -> f64 {
        self.measure_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check(&self, disc: &Discretization) -> Result<()> {
        if self.n_bdry != disc.n_bdry || self.n_theta != disc.n_theta {
            return Err(Error::GridMismatch(format!(
                "boundary data is {}x{}, operator expects {}x{}",
                self.n_bdry, self.n_theta, disc.n_bdry, disc.n_theta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    /// Relative residual at which the source iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Power-iteration steps on `(T1^{-1} K)^2`.
    pub power_iterations: usize,
    /// Solves are refused when the spectral-radius estimate is `>= 1 - delta`.
    pub delta: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-10,
            max_iter: 200,
            power_iterations: 30,
            delta: 1e-3,
        }
    }
}

/// Diagnostics of a source iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative update norm `|u_m - u_{m-1}| / |u_m|` per step (worst column
    /// for batched solves).
    pub residual_history: Vec<f64>,
    pub spectral_radius_estimate: f64,
    pub converged: bool,
}

/// Result of [`Transport::solve_forward`].
#[derive(Clone, Debug)]
pub struct ForwardSolution {
    /// The intensity `u`.
    pub u: PhaseSpaceField,
    /// The transport source `K u + J f`, so that `u = T1^{-1} source`.
    pub source: PhaseSpaceField,
    pub report: SolveReport,
}

/// Scattering kernel sampled on the direction grid.
#[derive(Clone, Debug)]
struct KernelPlan {
    /// `[m * n_theta + q] = Y_m(theta_q)` for every distinct input harmonic.
    harmonics: Vec<f64>,
    n_harmonics: usize,
    /// `[j * n_theta + q] = profile_j(theta_q)`.
    profiles: Vec<f64>,
    /// Per mode `j`: (harmonic index, coefficient raster masked to `Omega_1`).
    coeffs: Vec<Vec<(usize, Vec<f64>)>>,
}

impl KernelPlan {
    fn new(kernel: &ScatteringKernel, disc: &Discretization, outer: &[bool]) -> Result<Self> {
        let mut distinct: Vec<Harmonic> = Vec::new();
        let mut coeffs = Vec::new();
        let mut profiles = Vec::new();
        for mode in &kernel.modes {
            let mut list = Vec::new();
            for (h, a) in &mode.weight.modes {
                disc.grid.ensure_same(&a.grid)?;
                let m = match distinct.iter().position(|d| d == h) {
                    Some(m) => m,
                    None => {
                        distinct.push(*h);
                        distinct.len() - 1
                    }
                };
                let masked = a
                    .data
                    .iter()
                    .zip(outer)
                    .map(|(&v, &inside)| if inside { v } else { 0.0 })
                    .collect();
                list.push((m, masked));
            }
            coeffs.push(list);
            profiles.extend((0..disc.n_theta).map(|q| mode.profile.eval(disc.direction_angle(q))));
        }
        let harmonics = distinct
            .iter()
            .flat_map(|h| (0..disc.n_theta).map(move |q| h.eval(disc.direction_angle(q))))
            .collect();
        Ok(KernelPlan {
            harmonics,
            n_harmonics: distinct.len(),
            profiles,
            coeffs,
        })
    }
}

/// Per-direction sparse rows of the chord quadrature.
#[derive(Clone, Debug, Default)]
struct DirectionTrace {
    /// `(p, start, end)` into `pixels` / `weights`.
    rays: Vec<(usize, usize, usize)>,
    pixels: Vec<u32>,
    weights: Vec<f64>,
}

/// Sparse matrix of `g -> int_chord E g` for every outgoing boundary sample.
#[derive(Clone, Debug)]
pub(crate) struct TracePlan {
    dirs: Vec<DirectionTrace>,
}

impl TracePlan {
    pub(crate) fn build(
        geom: &DiskGeometry,
        disc: &Discretization,
        sigma: &AbsorptionField,
    ) -> TracePlan {
        let grid = disc.grid;
        let r1 = geom.radius_outer();
        let outer: Vec<bool> = (0..grid.len())
            .map(|k| grid.center_of(k).norm() < r1)
            .collect();
        let dirs = (0..disc.n_theta)
            .into_par_iter()
            .map(|q| {
                let th = disc.direction(q);
                let slice = sigma.slice(disc.direction_angle(q));
                let mut dense = vec![0.0; grid.len()];
                let mut touched: Vec<usize> = Vec::new();
                let mut out = DirectionTrace::default();
                for p in 0..disc.n_bdry {
                    let nu = Vec2::from_angle(disc.boundary_angle(p));
                    let cos_g = th.dot(nu);
                    if cos_g <= OUTGOING_EPS {
                        continue;
                    }
                    let z = nu * r1;
                    let len = 2.0 * r1 * cos_g;
                    let n = (len / disc.h_ray).ceil().max(1.0) as usize;
                    let step = len / n as f64;
                    let mut tau = 0.0;
                    let mut sig_prev = sigma.sample_slice(&slice, z);
                    for k in 0..=n {
                        let y = z - th * (k as f64 * step);
                        if k > 0 {
                            let s = sigma.sample_slice(&slice, y);
                            tau += 0.5 * step * (sig_prev + s);
                            sig_prev = s;
                        }
                        let end = if k == 0 || k == n { 0.5 } else { 1.0 };
                        let wk = step * end * (-tau).exp();
                        for (pix, bw) in grid.bilinear_stencil(y) {
                            if outer[pix] && bw != 0.0 {
                                if dense[pix] == 0.0 {
                                    touched.push(pix);
                                }
                                dense[pix] += wk * bw;
                            }
                        }
                    }
                    touched.sort_unstable();
                    let start = out.pixels.len();
                    for &pix in &touched {
                        out.pixels.push(pix as u32);
                        out.weights.push(dense[pix]);
                        dense[pix] = 0.0;
                    }
                    touched.clear();
                    out.rays.push((p, start, out.pixels.len()));
                }
                out
            })
            .collect();
        TracePlan { dirs }
    }

    /// `out[row * width + b] = sum_chord w g[q][pixel][b]`; incoming rows 0.
    pub(crate) fn apply(&self, disc: &Discretization, g: &[f64], width: usize) -> Vec<f64> {
        let npix = disc.grid.len();
        let n_theta = disc.n_theta;
        let per_dir: Vec<Vec<f64>> = self
            .dirs
            .par_iter()
            .enumerate()
            .map(|(q, d)| {
                let gq = &g[q * npix * width..(q + 1) * npix * width];
                let mut vals = vec![0.0; d.rays.len() * width];
                for (r, &(_, s, e)) in d.rays.iter().enumerate() {
                    let acc = &mut vals[r * width..(r + 1) * width];
                    for i in s..e {
                        let w = d.weights[i];
                        let src = &gq[d.pixels[i] as usize * width..][..width];
                        for b in 0..width {
                            acc[b] += w * src[b];
                        }
                    }
                }
                vals
            })
            .collect();
        let mut out = vec![0.0; disc.n_rows() * width];
        for (q, d) in self.dirs.iter().enumerate() {
            for (r, &(p, _, _)) in d.rays.iter().enumerate() {
                let row = p * n_theta + q;
                out[row * width..(row + 1) * width]
                    .copy_from_slice(&per_dir[q][r * width..(r + 1) * width]);
            }
        }
        out
    }

    /// Exact transpose of [`TracePlan::apply`].
    pub(crate) fn apply_transpose(
        &self,
        disc: &Discretization,
        y: &[f64],
        width: usize,
    ) -> Vec<f64> {
        let npix = disc.grid.len();
        let n_theta = disc.n_theta;
        let mut out = vec![0.0; disc.n_theta * npix * width];
        out.par_chunks_mut(npix * width)
            .zip(self.dirs.par_iter())
            .enumerate()
            .for_each(|(q, (gq, d))| {
                for &(p, s, e) in &d.rays {
                    let row = p * n_theta + q;
                    let src = &y[row * width..(row + 1) * width];
                    for i in s..e {
                        let w = d.weights[i];
                        let dst = &mut gq[d.pixels[i] as usize * width..][..width];
                        for b in 0..width {
                            dst[b] += w * src[b];
                        }
                    }
                }
            });
        out
    }
}

/// Lines and samples per pixel width of the sweep grid.
const SWEEP_OVERSAMPLING: usize = 1;

/// Rotated line grid used by the `T1^{-1}` sweeps.
#[derive(Clone, Copy, Debug)]
struct SweepLayout {
    n_s: usize,
    n_t: usize,
    ds: f64,
    dt: f64,
    r1: f64,
}

impl SweepLayout {
    fn new(grid: Grid) -> Self {
        let n = SWEEP_OVERSAMPLING * grid.nx.max(grid.ny);
        let r1 = grid.half_width;
        SweepLayout {
            n_s: n,
            n_t: n,
            ds: 2.0 * r1 / n as f64,
            dt: 2.0 * r1 / n as f64,
            r1,
        }
    }

    #[inline]
    fn offset(&self, j: usize) -> f64 {
        -self.r1 + (j as f64 + 0.5) * self.ds
    }

    /// Sample range `[k_lo, k_hi]` covering the chord of line `s`.
    #[inline]
    fn range(&self, s: f64) -> (usize, usize) {
        let c = (self.r1 * self.r1 - s * s).max(0.0).sqrt();
        let lo = ((self.r1 - c) / self.dt).floor().max(0.0) as usize;
        let hi = (((self.r1 + c) / self.dt).ceil() as usize).min(self.n_t);
        (lo, hi)
    }
}

/// Linear transport model with its discretization and cached plans.
pub struct Transport {
    geom: DiskGeometry,
    disc: Discretization,
    sigma: AbsorptionField,
    kernel: ScatteringKernel,
    settings: SolverSettings,
    sigma_slices: Vec<Raster>,
    outer_pixels: Vec<usize>,
    inner: Vec<bool>,
    kernel_plan: KernelPlan,
    sweep: SweepLayout,
    trace: OnceLock<TracePlan>,
    rho: OnceLock<f64>,
}

impl Transport {
    pub fn new(
        geom: DiskGeometry,
        disc: Discretization,
        sigma: AbsorptionField,
        kernel: ScatteringKernel,
    ) -> Result<Self> {
        let grid = disc.grid;
        grid.ensure_same(&sigma.grid())?;
        if (grid.half_width - geom.radius_outer()).abs() > 1e-12 * geom.radius_outer() {
            return Err(Error::GridMismatch(format!(
                "grid half width {} differs from R1 = {}",
                grid.half_width,
                geom.radius_outer()
            )));
        }
        let outer: Vec<bool> = (0..grid.len())
            .map(|k| grid.center_of(k).norm() < geom.radius_outer())
            .collect();
        let inner = (0..grid.len())
            .map(|k| geom.in_inner(grid.center_of(k)))
            .collect();
        let kernel_plan = KernelPlan::new(&kernel, &disc, &outer)?;
        let sigma_slices = (0..disc.n_theta)
            .map(|q| sigma.slice(disc.direction_angle(q)))
            .collect();
        Ok(Transport {
            geom,
            disc,
            sigma,
            kernel,
            settings: SolverSettings::default(),
            sigma_slices,
            outer_pixels: (0..grid.len()).filter(|&k| outer[k]).collect(),
            inner,
            kernel_plan,
            sweep: SweepLayout::new(grid),
            trace: OnceLock::new(),
            rho: OnceLock::new(),
        })
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Result<Self> {
        if !(settings.tol > 0.0 && settings.delta > 0.0 && settings.delta < 1.0) {
            return Err(Error::InvalidArgument(
                "solver tolerance and delta must be positive (delta < 1)".into(),
            ));
        }
        self.settings = settings;
        Ok(self)
    }

    pub fn geometry(&self) -> &DiskGeometry {
        &self.geom
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn sigma(&self) -> &AbsorptionField {
        &self.sigma
    }

    pub fn kernel(&self) -> &ScatteringKernel {
        &self.kernel
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Pixels centered strictly inside the source disk `Omega`.
    pub fn inner_pixels(&self) -> Vec<usize> {
        (0..self.inner.len()).filter(|&k| self.inner[k]).collect()
    }

    #[inline]
    fn npix(&self) -> usize {
        self.disc.grid.len()
    }

    fn trace_plan(&self) -> &TracePlan {
        self.trace
            .get_or_init(|| TracePlan::build(&self.geom, &self.disc, &self.sigma))
    }

    /// The same model with a different kernel (plans are rebuilt).
    pub fn with_kernel(&self, kernel: ScatteringKernel) -> Result<Transport> {
        let t = Transport::new(self.geom, self.disc, self.sigma.clone(), kernel)?;
        t.with_settings(self.settings)
    }

    /// Kernel rescaled so that the spectral-radius estimate equals `target`.
    pub fn kernel_scaled_to_radius(&self, target: f64) -> Result<ScatteringKernel> {
        let rho = self.spectral_radius();
        if rho <= 0.0 {
            return Err(Error::InvalidArgument(
                "cannot rescale a kernel whose spectral radius is zero".into(),
            ));
        }
        Ok(self.kernel.scaled(target / rho))
    }

    // ---- batched operators -------------------------------------------------

    /// `J`: copies pixel values inside `Omega` to every direction.
    fn j_batch(&self, f: &[f64], width: usize) -> Vec<f64> {
        let npix = self.npix();
        let mut out = vec![0.0; self.disc.n_theta * npix * width];
        for gq in out.chunks_mut(npix * width) {
            for k in 0..npix {
                if self.inner[k] {
                    gq[k * width..(k + 1) * width].copy_from_slice(&f[k * width..(k + 1) * width]);
                }
            }
        }
        out
    }

    /// `J^T`: sums over directions, restricted to `Omega`.
    fn j_transpose_batch(&self, w: &[f64], width: usize) -> Vec<f64> {
        let npix = self.npix();
        let mut out = vec![0.0; npix * width];
        for gq in w.chunks(npix * width) {
            for k in 0..npix {
                if self.inner[k] {
                    for b in 0..width {
                        out[k * width + b] += gq[k * width + b];
                    }
                }
            }
        }
        out
    }

    fn k_batch(&self, u: &[f64], width: usize) -> Vec<f64> {
        let plan = &self.kernel_plan;
        let n_theta = self.disc.n_theta;
        let len = self.npix() * width;
        let mut out = vec![0.0; n_theta * len];
        if plan.coeffs.is_empty() {
            return out;
        }
        let dth = self.disc.dtheta();
        let mut moments = vec![vec![0.0; len]; plan.n_harmonics];
        for (m, mom) in moments.iter_mut().enumerate() {
            for q in 0..n_theta {
                let y = plan.harmonics[m * n_theta + q] * dth;
                if y != 0.0 {
                    axpy(mom, y, &u[q * len..(q + 1) * len]);
                }
            }
        }
        for (j, list) in plan.coeffs.iter().enumerate() {
            let mut bj = vec![0.0; len];
            for (m, a) in list {
                scale_rows_add(&mut bj, a, &moments[*m], width);
            }
            for q in 0..n_theta {
                let th = plan.profiles[j * n_theta + q];
                if th != 0.0 {
                    axpy(&mut out[q * len..(q + 1) * len], th, &bj);
                }
            }
        }
        out
    }

    fn k_transpose_batch(&self, v: &[f64], width: usize) -> Vec<f64> {
        let plan = &self.kernel_plan;
        let n_theta = self.disc.n_theta;
        let len = self.npix() * width;
        let mut out = vec![0.0; n_theta * len];
        if plan.coeffs.is_empty() {
            return out;
        }
        let dth = self.disc.dtheta();
        let mut omega = vec![vec![0.0; len]; plan.n_harmonics];
        for (j, list) in plan.coeffs.iter().enumerate() {
            let mut nu = vec![0.0; len];
            for q in 0..n_theta {
                let th = plan.profiles[j * n_theta + q];
                if th != 0.0 {
                    axpy(&mut nu, th, &v[q * len..(q + 1) * len]);
                }
            }
            for (m, a) in list {
                scale_rows_add(&mut omega[*m], a, &nu, width);
            }
        }
        for (m, om) in omega.iter().enumerate() {
            for q in 0..n_theta {
                let y = plan.harmonics[m * n_theta + q] * dth;
                if y != 0.0 {
                    axpy(&mut out[q * len..(q + 1) * len], y, om);
                }
            }
        }
        out
    }

    /// Masked sample of `sigma(., theta_q)` and `g_q` at `x`.
    #[inline]
    fn sample_line(&self, q: usize, g: &[f64], x: Vec2, width: usize, buf: &mut [f64]) -> f64 {
        if x.norm_sq() > self.sweep.r1 * self.sweep.r1 * (1.0 + 1e-12) {
            buf.iter_mut().for_each(|v| *v = 0.0);
            return 0.0;
        }
        let sig = &self.sigma_slices[q].data;
        let mut s = 0.0;
        buf.iter_mut().for_each(|v| *v = 0.0);
        for (k, w) in self.disc.grid.bilinear_stencil(x) {
            s += w * sig[k];
            let src = &g[k * width..(k + 1) * width];
            for b in 0..width {
                buf[b] += w * src[b];
            }
        }
        s
    }

    #[inline]
    fn sigma_at(&self, q: usize, x: Vec2) -> f64 {
        if x.norm_sq() > self.sweep.r1 * self.sweep.r1 * (1.0 + 1e-12) {
            0.0
        } else {
            self.sigma_slices[q].sample(x)
        }
    }

    /// Bilinear stencil of a pixel center in the rotated `(s, t)` grid.
    #[inline]
    fn line_stencil(&self, x: Vec2, th: Vec2) -> [(usize, f64); 4] {
        let sw = &self.sweep;
        let stride = sw.n_t + 1;
        let (j0, ws) = axis_cell((x.dot(th.perp()) + sw.r1) / sw.ds - 0.5, sw.n_s);
        let (k0, wt) = axis_cell((x.dot(th) + sw.r1) / sw.dt, stride);
        let base = j0 * stride + k0;
        [
            (base, (1.0 - ws) * (1.0 - wt)),
            (base + 1, (1.0 - ws) * wt),
            (base + stride, ws * (1.0 - wt)),
            (base + stride + 1, ws * wt),
        ]
    }

    fn sweep_direction(&self, q: usize, g: &[f64], out: &mut [f64], width: usize) {
        let sw = self.sweep;
        let stride = sw.n_t + 1;
        let th = self.disc.direction(q);
        let perp = th.perp();
        let half = 0.5 * sw.dt;
        let mut lines = vec![0.0; sw.n_s * stride * width];
        let mut g_prev = vec![0.0; width];
        let mut g_next = vec![0.0; width];
        for j in 0..sw.n_s {
            let s = sw.offset(j);
            if s.abs() >= sw.r1 {
                continue;
            }
            let (lo, hi) = sw.range(s);
            let line = &mut lines[j * stride * width..(j + 1) * stride * width];
            let point = |k: usize| perp * s + th * (-sw.r1 + k as f64 * sw.dt);
            let mut sig_prev = self.sample_line(q, g, point(lo), width, &mut g_prev);
            for k in lo..sw.n_t {
                let (cur, next) = line[k * width..(k + 2) * width].split_at_mut(width);
                if k >= hi {
                    next.copy_from_slice(cur);
                    continue;
                }
                let sig_next = self.sample_line(q, g, point(k + 1), width, &mut g_next);
                let d = (-(sig_prev + sig_next) * half).exp();
                for b in 0..width {
                    next[b] = d * cur[b] + half * (d * g_prev[b] + g_next[b]);
                }
                std::mem::swap(&mut g_prev, &mut g_next);
                sig_prev = sig_next;
            }
        }
        for &pix in &self.outer_pixels {
            let x = self.disc.grid.center_of(pix);
            let dst = &mut out[pix * width..(pix + 1) * width];
            for (idx, w) in self.line_stencil(x, th) {
                if w != 0.0 {
                    let src = &lines[idx * width..(idx + 1) * width];
                    for b in 0..width {
                        dst[b] += w * src[b];
                    }
                }
            }
        }
    }

    fn sweep_direction_transpose(&self, q: usize, v: &[f64], out: &mut [f64], width: usize) {
        let sw = self.sweep;
        let stride = sw.n_t + 1;
        let th = self.disc.direction(q);
        let perp = th.perp();
        let half = 0.5 * sw.dt;
        let grid = self.disc.grid;
        let mut lam = vec![0.0; sw.n_s * stride * width];
        for &pix in &self.outer_pixels {
            let x = grid.center_of(pix);
            let src = &v[pix * width..(pix + 1) * width];
            for (idx, w) in self.line_stencil(x, th) {
                if w != 0.0 {
                    let dst = &mut lam[idx * width..(idx + 1) * width];
                    for b in 0..width {
                        dst[b] += w * src[b];
                    }
                }
            }
        }
        let mut gstar = vec![0.0; stride * width];
        let mut sig = vec![0.0; stride];
        for j in 0..sw.n_s {
            let s = sw.offset(j);
            if s.abs() >= sw.r1 {
                continue;
            }
            let (lo, hi) = sw.range(s);
            let line = &mut lam[j * stride * width..(j + 1) * stride * width];
            let point = |k: usize| perp * s + th * (-sw.r1 + k as f64 * sw.dt);
            for (k, s) in sig.iter_mut().enumerate().take(hi.max(lo) + 1).skip(lo) {
                *s = self.sigma_at(q, point(k));
            }
            gstar[lo * width..].iter_mut().for_each(|v| *v = 0.0);
            for k in (lo..sw.n_t).rev() {
                let (cur, next) = line[k * width..(k + 2) * width].split_at_mut(width);
                if k >= hi {
                    for b in 0..width {
                        cur[b] += next[b];
                    }
                    continue;
                }
                let d = (-(sig[k] + sig[k + 1]) * half).exp();
                let (g_cur, g_next) = gstar[k * width..(k + 2) * width].split_at_mut(width);
                for b in 0..width {
                    g_next[b] += half * next[b];
                    g_cur[b] += half * d * next[b];
                    cur[b] += d * next[b];
                }
            }
            if hi > lo {
                for k in lo..=hi {
                    let x = point(k);
                    if x.norm_sq() > sw.r1 * sw.r1 * (1.0 + 1e-12) {
                        continue;
                    }
                    let src = &gstar[k * width..(k + 1) * width];
                    for (pix, w) in grid.bilinear_stencil(x) {
                        let dst = &mut out[pix * width..(pix + 1) * width];
                        for b in 0..width {
                            dst[b] += w * src[b];
                        }
                    }
                }
            }
        }
        // Sources outside the outer disk are identically zero.
        for pix in 0..grid.len() {
            if grid.center_of(pix).norm() >= sw.r1 {
                out[pix * width..(pix + 1) * width]
                    .iter_mut()
                    .for_each(|v| *v = 0.0);
            }
        }
    }

    fn t1_inverse_batch(&self, g: &[f64], width: usize) -> Vec<f64> {
        let len = self.npix() * width;
        let mut out = vec![0.0; self.disc.n_theta * len];
        out.par_chunks_mut(len)
            .enumerate()
            .for_each(|(q, uq)| self.sweep_direction(q, &g[q * len..(q + 1) * len], uq, width));
        out
    }

    fn t1_inverse_transpose_batch(&self, v: &[f64], width: usize) -> Vec<f64> {
        let len = self.npix() * width;
        let mut out = vec![0.0; self.disc.n_theta * len];
        out.par_chunks_mut(len).enumerate().for_each(|(q, gq)| {
            self.sweep_direction_transpose(q, &v[q * len..(q + 1) * len], gq, width)
        });
        out
    }

    /// Source iteration for `width` right-hand sides `f[pixel * width + b]`.
    /// Returns `(u, source, report)`.
    fn solve_batch(
        &self,
        f: &[f64],
        width: usize,
        tol: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, SolveReport)> {
        let rho = self.spectral_radius();
        let mut report = SolveReport {
            iterations: 0,
            residual_history: Vec::new(),
            spectral_radius_estimate: rho,
            converged: false,
        };
        if !self.kernel.is_empty() && rho >= 1.0 - self.settings.delta {
            return Err(Error::NonConvergence(Box::new(report)));
        }
        let jf = self.j_batch(f, width);
        let b = self.t1_inverse_batch(&jf, width);
        report.iterations = 1;
        if self.kernel.is_empty() || b.iter().all(|&v| v == 0.0) {
            report.residual_history.push(0.0);
            report.converged = true;
            return Ok((b, jf, report));
        }
        let mut u = b.clone();
        loop {
            if report.iterations >= self.settings.max_iter {
                return Err(Error::NonConvergence(Box::new(report)));
            }
            let mut next = self.t1_inverse_batch(&self.k_batch(&u, width), width);
            axpy(&mut next, 1.0, &b);
            let res = relative_change(&next, &u, width);
            report.iterations += 1;
            report.residual_history.push(res);
            u = next;
            if res < tol {
                report.converged = true;
                break;
            }
        }
        let mut source = self.k_batch(&u, width);
        axpy(&mut source, 1.0, &jf);
        Ok((u, source, report))
    }

    /// Solves `w = v + T1^{-T} K^T w`, the transpose of the source equation.
    fn adjoint_solve_batch(
        &self,
        v: &[f64],
        width: usize,
        tol: f64,
    ) -> Result<(Vec<f64>, SolveReport)> {
        let rho = self.spectral_radius();
        let mut report = SolveReport {
            iterations: 1,
            residual_history: Vec::new(),
            spectral_radius_estimate: rho,
            converged: false,
        };
        if self.kernel.is_empty() || v.iter().all(|&x| x == 0.0) {
            report.residual_history.push(0.0);
            report.converged = true;
            return Ok((v.to_vec(), report));
        }
        if rho >= 1.0 - self.settings.delta {
            report.iterations = 0;
            return Err(Error::NonConvergence(Box::new(report)));
        }
        let mut w = v.to_vec();
        loop {
            if report.iterations >= self.settings.max_iter {
                return Err(Error::NonConvergence(Box::new(report)));
            }
            let mut next =
                self.t1_inverse_transpose_batch(&self.k_transpose_batch(&w, width), width);
            axpy(&mut next, 1.0, v);
            let res = relative_change(&next, &w, width);
            report.iterations += 1;
            report.residual_history.push(res);
            w = next;
            if res < tol {
                report.converged = true;
                return Ok((w, report));
            }
        }
    }

    // ---- public single-field API ------------------------------------------

    pub fn apply_j(&self, f: &Raster) -> Result<PhaseSpaceField> {
        self.disc.grid.ensure_same(&f.grid)?;
        Ok(self.field(self.j_batch(&f.data, 1)))
    }

    pub fn apply_j_transpose(&self, w: &PhaseSpaceField) -> Result<Raster> {
        w.check(&self.disc)?;
        Ok(Raster {
            grid: self.disc.grid,
            data: self.j_transpose_batch(&w.data, 1),
        })
    }

    pub fn apply_k(&self, u: &PhaseSpaceField) -> Result<PhaseSpaceField> {
        u.check(&self.disc)?;
        Ok(self.field(self.k_batch(&u.data, 1)))
    }

    /// Euclidean transpose of [`Transport::apply_k`].
    pub fn apply_k_transpose(&self, v: &PhaseSpaceField) -> Result<PhaseSpaceField> {
        v.check(&self.disc)?;
        Ok(self.field(self.k_transpose_batch(&v.data, 1)))
    }

    pub fn apply_t1_inverse(&self, g: &PhaseSpaceField) -> Result<PhaseSpaceField> {
        g.check(&self.disc)?;
        Ok(self.field(self.t1_inverse_batch(&g.data, 1)))
    }

    /// Euclidean transpose of [`Transport::apply_t1_inverse`].
    pub fn apply_t1_inverse_transpose(&self, v: &PhaseSpaceField) -> Result<PhaseSpaceField> {
        v.check(&self.disc)?;
        Ok(self.field(self.t1_inverse_transpose_batch(&v.data, 1)))
    }

    fn field(&self, data: Vec<f64>) -> PhaseSpaceField {
        PhaseSpaceField {
            grid: self.disc.grid,
            n_theta: self.disc.n_theta,
            data,
        }
    }

    fn boundary(&self, values: Vec<f64>) -> BoundaryData {
        let mut b = BoundaryData::zeros(&self.disc);
        b.values = values;
        b
    }

    /// Estimate of the spectral radius of `T1^{-1} K`: power iteration on the
    /// squared operator started from `J 1_Omega`. Cached after the first call.
    pub fn spectral_radius(&self) -> f64 {
        *self.rho.get_or_init(|| {
            if self.kernel.is_empty() {
                return 0.0;
            }
            let ones = vec![1.0; self.npix()];
            let mut v = self.j_batch(&ones, 1);
            normalize(&mut v);
            let mut est = 0.0;
            for _ in 0..self.settings.power_iterations.max(1) {
                let w1 = self.t1_inverse_batch(&self.k_batch(&v, 1), 1);
                let mut w = self.t1_inverse_batch(&self.k_batch(&w1, 1), 1);
                let n = normalize(&mut w);
                if n == 0.0 {
                    return 0.0;
                }
                est = n;
                v = w;
            }
            est.sqrt()
        })
    }

    pub fn solve_forward(&self, f: &Raster) -> Result<ForwardSolution> {
        self.solve_forward_with_tol(f, self.settings.tol)
    }

    pub fn solve_forward_with_tol(&self, f: &Raster, tol: f64) -> Result<ForwardSolution> {
        self.disc.grid.ensure_same(&f.grid)?;
        let (u, source, report) = self.solve_batch(&f.data, 1, tol)?;
        Ok(ForwardSolution {
            u: self.field(u),
            source: self.field(source),
            report,
        })
    }

    /// Outgoing trace `u|_{d+ S Omega_1}` of `u = T1^{-1} source`.
    pub fn trace_plus(&self, source: &PhaseSpaceField) -> Result<BoundaryData> {
        source.check(&self.disc)?;
        Ok(self.boundary(self.trace_plan().apply(&self.disc, &source.data, 1)))
    }

    /// Euclidean transpose of [`Transport::trace_plus`].
    pub fn trace_plus_transpose(&self, h: &BoundaryData) -> Result<PhaseSpaceField> {
        h.check(&self.disc)?;
        Ok(self.field(self.trace_plan().apply_transpose(&self.disc, &h.values, 1)))
    }

    /// `chi_V` at every boundary sample (0 on incoming samples).
    pub fn cutoff_values(&self, spec: &CutoffSpec) -> Vec<f64> {
        cutoff_values(spec, &self.geom, &self.disc)
    }

    /// `X_V f = chi_V R_+ u`.
    pub fn measure_xv(&self, spec: &CutoffSpec, f: &Raster) -> Result<BoundaryData> {
        self.measure_xv_with_tol(spec, f, self.settings.tol)
    }

    pub fn measure_xv_with_tol(
        &self,
        spec: &CutoffSpec,
        f: &Raster,
        tol: f64,
    ) -> Result<BoundaryData> {
        let sol = self.solve_forward_with_tol(f, tol)?;
        let mut out = self.trace_plus(&sol.source)?;
        for (v, c) in out.values.iter_mut().zip(self.cutoff_values(spec)) {
            *v *= c;
        }
        Ok(out)
    }

    /// `X_V^* h` in the weighted inner products (`L^2(d Sigma)` to `L^2(Omega)`),
    /// by the transposed source iteration.
    pub fn adjoint_measure(&self, spec: &CutoffSpec, h: &BoundaryData) -> Result<Raster> {
        self.adjoint_measure_with_tol(spec, h, self.settings.tol)
    }

    pub fn adjoint_measure_with_tol(
        &self,
        spec: &CutoffSpec,
        h: &BoundaryData,
        tol: f64,
    ) -> Result<Raster> {
        h.check(&self.disc)?;
        let y: Vec<f64> = h
            .values
            .iter()
            .zip(self.cutoff_values(spec))
            .zip(h.measure_weights())
            .map(|((v, c), w)| v * c * w)
            .collect();
        let v = self.trace_plan().apply_transpose(&self.disc, &y, 1);
        let (w, _) = self.adjoint_solve_batch(&v, 1, tol)?;
        let area = self.disc.grid.pixel_area();
        let data = self
            .j_transpose_batch(&w, 1)
            .into_iter()
            .map(|x| x / area)
            .collect();
        Ok(Raster {
            grid: self.disc.grid,
            data,
        })
    }

    /// Dense matrix of `f -> X_V f` restricted to the given pixel columns,
    /// row-major with `n_bdry * n_theta` rows. Column `c` is the measurement
    /// of the unit pixel value at `columns[c]`.
    pub fn assemble_measurement(
        &self,
        spec: &CutoffSpec,
        columns: &[usize],
        tol: f64,
    ) -> Result<(Vec<f64>, SolveReport)> {
        let npix = self.npix();
        let n_rows = self.disc.n_rows();
        let n_cols = columns.len();
        if let Some(&bad) = columns.iter().find(|&&c| c >= npix) {
            return Err(Error::InvalidArgument(format!(
                "pixel {bad} is off the grid"
            )));
        }
        let chi = self.cutoff_values(spec);
        let mut matrix = vec![0.0; n_rows * n_cols];
        let mut worst = SolveReport {
            iterations: 0,
            residual_history: Vec::new(),
            spectral_radius_estimate: self.spectral_radius(),
            converged: true,
        };
        for (chunk_idx, chunk) in columns.chunks(ASSEMBLY_BATCH).enumerate() {
            let width = chunk.len();
            let mut f = vec![0.0; npix * width];
            for (b, &pix) in chunk.iter().enumerate() {
                f[pix * width + b] = 1.0;
            }
            let (_, source, report) = self.solve_batch(&f, width, tol)?;
            if report.iterations > worst.iterations {
                worst = report;
            }
            let y = self.trace_plan().apply(&self.disc, &source, width);
            let c0 = chunk_idx * ASSEMBLY_BATCH;
            for r in 0..n_rows {
                if chi[r] == 0.0 {
                    continue;
                }
                let row = &mut matrix[r * n_cols + c0..r * n_cols + c0 + width];
                for b in 0..width {
                    row[b] = chi[r] * y[r * width + b];
                }
            }
        }
        Ok((matrix, worst))
    }

    /// Boundary data of the successive scattering orders
    /// `chi_V R_+ (K T1^{-1})^j J f`, `j = 0..count`.
    pub fn scattering_orders(
        &self,
        spec: &CutoffSpec,
        f: &Raster,
        count: usize,
    ) -> Result<Vec<BoundaryData>> {
        self.disc.grid.ensure_same(&f.grid)?;
        let chi = self.cutoff_values(spec);
        let mut g = self.j_batch(&f.data, 1);
        let mut out = Vec::with_capacity(count);
        for j in 0..count {
            if j > 0 {
                g = self.k_batch(&self.t1_inverse_batch(&g, 1), 1);
            }
            let mut y = self.trace_plan().apply(&self.disc, &g, 1);
            for (v, c) in y.iter_mut().zip(&chi) {
                *v *= c;
            }
            out.push(self.boundary(y));
        }
        Ok(out)
    }
}

/// `chi_V` at every boundary sample in storage order (0 on incoming samples).
pub(crate) fn cutoff_values(
    spec: &CutoffSpec,
    geom: &DiskGeometry,
    disc: &Discretization,
) -> Vec<f64> {
    let r1 = geom.radius_outer();
    let mut out = Vec::with_capacity(disc.n_rows());
    for p in 0..disc.n_bdry {
        let nu = Vec2::from_angle(disc.boundary_angle(p));
        for q in 0..disc.n_theta {
            let th = disc.direction(q);
            out.push(if th.dot(nu) > OUTGOING_EPS {
                spec.eval(nu * r1, th)
            } else {
                0.0
            });
        }
    }
    out
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y[k * width + b] += a[k] * x[k * width + b]`.
#[inline]
fn scale_rows_add(y: &mut [f64], a: &[f64], x: &[f64], width: usize) {
    for (k, &ak) in a.iter().enumerate() {
        if ak != 0.0 {
            let (yk, xk) = (
                &mut y[k * width..(k + 1) * width],
                &x[k * width..(k + 1) * width],
            );
            for b in 0..width {
                yk[b] += ak * xk[b];
            }
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Worst column of `|new - old| / |new|` (0 for a zero column).
fn relative_change(new: &[f64], old: &[f64], width: usize) -> f64 {
    let mut diff = vec![0.0; width];
    let mut norm = vec![0.0; width];
    for (i, (a, b)) in new.iter().zip(old).enumerate() {
        let c = i % width;
        diff[c] += (a - b) * (a - b);
        norm[c] += a * a;
    }
    diff.iter()
        .zip(&norm)
        .map(|(d, n)| if *n > 0.0 { (d / n).sqrt() } else { 0.0 })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Blob;

    fn model(nx: usize, n_theta: usize, sigma_c: f64, kernel_c: f64) -> Transport {
        let geom = DiskGeometry::new(0.7, 1.0).unwrap();
        let disc = Discretization::new(&geom, nx, nx, n_theta, 2 * n_theta).unwrap();
        let sigma = AbsorptionField::constant(disc.grid, &geom, sigma_c).unwrap();
        let kernel = if kernel_c > 0.0 {
            ScatteringKernel::isotropic(disc.grid, &geom, kernel_c)
        } else {
            ScatteringKernel::none(&geom)
        };
        Transport::new(geom, disc, sigma, kernel).unwrap()
    }

    fn bump(grid: Grid) -> Raster {
        Raster::from_fn(grid, |x| {
            (-(x - Vec2::new(0.1, -0.2)).norm_sq() * 12.0).exp()
        })
    }

    #[test]
    fn j_examples() {
        let t = model(16, 8, 0.0, 0.0);
        let g = t.discretization().grid;
        let z = t.apply_j(&Raster::zeros(g)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let f = bump(g).mask_disk(0.7);
        let jf = t.apply_j(&f).unwrap();
        let lhs = jf.norm().powi(2);
        assert!((lhs - TAU * f.l2_norm().powi(2)).abs() < 1e-12 * lhs);
        let pix = g.index(8, 8);
        let mut e = Raster::zeros(g);
        e.data[pix] = 1.0;
        let je = t.apply_j(&e).unwrap();
        assert!((0..8).all(|q| je.get(pix, q) == 1.0));
    }

    #[test]
    fn isotropic_k_on_constant_field() {
        let t = model(16, 16, 0.0, 0.3);
        let g = t.discretization().grid;
        let u = PhaseSpaceField::from_fn(g, 16, |x, _| 1.0 + x.x);
        let ku = t.apply_k(&u).unwrap();
        for k in g.pixels_in_disk(0.7) {
            let x = g.center_of(k);
            for q in 0..16 {
                assert!((ku.get(k, q) - 0.3 * (1.0 + x.x)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn single_harmonic_kernel_matches_quadrature() {
        let geom = DiskGeometry::new(0.7, 1.0).unwrap();
        let disc = Discretization::new(&geom, 12, 12, 24, 24).unwrap();
        let g = disc.grid;
        let kernel = ScatteringKernel::henyey_greenstein(g, &geom, 0.5, 0.4, 2).unwrap();
        let t =
            Transport::new(geom, disc, AbsorptionField::zero(g, &geom), kernel.clone()).unwrap();
        let u = PhaseSpaceField::from_fn(g, 24, |_, th| (2.0 * th).cos() + 0.3 * th.sin());
        let ku = t.apply_k(&u).unwrap();
        let k = g.index(6, 5);
        let x = g.center_of(k);
        for q in [0, 5, 13] {
            let th = disc.direction_angle(q);
            // Dense quadrature with 720 nodes; exact for these trig polynomials.
            let n = 720;
            let oracle: f64 = (0..n)
                .map(|i| {
                    let tp = TAU * i as f64 / n as f64;
                    kernel.eval(x, th, tp) * ((2.0 * tp).cos() + 0.3 * tp.sin())
                })
                .sum::<f64>()
                * TAU
                / n as f64;
            assert!((ku.get(k, q) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn transposes_are_exact() {
        let geom = DiskGeometry::new(0.7, 1.0).unwrap();
        let disc = Discretization::new(&geom, 14, 14, 10, 20).unwrap();
        let g = disc.grid;
        let sigma = AbsorptionField::gaussian_blobs(
            g,
            &geom,
            &[Blob {
                center: Vec2::new(0.2, 0.1),
                width: 0.3,
                amplitude: 1.5,
            }],
        )
        .unwrap();
        let kernel = ScatteringKernel::henyey_greenstein(g, &geom, 0.4, 0.3, 2).unwrap();
        let t = Transport::new(geom, disc, sigma, kernel).unwrap();
        let a = PhaseSpaceField::from_fn(g, 10, |x, th| (3.0 * x.x + th).sin() + 1.0);
        let b = PhaseSpaceField::from_fn(g, 10, |x, th| (x.y * 2.0 - th).cos() * x.x);
        let euclid = |x: &PhaseSpaceField, y: &PhaseSpaceField| -> f64 {
            x.data.iter().zip(&y.data).map(|(p, q)| p * q).sum()
        };
        let l = euclid(&t.apply_t1_inverse(&a).unwrap(), &b);
        let r = euclid(&a, &t.apply_t1_inverse_transpose(&b).unwrap());
        assert!((l - r).abs() < 1e-12 * l.abs().max(1.0), "{l} {r}");
        let l = euclid(&t.apply_k(&a).unwrap(), &b);
        let r = euclid(&a, &t.apply_k_transpose(&b).unwrap());
        assert!((l - r).abs() < 1e-12 * l.abs().max(1.0));
        let mut h = BoundaryData::zeros(&disc);
        for (i, v) in h.values.iter_mut().enumerate() {
            *v = ((i * 7919) % 13) as f64 - 6.0;
        }
        let tr = t.trace_plus(&a).unwrap();
        let l: f64 = tr.values.iter().zip(&h.values).map(|(p, q)| p * q).sum();
        let r = euclid(&a, &t.trace_plus_transpose(&h).unwrap());
        assert!((l - r).abs() < 1e-12 * l.abs().max(1.0));
    }

    #[test]
    fn sweep_of_zero_and_constant_chord() {
        let t = model(64, 8, 0.0, 0.0);
        let g = t.discretization().grid;
        let zero = t.apply_t1_inverse(&PhaseSpaceField::zeros(g, 8)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        // sigma = 0, g = 1 on Omega_1: u(x, theta) = distance back to the circle.
        let one = PhaseSpaceField::from_fn(g, 8, |_, _| 1.0);
        let u = t.apply_t1_inverse(&one).unwrap();
        let geom = t.geometry();
        let mut worst = 0.0_f64;
        for k in g.pixels_in_disk(0.9) {
            let x = g.center_of(k);
            let th = t.discretization().direction(3);
            let exact = geom.exit_time(x, -th);
            worst = worst.max((u.get(k, 3) - exact).abs());
        }
        assert!(worst < 2e-2, "{worst}");
    }

    #[test]
    fn sweep_with_absorption_matches_ode() {
        let c = 0.8;
        let t = model(64, 8, c, 0.0);
        let g = t.discretization().grid;
        let one = PhaseSpaceField::from_fn(g, 8, |_, _| 1.0);
        let u = t.apply_t1_inverse(&one).unwrap();
        let geom = t.geometry();
        for k in g.pixels_in_disk(0.9) {
            let x = g.center_of(k);
            let th = t.discretization().direction(0);
            let l = geom.exit_time(x, -th);
            let exact = (1.0 - (-c * l).exp()) / c;
            assert!((u.get(k, 0) - exact).abs() < 2e-2);
        }
    }

    #[test]
    fn forward_solve_examples() {
        let t = model(24, 16, 0.3, 0.0);
        let g = t.discretization().grid;
        let f = bump(g);
        let sol = t.solve_forward(&f).unwrap();
        assert_eq!(sol.report.iterations, 1);
        let direct = t.apply_t1_inverse(&t.apply_j(&f).unwrap()).unwrap();
        assert_eq!(sol.u.data, direct.data);

        let ts = model(24, 16, 0.3, 0.4);
        let zero = ts.solve_forward(&Raster::zeros(g)).unwrap();
        assert_eq!(zero.report.iterations, 1);
        assert_eq!(zero.u.max_abs(), 0.0);

        let sol = ts.solve_forward(&f).unwrap();
        assert!(sol.report.converged);
        let hist = &sol.report.residual_history;
        assert!(hist.windows(2).all(|w| w[1] < w[0]));
        // (Id - T1^{-1} K) u = T1^{-1} J f.
        let ku = ts.apply_t1_inverse(&ts.apply_k(&sol.u).unwrap()).unwrap();
        let lhs: Vec<f64> = sol
            .u
            .data
            .iter()
            .zip(&ku.data)
            .map(|(a, b)| a - b)
            .collect();
        let rhs = ts.apply_t1_inverse(&ts.apply_j(&f).unwrap()).unwrap();
        let err = lhs
            .iter()
            .zip(&rhs.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-8 * rhs.max_abs());
        assert!(sol.u.data.iter().all(|&v| v >= -1e-8));
    }

    #[test]
    fn refuses_supercritical_kernel() {
        let t = model(16, 8, 0.0, 1.0);
        let k = t.kernel_scaled_to_radius(1.2).unwrap();
        let t2 = t.with_kernel(k).unwrap();
        assert!((t2.spectral_radius() - 1.2).abs() < 1e-6);
        match t2.solve_forward(&bump(t.discretization().grid)) {
            Err(Error::NonConvergence(r)) => assert!(r.spectral_radius_estimate > 1.0),
            other => panic!("expected refusal, got {:?}", other.map(|s| s.report)),
        }
    }

    #[test]
    fn batched_and_single_solves_agree() {
        let t = model(16, 8, 0.2, 0.5);
        let g = t.discretization().grid;
        let cols = [g.index(8, 8), g.index(5, 9)];
        let (m, _) = t
            .assemble_measurement(&CutoffSpec::full(), &cols, 1e-13)
            .unwrap();
        for (c, &pix) in cols.iter().enumerate() {
            let mut e = Raster::zeros(g);
            e.data[pix] = 1.0;
            let y = t
                .measure_xv_with_tol(&CutoffSpec::full(), &e, 1e-13)
                .unwrap();
            for r in 0..y.values.len() {
                assert!((m[r * cols.len() + c] - y.values[r]).abs() < 1e-12);
            }
        }
    }
}
