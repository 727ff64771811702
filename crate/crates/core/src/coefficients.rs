//! Absorption and scattering coefficients.
//!
//! Angular dependence is stored as truncated Fourier series, so a field is a
//! list of `(harmonic, raster)` pairs and the scattering kernel is a finite
//! sum of separable terms `profile_j(theta) * weight_j(x, theta')`.
//!
//! Coefficients given only on the inner disk are extended to the outer disk
//! by radial projection onto the inner circle followed by multiplication
//! with a fixed C-infinity radial cutoff (1 on the inner disk, 0 on the outer
//! quarter of the collar). Everything evaluates to 0 outside the outer disk.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::geometry::{DiskGeometry, Vec2};
use crate::raster::{Grid, Raster};
use crate::spectral;

/// A real circular harmonic `cos(m theta)` or `sin(m theta)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Harmonic {
    Cos(u32),
    Sin(u32),
}

impl Harmonic {
    #[inline]
    pub fn eval(self, theta: f64) -> f64 {
        match self {
            Harmonic::Cos(0) => 1.0,
            Harmonic::Cos(m) => (m as f64 * theta).cos(),
            Harmonic::Sin(m) => (m as f64 * theta).sin(),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Harmonic::Cos(m) | Harmonic::Sin(m) => m,
        }
    }

    /// `H^1(S^1)` norm.
    pub fn h1_norm(self) -> f64 {
        match self {
            Harmonic::Cos(0) => TAU.sqrt(),
            Harmonic::Sin(0) => 0.0,
            Harmonic::Cos(m) | Harmonic::Sin(m) => (PI * (1.0 + (m * m) as f64)).sqrt(),
        }
    }
}

/// Trigonometric polynomial on the circle.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrigPoly {
    pub terms: Vec<(Harmonic, f64)>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly {
            terms: vec![(Harmonic::Cos(0), c)],
        }
    }

    pub fn single(h: Harmonic, amplitude: f64) -> Self {
        TrigPoly {
            terms: vec![(h, amplitude)],
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.terms.iter().map(|&(h, a)| a * h.eval(theta)).sum()
    }

    /// `H^1(S^1)` norm; distinct harmonics are orthogonal.
    pub fn h1_norm(&self) -> f64 {
        let mut sq = 0.0;
        for (k, &(h, _)) in self.terms.iter().enumerate() {
            if self.terms[..k].iter().any(|&(h2, _)| h2 == h) {
                continue;
            }
            let a: f64 = self.terms.iter().filter(|t| t.0 == h).map(|t| t.1).sum();
            sq += (a * h.h1_norm()).powi(2);
        }
        sq.sqrt()
    }
}

/// `g(x, theta) = sum_m a_m(x) Y_m(theta)` with raster coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularField {
    grid: Grid,
    pub modes: Vec<(Harmonic, Raster)>,
}

impl AngularField {
    pub fn new(grid: Grid, modes: Vec<(Harmonic, Raster)>) -> Result<Self> {
        for (_, r) in &modes {
            grid.ensure_same(&r.grid)?;
        }
        Ok(AngularField { grid, modes })
    }

    pub fn isotropic(raster: Raster) -> Self {
        AngularField {
            grid: raster.grid,
            modes: vec![(Harmonic::Cos(0), raster)],
        }
    }

    pub fn zero(grid: Grid) -> Self {
        AngularField {
            grid,
            modes: Vec::new(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn eval(&self, x: Vec2, theta: f64) -> f64 {
        self.modes
            .iter()
            .map(|(h, r)| h.eval(theta) * r.sample(x))
            .sum()
    }

    /// Raster of `g(., theta)` for one direction.
    pub fn slice(&self, theta: f64) -> Raster {
        let mut out = Raster::zeros(self.grid);
        for (h, r) in &self.modes {
            let c = h.eval(theta);
            if c != 0.0 {
                out.data
                    .iter_mut()
                    .zip(&r.data)
                    .for_each(|(o, v)| *o += c * v);
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        AngularField {
            grid: self.grid,
            modes: self
                .modes
                .iter()
                .map(|(h, r)| (*h, r.clone().scale(factor)))
                .collect(),
        }
    }

    /// Sup of `|g|` over pixel centers and `n_angles` uniform directions.
    pub fn sampled_sup(&self, n_angles: usize) -> f64 {
        (0..n_angles)
            .map(|q| self.slice(TAU * q as f64 / n_angles as f64).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn mode_norms(&self, order: u32) -> Result<ModeNorms> {
        mode_norms(self, order)
    }
}

/// Radial cutoff used to extend coefficients from the inner disk: 1 for
/// `r <= R`, 0 for `r >= R + 0.75 (R1 - R)`, C-infinity in between.
pub fn extension_cutoff(geom: &DiskGeometry, r: f64) -> f64 {
    let inner = geom.radius_inner();
    let outer = inner + 0.75 * (geom.radius_outer() - inner);
    if r <= inner {
        1.0
    } else if r >= outer {
        0.0
    } else {
        let t = (outer - r) / (outer - inner);
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Absorption `sigma(x, theta) >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorptionField {
    field: AngularField,
    radius_outer: f64,
}

/// Isotropic Gaussian bump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub center: Vec2,
    pub width: f64,
    pub amplitude: f64,
}

impl Blob {
    #[inline]
    pub fn eval(&self, x: Vec2) -> f64 {
        self.amplitude * (-(x - self.center).norm_sq() / (2.0 * self.width * self.width)).exp()
    }
}

impl AbsorptionField {
    /// Wraps an angular field after checking `sigma >= -1e-12` at every pixel
    /// center for 64 test directions.
    pub fn from_field(geom: &DiskGeometry, field: AngularField) -> Result<Self> {
        let grid = field.grid();
        for q in 0..64 {
            let s = field.slice(TAU * q as f64 / 64.0);
            if let Some(k) = (0..grid.len())
                .find(|&k| s.data[k] < -1e-12 && grid.center_of(k).norm() <= geom.radius_outer())
            {
                return Err(Error::InvalidArgument(format!(
                    "absorption is negative ({}) at pixel {k}",
                    s.data[k]
                )));
            }
        }
        Ok(AbsorptionField {
            field,
            radius_outer: geom.radius_outer(),
        })
    }

    pub fn zero(grid: Grid, geom: &DiskGeometry) -> Self {
        AbsorptionField {
            field: AngularField::zero(grid),
            radius_outer: geom.radius_outer(),
        }
    }

    /// `sigma = c` on the whole closed outer disk (its own smooth extension).
    pub fn constant(grid: Grid, geom: &DiskGeometry, c: f64) -> Result<Self> {
        let raster = Raster {
            grid,
            data: vec![c; grid.len()],
        };
        Self::from_field(geom, AngularField::isotropic(raster))
    }

    /// Sum of Gaussian bumps times the extension cutoff.
    pub fn gaussian_blobs(grid: Grid, geom: &DiskGeometry, blobs: &[Blob]) -> Result<Self> {
        let raster = Raster::from_fn(grid, |x| {
            extension_cutoff(geom, x.norm()) * blobs.iter().map(|b| b.eval(x)).sum::<f64>()
        });
        Self::from_field(geom, AngularField::isotropic(raster))
    }

    /// Extends a raster meaningful on the inner disk to the outer disk.
    pub fn from_inner_raster(geom: &DiskGeometry, raster: &Raster) -> Result<Self> {
        Self::from_field(
            geom,
            AngularField::isotropic(extend_from_inner(geom, raster)),
        )
    }

    pub fn field(&self) -> &AngularField {
        &self.field
    }

    pub fn grid(&self) -> Grid {
        self.field.grid()
    }

    pub fn is_zero(&self) -> bool {
        self.field.modes.iter().all(|(_, r)| r.max_abs() == 0.0)
    }

    #[inline]
    pub fn eval(&self, x: Vec2, theta: f64) -> f64 {
        if x.norm_sq() > self.radius_outer * self.radius_outer * (1.0 + 1e-12) {
            0.0
        } else {
            self.field.eval(x, theta)
        }
    }

    /// Unmasked raster of `sigma(., theta)`; use [`AbsorptionField::sample_slice`]
    /// to evaluate it with the outer-disk mask.
    pub fn slice(&self, theta: f64) -> Raster {
        self.field.slice(theta)
    }

    #[inline]
    pub fn sample_slice(&self, slice: &Raster, x: Vec2) -> f64 {
        if x.norm_sq() > self.radius_outer * self.radius_outer * (1.0 + 1e-12) {
            0.0
        } else {
            slice.sample(x)
        }
    }

    pub fn mode_norms(&self, order: u32) -> Result<ModeNorms> {
        mode_norms(&self.field, order)
    }
}

/// Radial projection onto the inner disk times the extension cutoff.
pub fn extend_from_inner(geom: &DiskGeometry, raster: &Raster) -> Raster {
    let r0 = geom.radius_inner() * (1.0 - 1e-9);
    Raster::from_fn(raster.grid, |x| {
        let r = x.norm();
        if r < geom.radius_inner() {
            raster.sample(x)
        } else {
            extension_cutoff(geom, r) * raster.sample(x * (r0 / r))
        }
    })
}

/// One separable term `profile(theta) * weight(x, theta')` of the kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMode {
    pub profile: TrigPoly,
    pub weight: AngularField,
}

/// Scattering kernel `k(x, theta, theta') = sum_j profile_j(theta) weight_j(x, theta')`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringKernel {
    pub modes: Vec<KernelMode>,
    radius_outer: f64,
}

impl ScatteringKernel {
    pub fn new(geom: &DiskGeometry, modes: Vec<KernelMode>) -> Self {
        ScatteringKernel {
            modes,
            radius_outer: geom.radius_outer(),
        }
    }

    pub fn none(geom: &DiskGeometry) -> Self {
        Self::new(geom, Vec::new())
    }

    /// `k = c psi(|x|) / (2 pi)`: total scattered mass `c` on the inner disk.
    pub fn isotropic(grid: Grid, geom: &DiskGeometry, c: f64) -> Self {
        let weight = Raster::from_fn(grid, |x| c * extension_cutoff(geom, x.norm()));
        Self::new(
            geom,
            vec![KernelMode {
                profile: TrigPoly::constant(1.0 / TAU),
                weight: AngularField::isotropic(weight),
            }],
        )
    }

    /// Henyey-Greenstein phase function truncated at `n_modes` harmonics,
    /// `c psi(|x|) (1 + 2 sum_n g^n cos n(theta - theta')) / (2 pi)`.
    pub fn henyey_greenstein(
        grid: Grid,
        geom: &DiskGeometry,
        c: f64,
        g: f64,
        n_modes: u32,
    ) -> Result<Self> {
        if g.is_nan() || g.abs() >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "anisotropy g must satisfy |g| < 1, got {g}"
            )));
        }
        let base = Raster::from_fn(grid, |x| c * extension_cutoff(geom, x.norm()));
        let mut modes = vec![KernelMode {
            profile: TrigPoly::constant(1.0 / TAU),
            weight: AngularField::isotropic(base.clone()),
        }];
        for n in 1..=n_modes {
            let amp = g.powi(n as i32) / PI;
            for (h_out, h_in) in [
                (Harmonic::Cos(n), Harmonic::Cos(n)),
                (Harmonic::Sin(n), Harmonic::Sin(n)),
            ] {
                modes.push(KernelMode {
                    profile: TrigPoly::single(h_out, 1.0),
                    weight: AngularField::new(grid, vec![(h_in, base.clone().scale(amp))])?,
                });
            }
        }
        Ok(Self::new(geom, modes))
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ScatteringKernel {
            modes: self
                .modes
                .iter()
                .map(|m| KernelMode {
                    profile: m.profile.clone(),
                    weight: m.weight.scaled(factor),
                })
                .collect(),
            radius_outer: self.radius_outer,
        }
    }

    pub fn eval(&self, x: Vec2, theta: f64, theta_prime: f64) -> f64 {
        if x.norm_sq() > self.radius_outer * self.radius_outer * (1.0 + 1e-12) {
            return 0.0;
        }
        self.modes
            .iter()
            .map(|m| m.profile.eval(theta) * m.weight.eval(x, theta_prime))
            .sum()
    }

    /// `sum_j ||profile_j||_{H^1} ||weight_j||_{L^inf}`, with the sup sampled
    /// at pixel centers and 64 directions.
    pub fn convergence_sum(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.profile.h1_norm() * m.weight.sampled_sup(64))
            .sum()
    }

    /// Per-term products `||profile_j||_{H^1} * H_l(weight_j)`.
    pub fn mode_norms(&self, order: u32) -> Result<Vec<f64>> {
        self.modes
            .iter()
            .map(|m| Ok(m.profile.h1_norm() * m.weight.mode_norms(order)?.aggregate))
            .collect()
    }
}

/// Largest Sobolev order accepted on a grid.
pub fn max_sobolev_order(grid: Grid) -> u32 {
    (grid.nx.min(grid.ny) / 4) as u32
}

/// Per-mode and aggregate diagnostic norms of an angular field.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeNorms {
    pub order: u32,
    pub harmonics: Vec<Harmonic>,
    /// `||a_m||_{H^l}` per mode.
    pub coefficient_norms: Vec<f64>,
    /// `||Y_m||_{H^1}` per mode.
    pub angular_norms: Vec<f64>,
    /// `sum_m ||a_m||_{H^l} ||Y_m||_{H^1}`.
    pub aggregate: f64,
    /// `sum_m ||a_m||_{C^l} ||Y_m||_{H^1}` with spectral derivatives.
    pub aggregate_c: f64,
}

pub fn mode_norms(field: &AngularField, order: u32) -> Result<ModeNorms> {
    let grid = field.grid();
    let max = max_sobolev_order(grid);
    if order > max {
        return Err(Error::InvalidArgument(format!(
            "Sobolev order {order} exceeds the resolvable order {max} of a {}x{} grid",
            grid.nx, grid.ny
        )));
    }
    let mut out = ModeNorms {
        order,
        harmonics: Vec::new(),
        coefficient_norms: Vec::new(),
        angular_norms: Vec::new(),
        aggregate: 0.0,
        aggregate_c: 0.0,
    };
    for (h, a) in &field.modes {
        let hl = spectral::sobolev_norm(a, order);
        let cl = c_norm(a, order);
        let y = h.h1_norm();
        out.harmonics.push(*h);
        out.coefficient_norms.push(hl);
        out.angular_norms.push(y);
        out.aggregate += hl * y;
        out.aggregate_c += cl * y;
    }
    Ok(out)
}

/// `max_{|alpha| <= l} sup |D^alpha a|` over pixel centers.
fn c_norm(a: &Raster, order: u32) -> f64 {
    let mut best = a.max_abs();
    for total in 1..=order {
        for dx in 0..=total {
            best = best.max(spectral::spectral_derivative(a, dx, total - dx).max_abs());
        }
    }
    best
}

/// `E(x, theta) = exp(-int_0^{tau_+} sigma(x + s theta, theta) ds)` by
/// composite trapezoid with step at most `h_ray`.
pub fn attenuation_e(
    sigma: &AbsorptionField,
    geom: &DiskGeometry,
    x: Vec2,
    theta: f64,
    h_ray: f64,
) -> f64 {
    let dir = Vec2::from_angle(theta);
    let tau = geom.exit_time(x, dir);
    (-trapezoid(|s| sigma.eval(x + dir * s, theta), 0.0, tau, h_ray)).exp()
}

/// `Sigma(x, s, theta') = exp(-int_{-s}^0 sigma(x + t theta', theta') dt)`,
/// the attenuation accumulated from `x - s theta'` to `x`.
pub fn attenuation_partial(
    sigma: &AbsorptionField,
    x: Vec2,
    s: f64,
    theta_prime: f64,
    h_ray: f64,
) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "path length must be nonnegative, got {s}"
        )));
    }
    let dir = Vec2::from_angle(theta_prime);
    Ok((-trapezoid(|t| sigma.eval(x + dir * t, theta_prime), -s, 0.0, h_ray)).exp())
}

/// Composite trapezoid on `[a, b]` with `ceil((b - a) / h)` panels.
pub(crate) fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let len = b - a;
    if len <= 0.0 {
        return 0.0;
    }
    let n = (len / h).ceil().max(1.0) as usize;
    let step = len / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for k in 1..n {
        acc += f(a + k as f64 * step);
    }
    acc * step
}
