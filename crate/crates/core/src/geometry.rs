//! Disk geometry, rays, the boundary cutoff and the visible sets.
//!
//! The inner domain and the measurement domain are concentric disks of
//! radii `R < R1`. Travel times to the outer circle have a closed form, and
//! the set of directions perpendicular to a covector is just the pair of
//! rotations by `±pi/2`.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at polar angle `angle`.
    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2::new(c, s)
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Rotation by `+pi/2`.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    #[inline]
    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm())
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

const UNIT_TOL: f64 = 1e-12;

/// Concentric source domain (radius `R`) and measurement domain (radius `R1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiskGeometry {
    radius_inner: f64,
    radius_outer: f64,
}

impl DiskGeometry {
    pub fn new(radius_inner: f64, radius_outer: f64) -> Result<Self> {
        if !(radius_inner > 0.0 && radius_inner < radius_outer && radius_outer.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < R < R1, got R = {radius_inner}, R1 = {radius_outer}"
            )));
        }
        Ok(DiskGeometry {
            radius_inner,
            radius_outer,
        })
    }

    #[inline]
    pub fn radius_inner(&self) -> f64 {
        self.radius_inner
    }

    #[inline]
    pub fn radius_outer(&self) -> f64 {
        self.radius_outer
    }

    /// Square raster that circumscribes the outer disk.
    pub fn grid(&self, nx: usize, ny: usize) -> Result<Grid> {
        Grid::new(nx, ny, self.radius_outer)
    }

    #[inline]
    pub fn in_inner(&self, x: Vec2) -> bool {
        x.norm() < self.radius_inner
    }

    /// Closed outer disk, with a relative slack for points computed on the
    /// boundary.
    #[inline]
    pub fn in_outer_closed(&self, x: Vec2) -> bool {
        x.norm_sq() <= self.radius_outer * self.radius_outer * (1.0 + 1e-12)
    }

    /// Outward unit normal at a boundary point.
    #[inline]
    pub fn normal(&self, z: Vec2) -> Vec2 {
        z.normalized()
    }

    /// Boundary point at polar angle `phi`.
    #[inline]
    pub fn boundary_point(&self, phi: f64) -> Vec2 {
        Vec2::from_angle(phi) * self.radius_outer
    }

    /// Forward travel time `tau_+(x, theta)` to the outer circle. Points on or
    /// slightly outside the circle are treated as if on it (result clamped at 0).
    #[inline]
    pub fn exit_time(&self, x: Vec2, theta: Vec2) -> f64 {
        let b = x.dot(theta);
        let c = x.norm_sq() - self.radius_outer * self.radius_outer;
        let disc = (b * b - c).max(0.0);
        let t = if b > 0.0 {
            -c / (b + disc.sqrt())
        } else {
            -b + disc.sqrt()
        };
        t.max(0.0)
    }

    /// Exit point and travel time along `theta` from an interior point.
    pub fn boundary_exit(&self, x: Vec2, theta: Vec2) -> Result<(Vec2, f64)> {
        check_unit(theta)?;
        if x.norm() >= self.radius_outer {
            return Err(Error::Domain(format!(
                "point ({}, {}) is not inside the outer disk of radius {}",
                x.x, x.y, self.radius_outer
            )));
        }
        let t = self.exit_time(x, theta);
        Ok((x + theta * t, t))
    }

    /// Full chord ending at the boundary point `z` with outgoing direction
    /// `theta`, parametrized backwards from `z`.
    pub fn chord(&self, z: Vec2, theta: Vec2) -> Result<Ray> {
        check_unit(theta)?;
        self.check_boundary(z)?;
        let cos_gamma = theta.dot(self.normal(z));
        if cos_gamma <= 0.0 {
            return Err(Error::Domain(format!(
                "direction is not outgoing at the boundary point (theta . nu = {cos_gamma})"
            )));
        }
        Ok(Ray {
            origin: z,
            direction: theta,
            t_minus: -2.0 * self.radius_outer * cos_gamma,
            t_plus: 0.0,
        })
    }

    /// Density `|theta . nu(z)|` of the boundary measure.
    pub fn boundary_weight(&self, z: Vec2, theta: Vec2) -> Result<f64> {
        self.check_boundary(z)?;
        Ok(theta.dot(self.normal(z)).abs())
    }

    fn check_boundary(&self, z: Vec2) -> Result<()> {
        if (z.norm() - self.radius_outer).abs() > 1e-9 * self.radius_outer {
            return Err(Error::Domain(format!(
                "point ({}, {}) is not on the circle of radius {}",
                z.x, z.y, self.radius_outer
            )));
        }
        Ok(())
    }
}

fn check_unit(theta: Vec2) -> Result<()> {
    if (theta.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidArgument(format!(
            "direction ({}, {}) is not a unit vector",
            theta.x, theta.y
        )));
    }
    Ok(())
}

/// Oriented segment `origin + t direction`, `t in [t_minus, t_plus]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec2,
    pub direction: Vec2,
    pub t_minus: f64,
    pub t_plus: f64,
}

impl Ray {
    #[inline]
    pub fn point_at(&self, t: f64) -> Vec2 {
        self.origin + self.direction * t
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.t_plus - self.t_minus
    }
}

/// C-infinity roll-off. `depth` is the distance inside the support measured
/// from its edge; the value is 1 once `depth >= width` and 0 for `depth <= 0`.
#[inline]
pub fn smooth_rolloff(depth: f64, width: f64) -> f64 {
    if depth <= 0.0 {
        0.0
    } else if depth >= width {
        1.0
    } else {
        let s = (width - depth) / width;
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// One component of the measured boundary set: boundary angles swept
/// counter-clockwise from `start` to `end`, optionally restricted to outgoing
/// directions within `cone` of the normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub end: f64,
    pub cone: Option<f64>,
}

impl Arc {
    pub fn new(start: f64, end: f64) -> Self {
        Arc {
            start,
            end,
            cone: None,
        }
    }

    pub fn with_cone(mut self, half_angle: f64) -> Self {
        self.cone = Some(half_angle);
        self
    }

    pub fn length(&self) -> f64 {
        let raw = self.end - self.start;
        if raw >= TAU {
            TAU
        } else {
            raw.rem_euclid(TAU)
        }
    }

    pub fn is_full(&self) -> bool {
        self.end - self.start >= TAU
    }

    pub fn midpoint(&self) -> f64 {
        self.start + 0.5 * self.length()
    }

    /// Angular depth of `phi` inside the arc (negative or zero outside).
    fn depth(&self, phi: f64) -> f64 {
        if self.is_full() {
            return f64::INFINITY;
        }
        let len = self.length();
        let d = (phi - self.start).rem_euclid(TAU);
        if d >= len {
            return 0.0;
        }
        d.min(len - d)
    }
}

/// Smooth cutoff `chi_V` on the outgoing boundary bundle.
///
/// `chi_V` is the maximum over arcs of a roll-off in boundary angle times a
/// roll-off in cone angle, each of width `transition_width`. A width of zero
/// gives the hard indicator of the open set `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffSpec {
    pub arcs: Vec<Arc>,
    pub transition_width: f64,
}

impl CutoffSpec {
    pub fn new(arcs: Vec<Arc>, transition_width: f64) -> Result<Self> {
        if !(transition_width >= 0.0 && transition_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "transition width must be finite and nonnegative, got {transition_width}"
            )));
        }
        for a in &arcs {
            if !(a.start.is_finite() && a.end.is_finite()) {
                return Err(Error::InvalidArgument(
                    "arc endpoints must be finite".into(),
                ));
            }
            if let Some(c) = a.cone {
                if !(c > 0.0 && c <= PI / 2.0) {
                    return Err(Error::InvalidArgument(format!(
                        "cone half-angle must lie in (0, pi/2], got {c}"
                    )));
                }
            }
        }
        Ok(CutoffSpec {
            arcs,
            transition_width,
        })
    }

    /// Complete data: `chi_V = 1` on the whole outgoing bundle.
    pub fn full() -> Self {
        CutoffSpec {
            arcs: vec![Arc::new(0.0, TAU)],
            transition_width: 0.0,
        }
    }

    pub fn empty() -> Self {
        CutoffSpec {
            arcs: Vec::new(),
            transition_width: 0.0,
        }
    }

    /// All outgoing directions over the right half circle `x1 > 0`.
    pub fn half_circle(transition_width: f64) -> Self {
        CutoffSpec {
            arcs: vec![Arc::new(-PI / 2.0, PI / 2.0)],
            transition_width,
        }
    }

    pub fn is_directionally_unrestricted(&self) -> bool {
        self.arcs.iter().all(|a| a.cone.is_none())
    }

    /// Same arcs with a hard cutoff.
    pub fn hard(&self) -> Self {
        CutoffSpec {
            arcs: self.arcs.clone(),
            transition_width: 0.0,
        }
    }

    /// `chi_V(z, theta)` at a boundary point.
    pub fn eval(&self, z: Vec2, theta: Vec2) -> f64 {
        let nu = z.normalized();
        let cos_gamma = theta.dot(nu);
        if cos_gamma <= 0.0 {
            return 0.0;
        }
        let phi = z.angle();
        let w = self.transition_width;
        let mut best = 0.0_f64;
        for arc in &self.arcs {
            let mut v = smooth_rolloff(arc.depth(phi), w);
            if v == 0.0 {
                continue;
            }
            if let Some(cone) = arc.cone {
                let gamma = cos_gamma.min(1.0).acos();
                v *= smooth_rolloff(cone - gamma, w);
            }
            best = best.max(v);
        }
        best
    }

    /// `chi_V^#(x, theta)`: the cutoff transported back along the ray from
    /// its exit point.
    pub fn eval_extended(&self, geom: &DiskGeometry, x: Vec2, theta: Vec2) -> f64 {
        let t = geom.exit_time(x, theta);
        self.eval(x + theta * t, theta)
    }
}

/// Boolean raster of pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityMask {
    pub grid: Grid,
    pub visible: Vec<bool>,
}

impl VisibilityMask {
    pub fn new(grid: Grid, visible: Vec<bool>) -> Self {
        assert_eq!(grid.len(), visible.len());
        VisibilityMask { grid, visible }
    }

    pub fn count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.visible.len())
            .filter(|&k| self.visible[k])
            .collect()
    }

    /// Keeps a pixel only if every pixel within `radius` pixel widths of it
    /// is inside the raster and set.
    pub fn eroded(&self, radius: usize) -> VisibilityMask {
        let g = self.grid;
        let r = radius as isize;
        let mut out = vec![false; g.len()];
        for j in 0..g.ny as isize {
            for i in 0..g.nx as isize {
                if !self.visible[g.index(i as usize, j as usize)] {
                    continue;
                }
                let mut keep = true;
                'scan: for dj in -r..=r {
                    for di in -r..=r {
                        if di * di + dj * dj > r * r {
                            continue;
                        }
                        let (ii, jj) = (i + di, j + dj);
                        if ii < 0
                            || jj < 0
                            || ii >= g.nx as isize
                            || jj >= g.ny as isize
                            || !self.visible[g.index(ii as usize, jj as usize)]
                        {
                            keep = false;
                            break 'scan;
                        }
                    }
                }
                out[g.index(i as usize, j as usize)] = keep;
            }
        }
        VisibilityMask::new(g, out)
    }

    /// Pixels set here but not in `other`.
    pub fn violations_against(&self, other: &VisibilityMask) -> Vec<usize> {
        (0..self.visible.len())
            .filter(|&k| self.visible[k] && !other.visible[k])
            .collect()
    }

    /// Restriction to pixels whose centers lie strictly inside the disk.
    pub fn within_disk(&self, radius: f64) -> VisibilityMask {
        let v = (0..self.grid.len())
            .map(|k| self.visible[k] && self.grid.center_of(k).norm() < radius)
            .collect();
        VisibilityMask::new(self.grid, v)
    }

    /// Pixels inside the disk that are not set.
    pub fn complement_within_disk(&self, radius: f64) -> VisibilityMask {
        let v = (0..self.grid.len())
            .map(|k| !self.visible[k] && self.grid.center_of(k).norm() < radius)
            .collect();
        VisibilityMask::new(self.grid, v)
    }
}

/// Does some line through `x` perpendicular to `xi` exit (outgoing) where
/// the cutoff is nonzero?
#[inline]
fn perpendicular_pair_seen(spec: &CutoffSpec, geom: &DiskGeometry, x: Vec2, xi: Vec2) -> bool {
    let t = xi.perp();
    spec.eval_extended(geom, x, t) > 0.0 || spec.eval_extended(geom, x, -t) > 0.0
}

/// Raster of the visible set: pixels of the inner disk such that for each of
/// `n_theta` uniform directions one of the two perpendicular rays exits in `V`.
pub fn visible_mask(
    spec: &CutoffSpec,
    geom: &DiskGeometry,
    grid: Grid,
    n_theta: usize,
) -> Result<VisibilityMask> {
    if n_theta < 8 {
        return Err(Error::InvalidArgument(format!(
            "visible_mask needs n_theta >= 8, got {n_theta}"
        )));
    }
    let dirs: Vec<Vec2> = (0..n_theta)
        .map(|q| Vec2::from_angle(TAU * q as f64 / n_theta as f64))
        .collect();
    let visible = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.center_of(k);
            geom.in_inner(x)
                && dirs
                    .iter()
                    .all(|&theta| perpendicular_pair_seen(spec, geom, x, theta))
        })
        .collect();
    Ok(VisibilityMask::new(grid, visible))
}

/// Membership of `(x, xi)` in the microlocally visible set.
pub fn microvisible(spec: &CutoffSpec, geom: &DiskGeometry, x: Vec2, xi: Vec2) -> Result<bool> {
    if !geom.in_inner(x) {
        return Err(Error::Domain(format!(
            "microvisible needs x inside the inner disk, got ({}, {})",
            x.x, x.y
        )));
    }
    check_unit(xi)?;
    Ok(perpendicular_pair_seen(spec, geom, x, xi))
}

/// Union of the interiors of the convex hulls of the arcs. The hull of a
/// circular arc is the circular segment cut off by its chord.
pub fn convex_hull_mask(
    spec: &CutoffSpec,
    geom: &DiskGeometry,
    grid: Grid,
) -> Result<VisibilityMask> {
    if !spec.is_directionally_unrestricted() {
        return Err(Error::Unsupported(
            "convex hull mask needs arcs without direction cones".into(),
        ));
    }
    let r1 = geom.radius_outer();
    let segments: Vec<(bool, Vec2, f64)> = spec
        .arcs
        .iter()
        .map(|a| {
            (
                a.is_full(),
                Vec2::from_angle(a.midpoint()),
                r1 * (0.5 * a.length()).cos(),
            )
        })
        .collect();
    let visible = (0..grid.len())
        .map(|k| {
            let x = grid.center_of(k);
            x.norm() < r1
                && segments
                    .iter()
                    .any(|&(full, m, offset)| full || x.dot(m) > offset)
        })
        .collect();
    Ok(VisibilityMask::new(grid, visible))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> DiskGeometry {
        DiskGeometry::new(0.8, 1.0).unwrap()
    }

    /// Bisection on `|x + t theta| = R1`.
    fn exit_by_bisection(r1: f64, x: Vec2, theta: Vec2) -> f64 {
        let (mut lo, mut hi) = (0.0, 4.0 * r1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (x + theta * mid).norm() < r1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn boundary_exit_examples() {
        let g = unit();
        let (p, t) = g
            .boundary_exit(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0))
            .unwrap();
        assert_eq!((p, t), (Vec2::new(1.0, 0.0), 1.0));
        let (p, t) = g
            .boundary_exit(Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0))
            .unwrap();
        assert!((p.x - 1.0).abs() < 1e-15 && (t - 0.5).abs() < 1e-15);

        let x = Vec2::new(0.0, 0.5);
        let theta = Vec2::new(1.0, 0.0);
        let (p, t) = g.boundary_exit(x, theta).unwrap();
        let oracle = exit_by_bisection(1.0, x, theta);
        assert!((t - oracle).abs() < 1e-12);
        assert!((t - 0.866_025_403_784_438_6).abs() < 1e-12);
        assert!((p.x - 0.866_025_403_784_438_6).abs() < 1e-12 && p.y == 0.5);
    }

    #[test]
    fn boundary_exit_rejects_outside_points() {
        let g = unit();
        assert!(matches!(
            g.boundary_exit(Vec2::new(1.2, 0.0), Vec2::new(1.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(g
            .boundary_exit(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0))
            .is_err());
    }

    #[test]
    fn chord_examples() {
        let g = unit();
        let ray = g.chord(Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!((ray.t_minus, ray.t_plus), (-2.0, 0.0));
        assert!(g.chord(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).is_err());
        assert!(g.chord(Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)).is_err());

        let s = 0.5_f64.sqrt();
        let ray = g.chord(Vec2::new(1.0, 0.0), Vec2::new(s, s)).unwrap();
        // 2 R cos(gamma) with gamma = 45 degrees
        let oracle = 2.0 * (PI / 4.0).cos();
        assert!((ray.t_minus + oracle).abs() < 1e-12);
        assert!((ray.t_minus + 2.0_f64.sqrt()).abs() < 1e-12);
        assert!((ray.point_at(ray.t_minus).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_weight_examples() {
        let g = unit();
        let z = Vec2::new(1.0, 0.0);
        assert_eq!(g.boundary_weight(z, Vec2::new(1.0, 0.0)).unwrap(), 1.0);
        assert_eq!(g.boundary_weight(z, Vec2::new(0.0, 1.0)).unwrap(), 0.0);
        let s = 0.5_f64.sqrt();
        assert!(
            (g.boundary_weight(z, Vec2::new(s, s)).unwrap() - std::f64::consts::FRAC_1_SQRT_2)
                .abs()
                < 1e-8
        );
        assert!(g
            .boundary_weight(Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0))
            .is_err());
    }

    #[test]
    fn cutoff_presets() {
        let g = unit();
        let full = CutoffSpec::full();
        let empty = CutoffSpec::empty();
        for k in 0..37 {
            let phi = 0.17 * k as f64;
            let z = g.boundary_point(phi);
            let nu = g.normal(z);
            for a in [-1.4, -0.7, 0.0, 0.3, 1.5] {
                let theta = Vec2::from_angle(phi + a);
                if theta.dot(nu) > 0.0 {
                    assert_eq!(full.eval(z, theta), 1.0);
                }
                assert_eq!(empty.eval(z, theta), 0.0);
            }
        }
        let half = CutoffSpec::half_circle(0.1);
        let z = g.boundary_point(0.0);
        assert_eq!(half.eval(z, g.normal(z)), 1.0);
        // Incoming directions are never measured.
        assert_eq!(half.eval(z, -g.normal(z)), 0.0);
        // Outside the arc.
        let z = g.boundary_point(PI);
        assert_eq!(half.eval(z, g.normal(z)), 0.0);
    }

    #[test]
    fn cutoff_rolloff_and_cones() {
        let g = unit();
        let spec = CutoffSpec::new(vec![Arc::new(0.0, 1.0).with_cone(0.5)], 0.1).unwrap();
        let z = g.boundary_point(0.5);
        let nu = g.normal(z);
        assert_eq!(spec.eval(z, nu), 1.0);
        // Inside the cone roll-off band, strictly between 0 and 1.
        let v = spec.eval(z, Vec2::from_angle(0.5 + 0.45));
        assert!(v > 0.0 && v < 1.0);
        assert_eq!(spec.eval(z, Vec2::from_angle(0.5 + 0.55)), 0.0);
        // Boundary roll-off band near the arc start.
        let v = spec.eval(g.boundary_point(0.05), g.normal(g.boundary_point(0.05)));
        assert!(v > 0.0 && v < 1.0);
        assert!(CutoffSpec::new(vec![Arc::new(0.0, 1.0).with_cone(2.0)], 0.1).is_err());
        assert!(CutoffSpec::new(vec![], -0.1).is_err());
    }

    #[test]
    fn arcs_wrap_around_zero() {
        let g = unit();
        let spec = CutoffSpec::new(vec![Arc::new(5.5, 7.0)], 0.0).unwrap();
        let z = g.boundary_point(0.2);
        assert_eq!(spec.eval(z, g.normal(z)), 1.0);
        let z = g.boundary_point(1.0);
        assert_eq!(spec.eval(z, g.normal(z)), 0.0);
    }

    #[test]
    fn visible_mask_presets() {
        let g = unit();
        let grid = g.grid(24, 24).unwrap();
        let full = visible_mask(&CutoffSpec::full(), &g, grid, 16).unwrap();
        let omega = grid.pixels_in_disk(g.radius_inner());
        assert_eq!(full.count(), omega.len());
        let empty = visible_mask(&CutoffSpec::empty(), &g, grid, 16).unwrap();
        assert_eq!(empty.count(), 0);
        assert!(visible_mask(&CutoffSpec::full(), &g, grid, 4).is_err());
    }

    #[test]
    fn half_circle_visible_contains_half_disk() {
        let g = unit();
        let grid = g.grid(32, 32).unwrap();
        let spec = CutoffSpec::half_circle(0.1);
        let vis = visible_mask(&spec, &g, grid, 64).unwrap();
        let hull = convex_hull_mask(&spec, &g, grid).unwrap();
        let inside = hull.within_disk(g.radius_inner());
        assert!(inside.violations_against(&vis).is_empty());
        // The hull of a half circle is the half disk.
        for k in 0..grid.len() {
            let x = grid.center_of(k);
            assert_eq!(hull.visible[k], x.norm() < 1.0 && x.x > 0.0);
        }
    }

    #[test]
    fn convex_hull_full_circle_and_cones() {
        let g = unit();
        let grid = g.grid(16, 16).unwrap();
        let hull = convex_hull_mask(&CutoffSpec::full(), &g, grid).unwrap();
        assert_eq!(hull.count(), grid.pixels_in_disk(1.0).len());
        let coned = CutoffSpec::new(vec![Arc::new(0.0, 1.0).with_cone(0.3)], 0.0).unwrap();
        assert!(matches!(
            convex_hull_mask(&coned, &g, grid),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn antipodal_quarter_arcs_hull_is_visible() {
        let g = unit();
        let grid = g.grid(32, 32).unwrap();
        let spec = CutoffSpec::new(
            vec![
                Arc::new(-PI / 4.0, PI / 4.0),
                Arc::new(3.0 * PI / 4.0, 5.0 * PI / 4.0),
            ],
            0.05,
        )
        .unwrap();
        let vis = visible_mask(&spec, &g, grid, 64).unwrap();
        let hull = convex_hull_mask(&spec, &g, grid)
            .unwrap()
            .within_disk(g.radius_inner());
        assert!(hull.count() > 0);
        assert!(hull.violations_against(&vis).is_empty());
    }

    #[test]
    fn microvisible_examples() {
        let g = unit();
        let x = Vec2::new(0.1, -0.2);
        let xi = Vec2::from_angle(0.4);
        assert!(microvisible(&CutoffSpec::full(), &g, x, xi).unwrap());
        assert!(!microvisible(&CutoffSpec::empty(), &g, x, xi).unwrap());

        let half = CutoffSpec::half_circle(0.1);
        let o = Vec2::new(0.0, 0.0);
        let direct = half.eval(Vec2::new(0.0, 1.0), Vec2::new(0.0, 1.0)) > 0.0
            || half.eval(Vec2::new(0.0, -1.0), Vec2::new(0.0, -1.0)) > 0.0;
        assert_eq!(
            microvisible(&half, &g, o, Vec2::new(1.0, 0.0)).unwrap(),
            direct
        );
        assert!(!direct);
        assert!(microvisible(&half, &g, Vec2::new(0.9, 0.0), xi).is_err());
    }

    #[test]
    fn erosion_shrinks_masks() {
        let grid = Grid::new(10, 10, 1.0).unwrap();
        let mask = VisibilityMask::new(grid, vec![true; 100]);
        assert_eq!(mask.eroded(0).count(), 100);
        assert_eq!(mask.eroded(1).count(), 64);
        assert_eq!(mask.eroded(2).count(), 36);
    }

    proptest! {
        #[test]
        fn chord_length_consistency(
            r in 0.0..0.95f64, a in 0.0..TAU, b in 0.0..TAU
        ) {
            let g = unit();
            let x = Vec2::from_angle(a) * r;
            let theta = Vec2::from_angle(b);
            let (p, tp) = g.boundary_exit(x, theta).unwrap();
            let (m, tm) = g.boundary_exit(x, -theta).unwrap();
            prop_assert!(p != m);
            prop_assert!(((p - m).norm() - (tp + tm)).abs() < 1e-10);
            prop_assert!((p.norm() - 1.0).abs() < 1e-10);
            prop_assert!(tp > 0.0);
        }

        #[test]
        fn cutoff_values_and_support(
            start in 0.0..TAU, len in 0.1..6.0f64, w in 0.0..0.3f64,
            phi in 0.0..TAU, dir in -PI..PI
        ) {
            let g = unit();
            let spec = CutoffSpec::new(vec![Arc::new(start, start + len)], w).unwrap();
            let z = g.boundary_point(phi);
            let theta = Vec2::from_angle(phi + dir);
            let v = spec.eval(z, theta);
            prop_assert!((0.0..=1.0).contains(&v));
            let cos_gamma = theta.dot(g.normal(z));
            let depth = (phi - start).rem_euclid(TAU);
            let depth = if depth < len { depth.min(len - depth) } else { 0.0 };
            if cos_gamma <= 0.0 || depth <= 0.0 {
                prop_assert_eq!(v, 0.0);
            } else if depth >= w {
                prop_assert_eq!(v, 1.0);
            }
        }

        #[test]
        fn extended_cutoff_constant_along_rays(
            r in 0.0..0.9f64, a in 0.0..TAU, b in 0.0..TAU, s in 0.0..1.0f64
        ) {
            let g = unit();
            let spec = CutoffSpec::new(vec![Arc::new(0.3, 2.9)], 0.2).unwrap();
            let x = Vec2::from_angle(a) * r;
            let theta = Vec2::from_angle(b);
            let s = s * g.exit_time(x, theta) * 0.999;
            let v0 = spec.eval_extended(&g, x, theta);
            let v1 = spec.eval_extended(&g, x + theta * s, theta);
            prop_assert!((v0 - v1).abs() < 1e-9);
        }

        #[test]
        fn microvisible_is_even(r in 0.0..0.75f64, a in 0.0..TAU, b in 0.0..TAU) {
            let g = unit();
            let spec = CutoffSpec::new(vec![Arc::new(1.0, 2.5)], 0.1).unwrap();
            let x = Vec2::from_angle(a) * r;
            let xi = Vec2::from_angle(b);
            prop_assert_eq!(
                microvisible(&spec, &g, x, xi).unwrap(),
                microvisible(&spec, &g, x, -xi).unwrap()
            );
        }

        #[test]
        fn enlarging_arcs_is_monotone(start in 0.0..TAU, len in 0.5..3.0f64, grow in 0.0..1.5f64) {
            let g = unit();
            let grid = g.grid(16, 16).unwrap();
            let small = CutoffSpec::new(vec![Arc::new(start, start + len)], 0.05).unwrap();
            let big = CutoffSpec::new(
                vec![Arc::new(start - grow, start + len + grow)], 0.05).unwrap();
            let vs = visible_mask(&small, &g, grid, 16).unwrap();
            let vb = visible_mask(&big, &g, grid, 16).unwrap();
            prop_assert!(vs.violations_against(&vb).is_empty());
        }
    }
}
