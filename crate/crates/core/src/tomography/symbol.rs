use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::coefficients::{attenuation_e, AbsorptionField};
use crate::error::{Error, Result};
use crate::geometry::{CutoffSpec, DiskGeometry, Vec2, VisibilityMask};
use crate::raster::Grid;

/// `b_0(x, xi) = 2 pi sum_{theta = +-xi^perp} E(x, theta)^2 chi#(x, theta)^2`
/// at a unit covector.
pub fn principal_symbol(
    spec: &CutoffSpec,
    sigma: &AbsorptionField,
    geom: &DiskGeometry,
    x: Vec2,
    xi: Vec2,
    h_ray: f64,
) -> Result<f64> {
    if (xi.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "covector ({}, {}) is not a unit vector",
            xi.x, xi.y
        )));
    }
    let t = xi.perp();
    let mut acc = 0.0;
    for theta in [t, -t] {
        let chi = spec.eval_extended(geom, x, theta);
        if chi > 0.0 {
            let e = attenuation_e(sigma, geom, x, theta.angle(), h_ray);
            acc += e * e * chi * chi;
        }
    }
    Ok(TAU * acc)
}

/// `b_0` over the pixels of `Omega` times `n_xi` uniform covectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolField {
    pub grid: Grid,
    pub n_xi: usize,
    /// `values[pixel * n_xi + i]`; zero outside `Omega`.
    pub values: Vec<f64>,
}

impl SymbolField {
    #[inline]
    pub fn get(&self, pixel: usize, i: usize) -> f64 {
        self.values[pixel * self.n_xi + i]
    }

    /// Pixels where the symbol is positive for every sampled covector.
    pub fn elliptic_mask(&self, geom: &DiskGeometry) -> VisibilityMask {
        let v = (0..self.grid.len())
            .map(|k| {
                geom.in_inner(self.grid.center_of(k))
                    && (0..self.n_xi).all(|i| self.get(k, i) > 0.0)
            })
            .collect();
        VisibilityMask::new(self.grid, v)
    }

    /// Minimum over the covectors at each pixel.
    pub fn min_over_covectors(&self) -> Vec<f64> {
        self.values
            .chunks(self.n_xi)
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }
}

pub fn symbol_field(
    spec: &CutoffSpec,
    sigma: &AbsorptionField,
    geom: &DiskGeometry,
    grid: Grid,
    n_xi: usize,
    h_ray: f64,
) -> Result<SymbolField> {
    if n_xi == 0 {
        return Err(Error::InvalidArgument("need at least one covector".into()));
    }
    let values = (0..grid.len())
        .into_par_iter()
        .flat_map_iter(|k| {
            let x = grid.center_of(k);
            let inside = geom.in_inner(x);
            (0..n_xi).map(move |i| {
                if inside {
                    let xi = Vec2::from_angle(TAU * i as f64 / n_xi as f64);
                    principal_symbol(spec, sigma, geom, x, xi, h_ray).unwrap_or(0.0)
                } else {
                    0.0
                }
            })
        })
        .collect();
    Ok(SymbolField { grid, n_xi, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{microvisible, Arc};
    use proptest::prelude::*;

    fn geom() -> DiskGeometry {
        DiskGeometry::new(0.8, 1.0).unwrap()
    }

    #[test]
    fn trivial_values() {
        let g = geom();
        let grid = g.grid(8, 8).unwrap();
        let zero = AbsorptionField::zero(grid, &g);
        let x = Vec2::new(0.1, -0.3);
        let xi = Vec2::from_angle(0.4);
        let b = principal_symbol(&CutoffSpec::full(), &zero, &g, x, xi, 0.01).unwrap();
        assert!((b - 2.0 * TAU).abs() < 1e-14);
        let b = principal_symbol(&CutoffSpec::empty(), &zero, &g, x, xi, 0.01).unwrap();
        assert_eq!(b, 0.0);
        assert!(
            principal_symbol(&CutoffSpec::full(), &zero, &g, x, Vec2::new(2.0, 0.0), 0.01).is_err()
        );
    }

    #[test]
    fn elliptic_mask_is_visible_mask() {
        let g = geom();
        let grid = g.grid(24, 24).unwrap();
        let s = AbsorptionField::constant(grid, &g, 0.3).unwrap();
        let spec = CutoffSpec::half_circle(0.0);
        let field = symbol_field(&spec, &s, &g, grid, 16, 1.0 / 64.0).unwrap();
        let vis = crate::geometry::visible_mask(&spec, &g, grid, 16).unwrap();
        assert_eq!(field.elliptic_mask(&g).visible, vis.visible);
    }

    proptest! {
        #[test]
        fn symbol_is_even_and_rotation_invariant(r in 0.0..0.79f64, a in 0.0..TAU, b in 0.0..TAU,
                                                 rot in 0.0..TAU) {
            let g = geom();
            let grid = g.grid(8, 8).unwrap();
            let c = AbsorptionField::constant(grid, &g, 0.5).unwrap();
            let spec = CutoffSpec::new(vec![Arc::new(0.3, 2.2)], 0.2).unwrap();
            let x = Vec2::from_angle(a) * r;
            let xi = Vec2::from_angle(b);
            let h = 1.0 / 128.0;
            let b0 = principal_symbol(&spec, &c, &g, x, xi, h).unwrap();
            prop_assert_eq!(b0, principal_symbol(&spec, &c, &g, x, -xi, h).unwrap());
            let rotated = CutoffSpec::new(vec![Arc::new(0.3 + rot, 2.2 + rot)], 0.2).unwrap();
            let b1 = principal_symbol(&rotated, &c, &g, Vec2::from_angle(a + rot) * r,
                                      Vec2::from_angle(b + rot), h).unwrap();
            prop_assert!((b0 - b1).abs() < 1e-9);
            // Deep in the roll-off chi^2 underflows while chi > 0.
            let in_band = [xi.perp(), -xi.perp()].iter().any(|&w| {
                let v = spec.eval_extended(&g, x, w);
                v > 0.0 && v < 1.0
            });
            if !in_band {
                prop_assert_eq!(b0 > 0.0, microvisible(&spec, &g, x, xi).unwrap());
            }
            prop_assert!((0.0..=2.0 * TAU + 1e-12).contains(&b0));
        }
    }
}
