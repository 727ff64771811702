use crate::error::{Error, Result};
use crate::geometry::{CutoffSpec, VisibilityMask};
use crate::transport::{SolveReport, Transport};

use super::matrix::OperatorMatrix;

/// Guard for the visible/invisible ratio.
pub const RATIO_FLOOR: f64 = 1e-14;

/// `W`: the visible mask restricted to `Omega`, eroded by two pixels.
pub fn visible_support(visible: &VisibilityMask, radius_inner: f64) -> VisibilityMask {
    visible.within_disk(radius_inner).eroded(2)
}

/// Pixels of `Omega` at distance more than two pixels from the visible set,
/// i.e. points with at least one direction whose perpendicular line exits
/// outside `V` at both ends, with a margin.
pub fn invisible_support(visible: &VisibilityMask, radius_inner: f64) -> VisibilityMask {
    // Pixels outside the disk count as set so that only the border with
    // the visible set is pulled back.
    let g = visible.grid;
    let padded = (0..g.len())
        .map(|k| !visible.visible[k] || g.center_of(k).norm() >= radius_inner)
        .collect();
    VisibilityMask::new(g, padded)
        .eroded(2)
        .within_disk(radius_inner)
}

#[derive(Clone, Debug)]
pub struct InjectivityReport {
    pub sigma_min_visible: f64,
    pub sigma_min_invisible: f64,
    /// `sigma_min_visible / max(sigma_min_invisible, RATIO_FLOOR)`.
    pub ratio: f64,
    pub visible_pixels: usize,
    pub invisible_pixels: usize,
    pub report: SolveReport,
}

/// Smallest weighted singular value of `X_V` restricted to the pixels of
/// `support`.
pub fn restricted_sigma_min(
    transport: &Transport,
    spec: &CutoffSpec,
    support: &VisibilityMask,
) -> Result<(f64, SolveReport)> {
    let cols = support.indices();
    if cols.is_empty() {
        return Err(Error::EmptySupport(
            "restricted support has no pixels".into(),
        ));
    }
    let tol = transport.settings().tol;
    let (m, report) = OperatorMatrix::assemble(transport, spec, &cols, tol)?;
    let sv = m.weighted_singular_values();
    Ok((sv.last().copied().unwrap_or(0.0), report))
}

/// Smallest singular values of `X_V` on the eroded visible set and on the
/// eroded invisible set.
pub fn svd_injectivity(
    transport: &Transport,
    spec: &CutoffSpec,
    visible: &VisibilityMask,
) -> Result<InjectivityReport> {
    let r = transport.geometry().radius_inner();
    transport.discretization().grid.ensure_same(&visible.grid)?;
    let w = visible_support(visible, r);
    let inv = invisible_support(visible, r);
    if w.count() == 0 {
        return Err(Error::EmptySupport("eroded visible set is empty".into()));
    }
    if inv.count() == 0 {
        return Err(Error::EmptySupport("eroded invisible set is empty".into()));
    }
    let (vis_min, mut report) = restricted_sigma_min(transport, spec, &w)?;
    let (inv_min, r2) = restricted_sigma_min(transport, spec, &inv)?;
    report.iterations = report.iterations.max(r2.iterations);
    report.converged &= r2.converged;
    Ok(InjectivityReport {
        sigma_min_visible: vis_min,
        sigma_min_invisible: inv_min,
        ratio: vis_min / inv_min.max(RATIO_FLOOR),
        visible_pixels: w.count(),
        invisible_pixels: inv.count(),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{AbsorptionField, ScatteringKernel};
    use crate::geometry::{visible_mask, DiskGeometry};
    use crate::transport::Discretization;

    fn plain(n: usize, n_theta: usize) -> Transport {
        let geom = DiskGeometry::new(0.8, 1.0).unwrap();
        let disc = Discretization::new(&geom, n, n, n_theta, 2 * n_theta).unwrap();
        Transport::new(
            geom,
            disc,
            AbsorptionField::zero(disc.grid, &geom),
            ScatteringKernel::none(&geom),
        )
        .unwrap()
    }

    #[test]
    fn supports_are_disjoint_and_separated() {
        let t = plain(24, 16);
        let vis = visible_mask(
            &CutoffSpec::half_circle(0.2),
            t.geometry(),
            t.discretization().grid,
            16,
        )
        .unwrap();
        let w = visible_support(&vis, 0.8);
        let inv = invisible_support(&vis, 0.8);
        assert!(w.count() > 0 && inv.count() > 0);
        assert!(w.indices().iter().all(|&k| !inv.visible[k]));
        let g = vis.grid;
        for k in inv.indices() {
            let (i, j) = g.coords(k);
            for (di, dj) in [
                (-1i64, 0i64),
                (1, 0),
                (0, 1),
                (0, -1),
                (2, 0),
                (0, 2),
                (-2, 0),
                (0, -2),
            ] {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii >= 0 && jj >= 0 && (ii as usize) < g.nx && (jj as usize) < g.ny {
                    assert!(!vis.visible[g.index(ii as usize, jj as usize)]);
                }
            }
        }
    }

    #[test]
    fn empty_spec_and_full_data() {
        let t = plain(12, 16);
        let grid = t.discretization().grid;
        let all = VisibilityMask::new(
            grid,
            (0..grid.len())
                .map(|k| grid.center_of(k).norm() < 0.8)
                .collect(),
        );
        let (s, _) = restricted_sigma_min(&t, &CutoffSpec::empty(), &all).unwrap();
        assert_eq!(s, 0.0);
        let (s, _) = restricted_sigma_min(&t, &CutoffSpec::full(), &all).unwrap();
        assert!(s > 0.0);
        let none = VisibilityMask::new(grid, vec![false; grid.len()]);
        assert!(matches!(
            restricted_sigma_min(&t, &CutoffSpec::full(), &none),
            Err(Error::EmptySupport(_))
        ));
        // Full data leaves nothing invisible.
        let vis = visible_mask(&CutoffSpec::full(), t.geometry(), grid, 16).unwrap();
        assert!(svd_injectivity(&t, &CutoffSpec::full(), &vis).is_err());
    }
}
