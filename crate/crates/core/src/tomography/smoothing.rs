use crate::error::Result;
use crate::raster::Grid;
use crate::spectral::high_frequency_fraction;
use crate::transport::{BoundaryData, PhaseSpaceField, Transport};

fn ratio(high: f64, total: f64) -> f64 {
    if total > 0.0 {
        high / total
    } else {
        0.0
    }
}

/// Fraction of the spectral energy of all direction slices that lies above
/// half the Nyquist frequency; 0 for the zero field.
fn shell_fraction(u: &PhaseSpaceField) -> f64 {
    let (mut high, mut total) = (0.0, 0.0);
    for q in 0..u.n_theta {
        let (h, t) = high_frequency_fraction(u.grid, u.direction(q));
        high += h;
        total += t;
    }
    ratio(high, total)
}

/// Shell fraction of boundary data seen as a periodic `n_bdry x n_theta`
/// array.
pub fn boundary_shell_fraction(b: &BoundaryData) -> Result<f64> {
    let grid = Grid::new(b.n_theta, b.n_bdry, 1.0)?;
    let (high, total) = high_frequency_fraction(grid, &b.values);
    Ok(ratio(high, total))
}

/// High-frequency energy fractions of `f` and of `K T1^{-1} f`.
pub fn smoothing_diagnostic(transport: &Transport, f: &PhaseSpaceField) -> Result<(f64, f64)> {
    let after = transport.apply_k(&transport.apply_t1_inverse(f)?)?;
    Ok((shell_fraction(f), shell_fraction(&after)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{AbsorptionField, ScatteringKernel};
    use crate::geometry::DiskGeometry;
    use crate::transport::Discretization;

    #[test]
    fn zero_and_smooth_inputs() {
        let geom = DiskGeometry::new(0.8, 1.0).unwrap();
        let disc = Discretization::new(&geom, 32, 32, 16, 32).unwrap();
        let t = crate::transport::Transport::new(
            geom,
            disc,
            AbsorptionField::zero(disc.grid, &geom),
            ScatteringKernel::isotropic(disc.grid, &geom, 0.5),
        )
        .unwrap();
        let zero = PhaseSpaceField::zeros(disc.grid, 16);
        assert_eq!(smoothing_diagnostic(&t, &zero).unwrap(), (0.0, 0.0));
        let smooth = PhaseSpaceField::from_fn(disc.grid, 16, |x, _| (-x.norm_sq() * 10.0).exp());
        let (b, a) = smoothing_diagnostic(&t, &smooth).unwrap();
        assert!(b < 0.05 && a < 0.05, "{b} {a}");
    }
}
