//! FFT helpers for rasters: discrete Sobolev norms, spectral derivatives and
//! shell-energy fractions. Rasters are treated as periodic on the bounding
//! square, which is harmless because every field here vanishes near its edge.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::raster::{Grid, Raster};

/// Forward 2D DFT (unnormalized), row-major like [`Raster`].
pub fn fft2(grid: Grid, data: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform2(grid, &mut buf, false);
    buf
}

/// Inverse 2D DFT including the `1/N` normalization; returns real parts.
pub fn ifft2_real(grid: Grid, mut spectrum: Vec<Complex64>) -> Vec<f64> {
    transform2(grid, &mut spectrum, true);
    let n = grid.len() as f64;
    spectrum.into_iter().map(|c| c.re / n).collect()
}

fn transform2(grid: Grid, buf: &mut [Complex64], inverse: bool) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut planner = FftPlanner::<f64>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(nx), planner.plan_fft_inverse(ny))
    } else {
        (planner.plan_fft_forward(nx), planner.plan_fft_forward(ny))
    };
    for r in buf.chunks_mut(nx) {
        row.process(r);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); ny];
    for i in 0..nx {
        for j in 0..ny {
            column[j] = buf[j * nx + i];
        }
        col.process(&mut column);
        for j in 0..ny {
            buf[j * nx + i] = column[j];
        }
    }
}

/// Signed integer frequency of FFT bin `k` out of `n`.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Angular wavenumbers `(kx, ky)` of bin `(i, j)` for the square of side
/// `2 * half_width`.
#[inline]
pub fn wavenumber(grid: Grid, i: usize, j: usize) -> (f64, f64) {
    let scale = 2.0 * PI / (2.0 * grid.half_width);
    (
        scale * signed_frequency(i, grid.nx),
        scale * signed_frequency(j, grid.ny),
    )
}

/// `||a||_{H^l}` with multiplier `(1 + |k|^2)^l`; equals the area-weighted
/// `L^2` norm at `l = 0`.
pub fn sobolev_norm(raster: &Raster, order: u32) -> f64 {
    let g = raster.grid;
    let spec = fft2(g, &raster.data);
    let mut acc = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (kx, ky) = wavenumber(g, i, j);
            acc += (1.0 + kx * kx + ky * ky).powi(order as i32) * spec[j * g.nx + i].norm_sqr();
        }
    }
    (acc * g.pixel_area() / g.len() as f64).sqrt()
}

/// Spectral partial derivative `d^a/dx^a d^b/dy^b`.
pub fn spectral_derivative(raster: &Raster, a: u32, b: u32) -> Raster {
    let g = raster.grid;
    let mut spec = fft2(g, &raster.data);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (kx, ky) = wavenumber(g, i, j);
            // Nyquist bins of odd derivatives have no real counterpart.
            let nyq_x = g.nx.is_multiple_of(2) && i == g.nx / 2 && a % 2 == 1;
            let nyq_y = g.ny.is_multiple_of(2) && j == g.ny / 2 && b % 2 == 1;
            let m = if nyq_x || nyq_y {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, kx).powu(a) * Complex64::new(0.0, ky).powu(b)
            };
            spec[j * g.nx + i] *= m;
        }
    }
    Raster {
        grid: g,
        data: ifft2_real(g, spec),
    }
}

/// Fraction of spectral energy in the shell `|n| > nyquist / 2`, with `|n|`
/// measured in bins normalized so the Nyquist frequency is 1 on each axis.
/// Returns 0 for a zero raster.
pub fn high_frequency_fraction(grid: Grid, data: &[f64]) -> (f64, f64) {
    let spec = fft2(grid, data);
    let (mut high, mut total) = (0.0, 0.0);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let fx = signed_frequency(i, grid.nx) / (grid.nx as f64 / 2.0);
            let fy = signed_frequency(j, grid.ny) / (grid.ny as f64 / 2.0);
            let e = spec[j * grid.nx + i].norm_sqr();
            total += e;
            if fx.hypot(fy) > 0.5 {
                high += e;
            }
        }
    }
    (high, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let g = Grid::new(8, 6, 1.0).unwrap();
        let r = Raster::from_fn(g, |p| (p.x * 3.0).sin() + p.y);
        let back = ifft2_real(g, fft2(g, &r.data));
        for (a, b) in r.data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sobolev_zero_order_is_l2() {
        let g = Grid::new(16, 16, 1.0).unwrap();
        let r = Raster::from_fn(g, |p| (-(p.norm_sq()) * 8.0).exp());
        assert!((sobolev_norm(&r, 0) - r.l2_norm()).abs() < 1e-12);
        assert!(sobolev_norm(&r, 1) > sobolev_norm(&r, 0));
    }

    #[test]
    fn spectral_derivative_of_periodic_mode() {
        let g = Grid::new(32, 32, 1.0).unwrap();
        // sin(pi x) is periodic on [-1, 1].
        let r = Raster::from_fn(g, |p| (PI * p.x).sin());
        let d = spectral_derivative(&r, 1, 0);
        for k in 0..g.len() {
            let x = g.center_of(k).x;
            assert!((d.data[k] - PI * (PI * x).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn shell_fraction_of_constant_is_zero() {
        let g = Grid::new(16, 16, 1.0).unwrap();
        let (hi, tot) = high_frequency_fraction(g, &vec![1.0; g.len()]);
        assert_eq!(hi, 0.0);
        assert!(tot > 0.0);
    }
}
