//! Text and image formats for rasters and boundary data.
//!
//! Raster CSV: a header line `nx,ny,R1`, one line with those values, then
//! `ny` rows of `nx` comma-separated values, bottom row first, each printed
//! with 17 significant digits. Boundary CSV: one line per sample with
//! columns `boundary_angle,direction_angle,weight,value`. PGM: binary P5,
//! 8 bits, top row first, with the linear scale in a `.meta` sidecar.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::VisibilityMask;
use crate::raster::{Grid, Raster};
use crate::transport::BoundaryData;

pub fn write_raster_csv(mut w: impl Write, r: &Raster) -> Result<()> {
    let g = r.grid;
    writeln!(w, "nx,ny,R1")?;
    writeln!(w, "{},{},{}", g.nx, g.ny, g.half_width)?;
    for row in r.data.chunks(g.nx) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_raster_csv(r: impl BufRead) -> Result<Raster> {
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format(format!("raster csv ends before {what}")))?
            .map_err(Error::from)
    };
    if next("the header")?.trim() != "nx,ny,R1" {
        return Err(Error::Format("raster csv header must be `nx,ny,R1`".into()));
    }
    let dims = next("the dimensions")?;
    let parts: Vec<&str> = dims.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!("bad dimension line `{dims}`")));
    }
    let parse_usize = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("bad grid size `{s}`")))
    };
    let (nx, ny) = (parse_usize(parts[0])?, parse_usize(parts[1])?);
    let r1: f64 = parts[2]
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad radius `{}`", parts[2])))?;
    let grid = Grid::new(nx, ny, r1)?;
    let mut data = Vec::with_capacity(grid.len());
    for j in 0..ny {
        let line = next(&format!("row {j}"))?;
        let row: Vec<f64> = line
            .trim()
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad value `{s}` in row {j}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != nx {
            return Err(Error::Format(format!(
                "row {j} has {} values, expected {nx}",
                row.len()
            )));
        }
        data.extend(row);
    }
    Raster::from_data(grid, data)
}

pub fn write_boundary_csv(mut w: impl Write, b: &BoundaryData) -> Result<()> {
    writeln!(w, "boundary_angle,direction_angle,weight,value")?;
    for p in 0..b.n_bdry {
        for q in 0..b.n_theta {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                b.boundary_angle(p),
                b.direction_angle(q),
                b.measure_weight(p, q),
                b.get(p, q)
            )?;
        }
    }
    Ok(())
}

/// Linear scale of an 8-bit image: `value = min + level / 255 * (max - min)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

impl PgmScale {
    pub fn of(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            PgmScale { min: 0.0, max: 0.0 }
        } else {
            PgmScale { min, max }
        }
    }

    pub fn level(&self, v: f64) -> u8 {
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min) * 255.0)
                .round()
                .clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }
}

/// P5 image of `values` on `grid`, rows flipped so `+y` is up.
pub fn write_pgm(mut w: impl Write, grid: Grid, values: &[f64], scale: PgmScale) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "image has {} values, grid needs {}",
            values.len(),
            grid.len()
        )));
    }
    write!(w, "P5\n{} {}\n255\n", grid.nx, grid.ny)?;
    let mut buf = Vec::with_capacity(grid.len());
    for row in values.chunks(grid.nx).rev() {
        buf.extend(row.iter().map(|&v| scale.level(v)));
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_pgm_meta(mut w: impl Write, grid: Grid, scale: PgmScale) -> Result<()> {
    writeln!(w, "width = {}", grid.nx)?;
    writeln!(w, "height = {}", grid.ny)?;
    writeln!(w, "R1 = {}", grid.half_width)?;
    writeln!(w, "min = {:.16e}", scale.min)?;
    writeln!(w, "max = {:.16e}", scale.max)?;
    Ok(())
}

/// Mask as an image: 255 where set, 0 elsewhere.
pub fn write_mask_pgm(w: impl Write, mask: &VisibilityMask) -> Result<()> {
    let values: Vec<f64> = mask
        .visible
        .iter()
        .map(|&v| if v { 1.0 } else { 0.0 })
        .collect();
    write_pgm(w, mask.grid, &values, PgmScale { min: 0.0, max: 1.0 })
}

/// Parses a P5 image back into levels, bottom row first.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = || Error::Format("malformed PGM".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad());
    }
    let nx: usize = fields[1].parse().map_err(|_| bad())?;
    let ny: usize = fields[2].parse().map_err(|_| bad())?;
    let body = bytes.get(pos + 1..).ok_or_else(bad)?;
    if body.len() != nx * ny {
        return Err(bad());
    }
    let mut out = Vec::with_capacity(nx * ny);
    for row in body.chunks(nx).rev() {
        out.extend_from_slice(row);
    }
    Ok((nx, ny, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DiskGeometry;
    use crate::transport::Discretization;

    #[test]
    fn raster_csv_round_trip() {
        let g = Grid::new(3, 2, 1.5).unwrap();
        let r = Raster::from_data(g, vec![0.1, -2.0, 1.0 / 3.0, 1e-300, 5.0, f64::MAX]).unwrap();
        let mut buf = Vec::new();
        write_raster_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("nx,ny,R1\n3,2,1.5\n1.0000000000000001e-1,"));
        assert_eq!(read_raster_csv(&buf[..]).unwrap(), r);
        assert!(read_raster_csv(&b"nx,ny,R1\n3,2,1\n1,2\n"[..]).is_err());
        assert!(read_raster_csv(&b"x\n"[..]).is_err());
    }

    #[test]
    fn boundary_csv_layout() {
        let geom = DiskGeometry::new(0.5, 1.0).unwrap();
        let disc = Discretization::new(&geom, 8, 8, 8, 8).unwrap();
        let b = BoundaryData::zeros(&disc);
        let mut buf = Vec::new();
        write_boundary_csv(&mut buf, &b).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "boundary_angle,direction_angle,weight,value");
        assert_eq!(lines.len(), 1 + 64);
        assert_eq!(lines[1].split(',').count(), 4);
    }

    #[test]
    fn pgm_round_trip_and_scale() {
        let g = Grid::new(2, 2, 1.0).unwrap();
        let v = [0.0, 1.0, 2.0, 4.0];
        let s = PgmScale::of(&v);
        assert_eq!(s, PgmScale { min: 0.0, max: 4.0 });
        let mut buf = Vec::new();
        write_pgm(&mut buf, g, &v, s).unwrap();
        assert_eq!(&buf[..11], b"P5\n2 2\n255\n");
        // Top row (y > 0) comes first in the file.
        assert_eq!(&buf[11..], &[128, 255, 0, 64]);
        let (nx, ny, levels) = read_pgm(&buf).unwrap();
        assert_eq!((nx, ny), (2, 2));
        assert_eq!(levels, vec![0, 64, 128, 255]);
        assert_eq!(PgmScale { min: 1.0, max: 1.0 }.level(1.0), 0);
    }
}
