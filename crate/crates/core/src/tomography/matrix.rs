use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::CutoffSpec;
use crate::transport::{BoundaryData, SolveReport, Transport};

/// Flag bit: the operator includes scattering.
pub const FLAG_SCATTERING: u32 = 1;
/// Flag bit: the cutoff is not the complete-data cutoff.
pub const FLAG_PARTIAL: u32 = 2;

const MAGIC: &[u8; 6] = b"RTEOP1";

/// Dense operator with the weights of its domain and range inner products.
///
/// For the measurement map, rows are boundary samples (weights of
/// `d Sigma`) and columns are pixels (pixel area). The weighted adjoint is
/// `W_col^{-1} A^T W_row`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub rows: usize,
    pub cols: usize,
    pub flags: u32,
    /// Row-major entries.
    pub entries: Vec<f64>,
    pub row_weights: Vec<f64>,
    pub col_weights: Vec<f64>,
    /// Pixel index of each column; not part of the binary format.
    pub columns: Vec<usize>,
}

impl OperatorMatrix {
    /// Assembles `X_V` restricted to the given pixel columns, one batched
    /// forward solve per group of columns.
    pub fn assemble(
        transport: &Transport,
        spec: &CutoffSpec,
        columns: &[usize],
        tol: f64,
    ) -> Result<(OperatorMatrix, SolveReport)> {
        let (entries, report) = transport.assemble_measurement(spec, columns, tol)?;
        let disc = transport.discretization();
        let row_weights = BoundaryData::zeros(disc).measure_weights();
        let area = disc.grid.pixel_area();
        let mut flags = 0;
        if !transport.kernel().is_empty() {
            flags |= FLAG_SCATTERING;
        }
        if !spec.is_directionally_unrestricted() || spec.arcs.iter().all(|a| !a.is_full()) {
            flags |= FLAG_PARTIAL;
        }
        Ok((
            OperatorMatrix {
                rows: disc.n_rows(),
                cols: columns.len(),
                flags,
                entries,
                row_weights,
                col_weights: vec![area; columns.len()],
                columns: columns.to_vec(),
            },
            report,
        ))
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.entries
            .chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.entries.chunks(self.cols).zip(y) {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * yi;
                }
            }
        }
        out
    }

    /// `W_col^{-1} A^T W_row y`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let wy: Vec<f64> = y
            .iter()
            .zip(&self.row_weights)
            .map(|(a, w)| a * w)
            .collect();
        self.apply_transpose(&wy)
            .into_iter()
            .zip(&self.col_weights)
            .map(|(v, w)| v / w)
            .collect()
    }

    /// `A^* A x`, self-adjoint in the column-weighted inner product.
    pub fn apply_normal(&self, x: &[f64]) -> Vec<f64> {
        self.apply_adjoint(&self.apply(x))
    }

    /// Dense `W_col^{-1} A^T W_row A`.
    pub fn normal_matrix(&self) -> Vec<f64> {
        let n = self.cols;
        let mut g = vec![0.0; n * n];
        for (row, &w) in self.entries.chunks(n).zip(&self.row_weights) {
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let a = w * row[i];
                if a != 0.0 {
                    for j in 0..n {
                        g[i * n + j] += a * row[j];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] /= self.col_weights[i];
            }
        }
        g
    }

    /// Singular values of `W_row^{1/2} A W_col^{-1/2}` in decreasing order,
    /// i.e. of `A` between the weighted spaces. Zero-weight rows are dropped.
    pub fn weighted_singular_values(&self) -> Vec<f64> {
        let kept: Vec<usize> = (0..self.rows)
            .filter(|&r| self.row_weights[r] > 0.0)
            .collect();
        if kept.is_empty() || self.cols == 0 {
            return vec![0.0; self.cols];
        }
        let m = DMatrix::from_fn(kept.len(), self.cols, |i, j| {
            let r = kept[i];
            self.entries[r * self.cols + j] * self.row_weights[r].sqrt()
                / self.col_weights[j].sqrt()
        });
        let mut sv: Vec<f64> = m
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        // A wide matrix has at most `rows` singular values; the rest are zero.
        sv.resize(self.cols, 0.0);
        sv
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let dims = [self.rows, self.cols];
        w.write_all(MAGIC)?;
        for d in dims {
            let d = u32::try_from(d)
                .map_err(|_| Error::Format(format!("dimension {d} does not fit in 32 bits")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&self.flags.to_le_bytes())?;
        for v in self
            .entries
            .iter()
            .chain(&self.row_weights)
            .chain(&self.col_weights)
        {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(18 + 8 * (self.entries.len() + self.rows + self.cols));
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads the binary format; `columns` is filled with `0..cols`.
    pub fn read_from(mut r: impl Read) -> Result<OperatorMatrix> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated operator header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("bad operator magic".into()));
        }
        let mut word = [0u8; 4];
        let mut header = [0u32; 3];
        for h in header.iter_mut() {
            r.read_exact(&mut word)
                .map_err(|_| Error::Format("truncated operator header".into()))?;
            *h = u32::from_le_bytes(word);
        }
        let (rows, cols, flags) = (header[0] as usize, header[1] as usize, header[2]);
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)
                    .map_err(|_| Error::Format("truncated operator body".into()))?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let entries = read_vec(rows * cols)?;
        let row_weights = read_vec(rows)?;
        let col_weights = read_vec(cols)?;
        Ok(OperatorMatrix {
            rows,
            cols,
            flags,
            entries,
            row_weights,
            col_weights,
            columns: (0..cols).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> OperatorMatrix {
        OperatorMatrix {
            rows: 3,
            cols: 2,
            flags: FLAG_PARTIAL,
            entries: vec![1.0, 2.0, 0.5, -1.0, 3.0, 0.25],
            row_weights: vec![0.5, 2.0, 1.0],
            col_weights: vec![0.25, 0.25],
            columns: vec![0, 1],
        }
    }

    #[test]
    fn weighted_adjoint_identity() {
        let m = small();
        let x = [0.3, -1.2];
        let y = [1.0, 0.4, -2.0];
        let ax = m.apply(&x);
        let lhs: f64 = ax
            .iter()
            .zip(&y)
            .zip(&m.row_weights)
            .map(|((a, b), w)| a * b * w)
            .sum();
        let aty = m.apply_adjoint(&y);
        let rhs: f64 = x
            .iter()
            .zip(&aty)
            .zip(&m.col_weights)
            .map(|((a, b), w)| a * b * w)
            .sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn normal_matrix_matches_composition() {
        let m = small();
        let g = m.normal_matrix();
        let x = [0.7, 0.1];
        let direct = m.apply_normal(&x);
        for i in 0..2 {
            let v = g[i * 2] * x[0] + g[i * 2 + 1] * x[1];
            assert!((v - direct[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let m = small();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..6], b"RTEOP1");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(
            u32::from_le_bytes(bytes[14..18].try_into().unwrap()),
            FLAG_PARTIAL
        );
        assert_eq!(f64::from_le_bytes(bytes[18..26].try_into().unwrap()), 1.0);
        assert_eq!(bytes.len(), 18 + 8 * (6 + 3 + 2));
        let back = OperatorMatrix::read_from(&bytes[..]).unwrap();
        assert_eq!(back, m);
        assert!(OperatorMatrix::read_from(&bytes[..20]).is_err());
        assert!(OperatorMatrix::read_from(&b"RTEOP2xxxxxxxxxxxx"[..]).is_err());
    }

    #[test]
    fn singular_values_of_diagonal() {
        let m = OperatorMatrix {
            rows: 2,
            cols: 2,
            flags: 0,
            entries: vec![3.0, 0.0, 0.0, 0.5],
            row_weights: vec![4.0, 1.0],
            col_weights: vec![1.0, 0.25],
            columns: vec![0, 1],
        };
        let sv = m.weighted_singular_values();
        assert!((sv[0] - 6.0).abs() < 1e-12);
        assert!((sv[1] - 1.0).abs() < 1e-12);
    }
}
