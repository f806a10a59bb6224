use serde::{Deserialize, Serialize};

use super::{CrossbarSpec, Orientation, ProgrammedCrossbar};
use crate::{Error, Result};

/// How a signed matrix was laid out over physical tiles.
///
/// Logical column `(out * planes + plane) * 2 + polarity` (polarity 0 = positive
/// array, 1 = negative array) lives in column tile `logical / xbar_size`; input row
/// `r` lives in row tile `r / xbar_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileMeta {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w_bits: u8,
    pub cell_bits: u8,
    pub planes: usize,
    pub xbar_size: usize,
    pub row_tiles: usize,
    pub col_tiles: usize,
}

impl TileMeta {
    pub fn logical_cols(&self) -> usize {
        self.out_dim * self.planes * 2
    }

    pub fn logical_col(&self, out: usize, plane: usize, negative: bool) -> usize {
        (out * self.planes + plane) * 2 + usize::from(negative)
    }

    /// Inverse of [`TileMeta::logical_col`].
    pub fn decode_col(&self, logical: usize) -> (usize, usize, bool) {
        let negative = logical % 2 == 1;
        let rest = logical / 2;
        (rest / self.planes, rest % self.planes, negative)
    }
}

/// A signed integer matrix programmed over a grid of crossbar tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgrammedMatrix {
    pub meta: TileMeta,
    /// Row-major over `(row_tile, col_tile)`.
    pub tiles: Vec<ProgrammedCrossbar>,
}

impl ProgrammedMatrix {
    pub fn tile(&self, row_tile: usize, col_tile: usize) -> &ProgrammedCrossbar {
        &self.tiles[row_tile * self.meta.col_tiles + col_tile]
    }

    fn locate(&self, row: usize, logical: usize) -> (&ProgrammedCrossbar, usize, usize) {
        let s = self.meta.xbar_size;
        (self.tile(row / s, logical / s), row % s, logical % s)
    }

    /// Digits of one bit plane of one polarity, as an `in_dim x out_dim` matrix.
    pub fn plane(&self, negative: bool, plane: usize) -> Vec<Vec<u8>> {
        (0..self.meta.in_dim)
            .map(|r| {
                (0..self.meta.out_dim)
                    .map(|o| {
                        let (t, rr, cc) = self.locate(r, self.meta.logical_col(o, plane, negative));
                        t.cell(rr, cc)
                    })
                    .collect()
            })
            .collect()
    }

    /// Sum over planes of `2^(plane * cell_bits) * (positive - negative)`.
    pub fn reconstruct(&self) -> Vec<Vec<i64>> {
        let m = &self.meta;
        let mut w = vec![vec![0i64; m.out_dim]; m.in_dim];
        for p in 0..m.planes {
            let scale = 1i64 << (p * usize::from(m.cell_bits));
            let pos = self.plane(false, p);
            let neg = self.plane(true, p);
            for r in 0..m.in_dim {
                for o in 0..m.out_dim {
                    w[r][o] += scale * (i64::from(pos[r][o]) - i64::from(neg[r][o]));
                }
            }
        }
        w
    }
}

/// Programs `matrix` (`in_dim` rows feeding word lines, `out_dim` output columns) as
/// differential bit planes, least significant plane first.
pub fn program_signed(matrix: &[Vec<i64>], w_bits: u8, spec: CrossbarSpec) -> Result<ProgrammedMatrix> {
    let in_dim = matrix.len();
    let out_dim = matrix.first().map_or(0, Vec::len);
    if in_dim == 0 || out_dim == 0 || matrix.iter().any(|r| r.len() != out_dim) {
        return Err(Error::ShapeMismatch("matrix must be nonempty and rectangular".into()));
    }
    if !(2..=16).contains(&w_bits) {
        return Err(Error::InvalidConfig(format!("w_bits {w_bits} outside 2..=16")));
    }
    let limit = 1i64 << (w_bits - 1);
    if let Some(&value) = matrix.iter().flatten().find(|v| v.abs() >= limit) {
        return Err(Error::OutOfRange { value, bits: w_bits });
    }

    let cell_bits = usize::from(spec.cell_bits);
    let planes = usize::from(w_bits).div_ceil(cell_bits);
    let s = spec.rows;
    let meta = TileMeta {
        in_dim,
        out_dim,
        w_bits,
        cell_bits: spec.cell_bits,
        planes,
        xbar_size: s,
        row_tiles: in_dim.div_ceil(s),
        col_tiles: (out_dim * planes * 2).div_ceil(s),
    };
    let mut tiles = vec![ProgrammedCrossbar::blank(spec, Orientation::Normal); meta.row_tiles * meta.col_tiles];
    let mask = i64::from(spec.max_cell());

    for (r, row) in matrix.iter().enumerate() {
        for (o, &w) in row.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let negative = w < 0;
            let mag = w.abs();
            for p in 0..planes {
                let digit = ((mag >> (p * cell_bits)) & mask) as u8;
                if digit == 0 {
                    continue;
                }
                let l = meta.logical_col(o, p, negative);
                let tile = &mut tiles[(r / s) * meta.col_tiles + l / s];
                tile.set(r % s, l % s, digit);
            }
        }
    }
    Ok(ProgrammedMatrix { meta, tiles })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_in_two_bit_cells() {
        let spec = CrossbarSpec::new(16, 2).unwrap();
        let pm = program_signed(&[vec![3]], 4, spec).unwrap();
        assert_eq!(pm.meta.planes, 2);
        assert_eq!(pm.plane(false, 0), vec![vec![3]]);
        assert_eq!(pm.plane(false, 1), vec![vec![0]]);
        assert_eq!(pm.plane(true, 0), vec![vec![0]]);
        assert_eq!(pm.plane(true, 1), vec![vec![0]]);
    }

    #[test]
    fn negative_one_goes_to_negative_array() {
        let spec = CrossbarSpec::new(16, 1).unwrap();
        let pm = program_signed(&[vec![-1]], 4, spec).unwrap();
        assert_eq!(pm.plane(true, 0), vec![vec![1]]);
        for p in 0..pm.meta.planes {
            assert_eq!(pm.plane(false, p), vec![vec![0]]);
        }
        assert_eq!(pm.reconstruct(), vec![vec![-1]]);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let spec = CrossbarSpec::new(16, 1).unwrap();
        assert!(matches!(
            program_signed(&[vec![8]], 4, spec),
            Err(Error::OutOfRange { value: 8, bits: 4 })
        ));
        assert!(program_signed(&[vec![-7]], 4, spec).is_ok());
    }

    #[test]
    fn tiling_counts() {
        let spec = CrossbarSpec::new(16, 2).unwrap();
        let m = vec![vec![1i64; 16]; 16];
        let pm = program_signed(&m, 4, spec).unwrap();
        assert_eq!((pm.meta.row_tiles, pm.meta.col_tiles), (1, 4));
        let m = vec![vec![1i64; 3]; 40];
        let pm = program_signed(&m, 8, spec).unwrap();
        // 3 outputs * 4 planes * 2 = 24 logical columns
        assert_eq!((pm.meta.row_tiles, pm.meta.col_tiles), (3, 2));
        assert_eq!(pm.reconstruct(), m);
    }

    #[test]
    fn decode_inverts_logical_col() {
        let spec = CrossbarSpec::new(16, 1).unwrap();
        let pm = program_signed(&[vec![1, 2, 3]], 8, spec).unwrap();
        for l in 0..pm.meta.logical_cols() {
            let (o, p, n) = pm.meta.decode_col(l);
            assert_eq!(pm.meta.logical_col(o, p, n), l);
        }
    }
}
