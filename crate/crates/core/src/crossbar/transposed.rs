use super::{input_slices, ConverterSpec, CrossbarSpec, Orientation, ProgrammedCrossbar, SaturationLog};
use crate::{Error, Result};

/// Runtime vectors written column-wise into one transposed-write crossbar.
///
/// Vector `j` occupies the column group `j * planes * 2 .. (j + 1) * planes * 2`
/// (bit planes of its positive and negative parts, same interleave as
/// [`super::TileMeta`]); element `i` sits on row `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransposedArray {
    pub xbar: ProgrammedCrossbar,
    pub vectors: usize,
    pub len: usize,
    pub value_bits: u8,
    pub planes: usize,
    magnitudes: Vec<Vec<u64>>,
}

pub fn transposed_program(vectors: &[Vec<i64>], spec: CrossbarSpec, value_bits: u8) -> Result<TransposedArray> {
    let len = vectors.first().map_or(0, Vec::len);
    if vectors.is_empty() || len == 0 || vectors.iter().any(|v| v.len() != len) {
        return Err(Error::ShapeMismatch("vectors must be nonempty and of equal length".into()));
    }
    if !(2..=16).contains(&value_bits) {
        return Err(Error::InvalidConfig(format!("value_bits {value_bits} outside 2..=16")));
    }
    let limit = 1i64 << (value_bits - 1);
    if let Some(&value) = vectors.iter().flatten().find(|v| v.abs() >= limit) {
        return Err(Error::OutOfRange { value, bits: value_bits });
    }
    let cell = usize::from(spec.cell_bits);
    let planes = usize::from(value_bits).div_ceil(cell);
    if len > spec.rows {
        return Err(Error::CapacityExceeded(format!("vector length {len} > {} rows", spec.rows)));
    }
    if vectors.len() * planes * 2 > spec.cols {
        return Err(Error::CapacityExceeded(format!(
            "{} vectors x {planes} planes x 2 > {} columns",
            vectors.len(),
            spec.cols
        )));
    }

    let mut xbar = ProgrammedCrossbar::blank(spec, Orientation::TransposedWrite);
    let mask = i64::from(spec.max_cell());
    for (j, v) in vectors.iter().enumerate() {
        for (i, &x) in v.iter().enumerate() {
            let mag = x.abs();
            for p in 0..planes {
                let digit = ((mag >> (p * cell)) & mask) as u8;
                xbar.set(i, (j * planes + p) * 2 + usize::from(x < 0), digit);
            }
        }
    }
    let magnitudes = (0..len).map(|i| vectors.iter().map(|v| v[i].unsigned_abs()).collect()).collect();
    Ok(TransposedArray { xbar, vectors: vectors.len(), len, value_bits, planes, magnitudes })
}

impl TransposedArray {
    fn group_cols(&self, plane: usize, negative: bool) -> impl Iterator<Item = usize> + '_ {
        (0..self.vectors).map(move |j| (j * self.planes + plane) * 2 + usize::from(negative))
    }

    /// Drives the columns of every vector with ones and returns per-row sums, i.e. the
    /// elementwise sum of the stored vectors. One read per (plane, polarity) group.
    pub fn read_ones(&self, conv: &ConverterSpec) -> (Vec<i64>, SaturationLog) {
        let mut out = vec![0i64; self.len];
        let mut log = SaturationLog::default();
        let cell = usize::from(self.xbar.spec.cell_bits);
        for p in 0..self.planes {
            for negative in [false, true] {
                let mut digits = vec![0u8; self.xbar.spec.cols];
                for c in self.group_cols(p, negative) {
                    digits[c] = 1;
                }
                let sums = self.xbar.row_sums(&digits);
                for (i, &analog) in sums.iter().enumerate().take(self.len) {
                    let q = log.convert(analog, conv.adc_bits) as i64;
                    let v = q << (p * cell);
                    out[i] += if negative { -v } else { v };
                }
            }
        }
        (out, log)
    }

    /// Drives every cell with the DAC slices of the magnitude it stores, so row `i`
    /// accumulates `sum_j v_j[i]^2`.
    pub fn read_self_products(&self, conv: &ConverterSpec) -> (Vec<i64>, SaturationLog) {
        let mut out = vec![0i64; self.len];
        let mut log = SaturationLog::default();
        let cell = usize::from(self.xbar.spec.cell_bits);
        let cols = self.xbar.spec.cols;
        for (i, acc) in out.iter_mut().enumerate() {
            // Magnitudes are nonnegative, so their slices all carry positive weight.
            let mags: Vec<i64> = self.magnitudes[i].iter().map(|&m| m as i64).collect();
            let slices = input_slices(&mags, self.value_bits, conv.dac_bits);
            for slice in &slices {
                for p in 0..self.planes {
                    let mut analog = 0u64;
                    for negative in [false, true] {
                        for (j, c) in self.group_cols(p, negative).enumerate() {
                            analog += u64::from(slice.digits[j]) * u64::from(self.xbar.cell(i, c));
                        }
                    }
                    let q = log.convert(analog, conv.adc_bits) as i64;
                    *acc += slice.weight * (q << (p * cell));
                }
            }
        }
        debug_assert!(cols >= self.vectors * self.planes * 2);
        (out, log)
    }
}
