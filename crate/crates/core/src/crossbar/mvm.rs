use super::{ConverterSpec, ProgrammedMatrix, SaturationLog};
use crate::{Error, Result};

/// One analog read: unsigned DAC digits per word line and the signed place weight
/// applied to the digitized result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSlice {
    pub digits: Vec<u8>,
    pub weight: i64,
}

/// Splits signed `a_bits` inputs into `ceil(a_bits / dac_bits)` two's-complement slices,
/// least significant first.
///
/// The top slice is a signed digit. With a one-bit top slice it is read once with
/// negative place weight; with a wider top slice its positive and negative digits are
/// read separately so every driven digit stays unsigned. Slices whose digits are all
/// zero are omitted.
pub fn input_slices(x: &[i64], a_bits: u8, dac_bits: u8) -> Vec<InputSlice> {
    let a = u32::from(a_bits);
    let dac = u32::from(dac_bits);
    let n_slices = a.div_ceil(dac);
    let mask = (1i64 << dac) - 1;
    let mut out = Vec::with_capacity(n_slices as usize + 1);

    for t in 0..n_slices - 1 {
        let digits: Vec<u8> = x.iter().map(|&v| ((v >> (t * dac)) & mask) as u8).collect();
        push_nonzero(&mut out, digits, 1i64 << (t * dac));
    }

    let shift = (n_slices - 1) * dac;
    let top_width = a - shift;
    // Arithmetic shift keeps the sign: the top field as a signed top_width-bit digit.
    let signed_top: Vec<i64> = x.iter().map(|&v| v >> shift).collect();
    debug_assert!(signed_top
        .iter()
        .all(|&d| d >= -(1i64 << (top_width - 1)) && d < (1i64 << (top_width - 1)).max(1)));
    let place = 1i64 << shift;
    let pos: Vec<u8> = signed_top.iter().map(|&d| d.max(0) as u8).collect();
    let neg: Vec<u8> = signed_top.iter().map(|&d| (-d).max(0) as u8).collect();
    push_nonzero(&mut out, pos, place);
    push_nonzero(&mut out, neg, -place);
    out
}

fn push_nonzero(out: &mut Vec<InputSlice>, digits: Vec<u8>, weight: i64) {
    if digits.iter().any(|&d| d != 0) {
        out.push(InputSlice { digits, weight });
    }
}

/// Bit-serial matrix-vector product `y[o] = sum_r x[r] * W[r][o]` through the
/// simulated tiles. Equals the exact integer product whenever the returned log is clean.
pub fn mvm(
    pm: &ProgrammedMatrix,
    x: &[i64],
    a_bits: u8,
    conv: &ConverterSpec,
) -> Result<(Vec<i64>, SaturationLog)> {
    let m = &pm.meta;
    if x.len() != m.in_dim {
        return Err(Error::ShapeMismatch(format!("input length {} != rows {}", x.len(), m.in_dim)));
    }
    if !(1..=32).contains(&a_bits) {
        return Err(Error::InvalidConfig(format!("a_bits {a_bits} outside 1..=32")));
    }
    let limit = 1i64 << (a_bits - 1);
    if let Some(&value) = x.iter().find(|v| v.abs() >= limit) {
        return Err(Error::OutOfRange { value, bits: a_bits });
    }

    let s = m.xbar_size;
    let logical_cols = m.logical_cols();
    let cell = usize::from(m.cell_bits);
    let mut y = vec![0i64; m.out_dim];
    let mut log = SaturationLog::default();

    for slice in input_slices(x, a_bits, conv.dac_bits) {
        for rt in 0..m.row_tiles {
            let lo = rt * s;
            let hi = (lo + s).min(m.in_dim);
            let digits = &slice.digits[lo..hi];
            if digits.iter().all(|&d| d == 0) {
                continue;
            }
            for ct in 0..m.col_tiles {
                let sums = pm.tile(rt, ct).column_sums(digits);
                let first = ct * s;
                let active = (logical_cols - first).min(s);
                for (c, &analog) in sums.iter().enumerate().take(active) {
                    let q = log.convert(analog, conv.adc_bits) as i64;
                    if q == 0 {
                        continue;
                    }
                    let (o, p, negative) = m.decode_col(first + c);
                    let v = slice.weight * (q << (p * cell));
                    y[o] += if negative { -v } else { v };
                }
            }
        }
    }
    Ok((y, log))
}
