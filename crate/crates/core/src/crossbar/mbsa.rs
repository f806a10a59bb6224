use crate::{Error, Result};

/// Elementwise squares via the bit-serial multiplier: the stored value is ANDed with
/// each input bit in turn and the partial products are shift-accumulated.
pub fn mbsa_square(v: &[u64], v_bits: u8) -> Result<Vec<u64>> {
    if !(1..=31).contains(&v_bits) {
        return Err(Error::InvalidConfig(format!("v_bits {v_bits} outside 1..=31")));
    }
    if let Some(&big) = v.iter().find(|&&x| x >> v_bits != 0) {
        return Err(Error::OutOfRange { value: big as i64, bits: v_bits });
    }
    Ok(v.iter()
        .map(|&stored| {
            (0..v_bits).fold(0u64, |acc, b| {
                let bit = (stored >> b) & 1;
                let partial = stored & bit.wrapping_neg();
                acc + (partial << b)
            })
        })
        .collect())
}
