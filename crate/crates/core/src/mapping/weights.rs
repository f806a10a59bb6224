use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LayerRole, MappedLayer, MappedModel, MappedOperator, Slot};
use crate::design_space::ceil_log2;
use crate::{Error, Result};

/// Integer parameters of one mapped layer. Runtime-programmed layers carry no matrix,
/// only the requantization shift applied to their output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `in_dim x out_dim`, empty for runtime-programmed layers.
    pub matrix: Vec<Vec<i64>>,
    /// Right shift taking the accumulator back to activation range.
    pub shift: u32,
}

/// Quantized weights for every operator of a mapped model, keyed by operator id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedWeights {
    pub layers: BTreeMap<String, Vec<LayerParams>>,
}

/// `(w_bits - 1) + ceil(ceil_log2(fan_in) / 2)`: removes the weight scale and the
/// typical growth of a random-sign sum over `fan_in` terms.
pub fn default_shift(w_bits: u8, fan_in: usize) -> u32 {
    u32::from(w_bits) - 1 + ceil_log2(fan_in).div_ceil(2)
}

fn layer_shift(op: &MappedOperator, layer: &MappedLayer) -> u32 {
    if op.slot == Slot::Final {
        return 0;
    }
    match (op.kind, layer.role) {
        // products of two activations summed over dim_s
        (_, LayerRole::Interaction) if layer.engine == super::Engine::Dp => default_shift(layer.w_bits, layer.in_dim),
        // s^2 - sum x^2 grows with the square of the vector count
        (_, LayerRole::Interaction) => default_shift(layer.w_bits, layer.out_dim * layer.out_dim),
        _ => default_shift(layer.w_bits, layer.in_dim),
    }
}

impl QuantizedWeights {
    /// Uniform weights in `[-(2^(w-1) - 1), 2^(w-1) - 1]` with default shifts.
    pub fn random(mm: &MappedModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = BTreeMap::new();
        for op in mm.operators() {
            let params = op
                .layers
                .iter()
                .map(|l| {
                    let matrix = if l.runtime_programmed {
                        Vec::new()
                    } else {
                        let lim = (1i64 << (l.w_bits - 1)) - 1;
                        (0..l.in_dim).map(|_| (0..l.out_dim).map(|_| rng.random_range(-lim..=lim)).collect()).collect()
                    };
                    LayerParams { matrix, shift: layer_shift(op, l) }
                })
                .collect();
            layers.insert(op.id(), params);
        }
        Self { layers }
    }

    pub fn get(&self, op: &MappedOperator) -> Result<&[LayerParams]> {
        let id = op.id();
        let params = self.layers.get(&id).ok_or_else(|| Error::ShapeMismatch(format!("no weights for {id}")))?;
        if params.len() != op.layers.len() {
            return Err(Error::ShapeMismatch(format!("{id}: {} layer params for {} layers", params.len(), op.layers.len())));
        }
        for (p, l) in params.iter().zip(&op.layers) {
            if l.runtime_programmed {
                continue;
            }
            if p.matrix.len() != l.in_dim || p.matrix.iter().any(|r| r.len() != l.out_dim) {
                return Err(Error::ShapeMismatch(format!("{id}: weights do not match {}x{}", l.in_dim, l.out_dim)));
            }
        }
        Ok(params)
    }
}
