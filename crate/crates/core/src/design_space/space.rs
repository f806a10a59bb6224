use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::{OperatorKind, ReRAMConfig};
use crate::{Error, Result};

/// Human-readable statement of how [`cardinality`] counts connections.
pub const CONNECTION_CONVENTION: &str = "operator-wise: every selected operator of block i reads a \
nonempty subset of {stem, block 1, ..., block i-1}; multiple sources are concatenated on the \
feature axis; each branch selects a nonempty set of distinct operator kinds, each with one weight \
width; the final FC weight width is searched; only ReRAM combinations with \
adc_bits >= dac_bits + cell_bits are counted";

/// Menus of the searchable space. The default mirrors the published design space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDescriptor {
    pub num_blocks: usize,
    pub dense_ops: Vec<OperatorKind>,
    pub sparse_ops: Vec<OperatorKind>,
    pub dim_d: Vec<usize>,
    pub dim_s: Vec<usize>,
    pub weight_bits: Vec<u8>,
    pub dac_bits: Vec<u8>,
    pub cell_bits: Vec<u8>,
    pub xbar_size: Vec<usize>,
    pub adc_bits: Vec<u8>,
    pub num_sparse_features: usize,
    pub embedding_dim: usize,
    pub dense_in_dim: usize,
    pub embedding_rows: usize,
}

impl Default for SpaceDescriptor {
    fn default() -> Self {
        Self {
            num_blocks: 7,
            dense_ops: vec![OperatorKind::Fc, OperatorKind::Dp, OperatorKind::Fm],
            sparse_ops: vec![OperatorKind::Efc, OperatorKind::Dsi],
            dim_d: vec![16, 32, 64, 128, 256, 512, 768, 1024],
            dim_s: vec![16, 32, 48, 64],
            weight_bits: vec![4, 8],
            dac_bits: vec![1, 2],
            cell_bits: vec![1, 2],
            xbar_size: vec![16, 32, 64],
            adc_bits: vec![4, 6, 8],
            num_sparse_features: 26,
            embedding_dim: 16,
            dense_in_dim: 13,
            embedding_rows: 1000,
        }
    }
}

impl SpaceDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: SpaceDescriptor = serde_json::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    /// Structural sanity of the menus themselves.
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_blocks == 0 {
            return bad("num_blocks must be >= 1");
        }
        if self.dense_ops.is_empty() || self.sparse_ops.is_empty() {
            return bad("both branch menus must be nonempty");
        }
        if self.dense_ops.iter().any(|k| !k.is_dense_output()) {
            return bad("dense menu may only hold FC, DP, FM");
        }
        if self.sparse_ops.iter().any(|k| k.is_dense_output()) {
            return bad("sparse menu may only hold EFC, DSI");
        }
        if has_duplicates(&self.dense_ops) || has_duplicates(&self.sparse_ops) {
            return bad("operator menus must not repeat kinds");
        }
        for (name, empty) in [
            ("dim_d", self.dim_d.is_empty()),
            ("dim_s", self.dim_s.is_empty()),
            ("weight_bits", self.weight_bits.is_empty()),
            ("dac_bits", self.dac_bits.is_empty()),
            ("cell_bits", self.cell_bits.is_empty()),
            ("xbar_size", self.xbar_size.is_empty()),
            ("adc_bits", self.adc_bits.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidConfig(format!("menu {name} is empty")));
            }
        }
        if self.weight_bits.iter().any(|b| ![4, 8].contains(b)) {
            return bad("weight_bits may only contain 4 and 8");
        }
        if self.dac_bits.iter().any(|b| ![1, 2].contains(b))
            || self.cell_bits.iter().any(|b| ![1, 2].contains(b))
        {
            return bad("dac_bits and cell_bits may only contain 1 and 2");
        }
        if self.adc_bits.iter().any(|b| ![4, 6, 8].contains(b)) {
            return bad("adc_bits may only contain 4, 6, 8");
        }
        if self.xbar_size.iter().any(|s| ![16, 32, 64].contains(s)) {
            return bad("xbar_size may only contain 16, 32, 64");
        }
        if self.dim_d.contains(&0) || self.dim_s.contains(&0) {
            return bad("dimensions must be positive");
        }
        if has_duplicates(&self.dim_d)
            || has_duplicates(&self.dim_s)
            || has_duplicates(&self.weight_bits)
            || has_duplicates(&self.dac_bits)
            || has_duplicates(&self.cell_bits)
            || has_duplicates(&self.xbar_size)
            || has_duplicates(&self.adc_bits)
        {
            return bad("menus must not repeat values");
        }
        if self.num_sparse_features < 2 {
            return bad("num_sparse_features must be >= 2");
        }
        if self.embedding_dim == 0 || self.dense_in_dim == 0 || self.embedding_rows == 0 {
            return bad("embedding_dim, dense_in_dim and embedding_rows must be positive");
        }
        if self.reram_combos().is_empty() {
            return bad("no feasible ReRAM combination");
        }
        Ok(())
    }

    /// Every feasible ReRAM configuration, in menu order.
    pub fn reram_combos(&self) -> Vec<ReRAMConfig> {
        let mut out = Vec::new();
        for &dac_bits in &self.dac_bits {
            for &cell_bits in &self.cell_bits {
                for &xbar_size in &self.xbar_size {
                    for &adc_bits in &self.adc_bits {
                        let r = ReRAMConfig { dac_bits, cell_bits, xbar_size, adc_bits };
                        if r.is_feasible() {
                            out.push(r);
                        }
                    }
                }
            }
        }
        out
    }
}

fn has_duplicates<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].contains(a))
}

/// Number of nonempty operator selections for one branch when each operator chooses
/// one of `per_op` (weight width, source set) pairs: prod(1 + per_op) - 1.
fn branch_choices(menu_len: usize, per_op: &BigUint) -> BigUint {
    let one = BigUint::from(1u32);
    let mut total = one.clone();
    for _ in 0..menu_len {
        total *= &one + per_op;
    }
    total - one
}

/// Exact number of valid design points under [`CONNECTION_CONVENTION`].
pub fn cardinality(space: &SpaceDescriptor) -> BigUint {
    let bits = BigUint::from(space.weight_bits.len());
    let dims = BigUint::from(space.dim_d.len() * space.dim_s.len());
    let mut total = BigUint::from(1u32);
    for i in 1..=space.num_blocks {
        // i candidate sources: the stem plus blocks 1..i-1.
        let source_sets = (BigUint::from(1u32) << i) - 1u32;
        let per_op = &bits * &source_sets;
        total *= branch_choices(space.dense_ops.len(), &per_op);
        total *= branch_choices(space.sparse_ops.len(), &per_op);
        total *= &dims;
    }
    total *= bits;
    total *= BigUint::from(space.reram_combos().len());
    total
}
