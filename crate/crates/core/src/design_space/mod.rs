//! Joint model / quantization / ReRAM design space.
//!
//! A [`DesignPoint`] is a stack of `N` choice blocks followed by a final FC layer,
//! plus one ReRAM configuration. Every block has a dense branch (FC, DP, FM) and a
//! sparse branch (EFC, DSI); each selected operator carries its weight width and the
//! set of sources it reads. Source `0` is the input stem, source `j >= 1` is the
//! output of block `j`.

mod mutate;
mod sample;
mod space;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::json;
use crate::{Error, Result};

pub use mutate::{atomic_distance, mutate, mutate_in, MutationAction, MUTATION_RETRIES};
pub use sample::{sample_in, sample_random};
pub use space::{cardinality, SpaceDescriptor, CONNECTION_CONVENTION};
pub use validate::{validate, validate_in, ValidationReport};

/// Index of the input stem in an operator's source set.
pub const STEM: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OperatorKind {
    Fc,
    Efc,
    Dp,
    Dsi,
    Fm,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 5] = [
        OperatorKind::Fc,
        OperatorKind::Efc,
        OperatorKind::Dp,
        OperatorKind::Dsi,
        OperatorKind::Fm,
    ];

    /// FC, DP and FM produce the dense output of a block.
    pub fn is_dense_output(self) -> bool {
        matches!(self, OperatorKind::Fc | OperatorKind::Dp | OperatorKind::Fm)
    }

    pub fn reads_dense(self) -> bool {
        matches!(self, OperatorKind::Fc | OperatorKind::Dp | OperatorKind::Dsi)
    }

    pub fn reads_sparse(self) -> bool {
        matches!(self, OperatorKind::Efc | OperatorKind::Dp | OperatorKind::Fm)
    }

    /// Dense-sparse interaction operators (DSI merges dense into sparse, FM sparse into dense).
    pub fn is_interaction(self) -> bool {
        matches!(self, OperatorKind::Dsi | OperatorKind::Fm)
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Fc => "FC",
            OperatorKind::Efc => "EFC",
            OperatorKind::Dp => "DP",
            OperatorKind::Dsi => "DSI",
            OperatorKind::Fm => "FM",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One selected operator inside a branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpChoice {
    pub kind: OperatorKind,
    pub weight_bits: u8,
    /// Sources read by this operator: `0` is the stem, `j` is block `j`.
    pub inputs: BTreeSet<usize>,
}

impl OpChoice {
    pub fn new(kind: OperatorKind, weight_bits: u8, inputs: impl IntoIterator<Item = usize>) -> Self {
        Self { kind, weight_bits, inputs: inputs.into_iter().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockConfig {
    /// 1-based position in the block stack.
    pub index: usize,
    pub dense_ops: Vec<OpChoice>,
    pub sparse_ops: Vec<OpChoice>,
    pub dim_d: usize,
    pub dim_s: usize,
}

impl BlockConfig {
    pub fn ops(&self) -> impl Iterator<Item = &OpChoice> {
        self.dense_ops.iter().chain(self.sparse_ops.iter())
    }

    /// Union of sources whose dense output feeds some operator of this block.
    pub fn dense_inputs(&self) -> BTreeSet<usize> {
        self.ops().filter(|o| o.kind.reads_dense()).flat_map(|o| o.inputs.iter().copied()).collect()
    }

    /// Union of sources whose sparse output feeds some operator of this block.
    pub fn sparse_inputs(&self) -> BTreeSet<usize> {
        self.ops().filter(|o| o.kind.reads_sparse()).flat_map(|o| o.inputs.iter().copied()).collect()
    }

    pub fn count_kind(&self, kind: OperatorKind) -> usize {
        self.ops().filter(|o| o.kind == kind).count()
    }

    /// Keeps each branch ordered by operator kind so equal blocks serialize identically.
    pub fn normalize(&mut self) {
        self.dense_ops.sort_by_key(|o| o.kind);
        self.sparse_ops.sort_by_key(|o| o.kind);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub blocks: Vec<BlockConfig>,
    pub final_fc_bits: u8,
    /// Number of input embedding tables (N_s).
    pub num_sparse_features: usize,
    pub embedding_dim: usize,
    /// Width of the dense input feature vector.
    pub dense_in_dim: usize,
    /// Rows per embedding table; sizes the memory tiles.
    pub embedding_rows: usize,
}

impl ModelConfig {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Width of the dense tensor produced by `source`.
    pub fn dense_width(&self, source: usize) -> usize {
        if source == STEM {
            self.dense_in_dim
        } else {
            self.blocks[source - 1].dim_d
        }
    }

    /// Embedding width of the sparse tensor produced by `source`.
    pub fn sparse_width(&self, source: usize) -> usize {
        if source == STEM {
            self.embedding_dim
        } else {
            self.blocks[source - 1].dim_s
        }
    }

    pub fn count_kind(&self, kind: OperatorKind) -> usize {
        self.blocks.iter().map(|b| b.count_kind(kind)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReRAMConfig {
    pub dac_bits: u8,
    /// Memristor precision.
    pub cell_bits: u8,
    /// Crossbars are square: `xbar_size x xbar_size`.
    pub xbar_size: usize,
    pub adc_bits: u8,
}

impl ReRAMConfig {
    /// A single cell product (one DAC digit times one cell value) fits in the ADC.
    pub fn is_feasible(&self) -> bool {
        self.adc_bits >= self.dac_bits + self.cell_bits
    }

    /// Accumulating a full column of `xbar_size` rows never saturates the ADC.
    pub fn is_lossless(&self) -> bool {
        u32::from(self.adc_bits)
            >= u32::from(self.dac_bits) + u32::from(self.cell_bits) + ceil_log2(self.xbar_size)
    }
}

#[derive(Serialize)]
struct CanonicalBody<'a> {
    model: &'a ModelConfig,
    reram: &'a ReRAMConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DesignPoint {
    pub model: ModelConfig,
    pub reram: ReRAMConfig,
    /// Hex SHA-256 of the canonical JSON of `{model, reram}`.
    pub point_id: String,
}

impl DesignPoint {
    pub fn new(mut model: ModelConfig, reram: ReRAMConfig) -> Self {
        for b in &mut model.blocks {
            b.normalize();
        }
        let point_id = compute_point_id(&model, &reram);
        Self { model, reram, point_id }
    }

    pub fn canonical_body(&self) -> String {
        canonical_body(&self.model, &self.reram)
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_canonical_string(self)
    }

    /// Parses a point and checks that the embedded id matches its content.
    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: DesignPoint = serde_json::from_str(text)?;
        let rebuilt = DesignPoint::new(parsed.model.clone(), parsed.reram);
        if !parsed.point_id.is_empty() && parsed.point_id != rebuilt.point_id {
            return Err(Error::InvalidPoint(format!(
                "point_id {} does not match content hash {}",
                parsed.point_id, rebuilt.point_id
            )));
        }
        Ok(rebuilt)
    }

    /// Block indices in a dependency-respecting order, or `None` on a cycle or
    /// dangling source.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.model.blocks.len();
        let mut indeg = vec![0usize; n + 1];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for b in &self.model.blocks {
            let srcs: BTreeSet<usize> = b.ops().flat_map(|o| o.inputs.iter().copied()).collect();
            for s in srcs {
                if s > n || s == b.index {
                    return None;
                }
                succ[s].push(b.index);
                indeg[b.index] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..=n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n + 1);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &w in &succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.push(w);
                }
            }
        }
        (order.len() == n + 1).then(|| order.into_iter().filter(|&v| v != STEM).collect())
    }
}

fn canonical_body(model: &ModelConfig, reram: &ReRAMConfig) -> String {
    json::to_canonical_string(&CanonicalBody { model, reram }).expect("design point is serializable")
}

fn compute_point_id(model: &ModelConfig, reram: &ReRAMConfig) -> String {
    json::sha256_hex(canonical_body(model, reram).as_bytes())
}

pub(crate) fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}
