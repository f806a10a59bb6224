//! Operator-to-crossbar mapping and the functional forward pass.
//!
//! Every operator of a design point becomes a [`MappedOperator`] made of one or more
//! [`MappedLayer`]s. Static-weight layers run on the MVM engine; DP and FM add a
//! runtime-programmed engine layer whose operands are written during inference.

mod forward;
mod weights;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::design_space::{ceil_log2, DesignPoint, OpChoice, OperatorKind, ReRAMConfig, STEM};
use crate::{Error, Result, DEFAULT_ACTIVATION_BITS};

pub use forward::{
    dp_engine_forward, efc_forward, fm_engine_forward, functional_forward, requantize, ForwardOutput,
    ProgrammedModel,
};
pub use weights::{default_shift, LayerParams, QuantizedWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Engine {
    Mvm,
    Dp,
    Fm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    /// The operator's own weight matrix (FC, EFC, DSI).
    Main,
    /// DP: dense input projected to `dim_s`.
    DenseProjection,
    /// DP: sparse features reduced to `k_sparse`.
    SparseProjection,
    /// DP / FM runtime-programmed interaction engine.
    Interaction,
    /// DP / FM trailing FC to the block's dense width.
    OutputProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Dense,
    Sparse,
    Final,
}

/// One physical layer: a matrix (static or runtime-programmed) tiled over crossbars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedLayer {
    pub role: LayerRole,
    pub engine: Engine,
    /// Word-line side of the programmed matrix.
    pub in_dim: usize,
    /// Logical output columns (vectors, for runtime-programmed engines).
    pub out_dim: usize,
    pub w_bits: u8,
    pub planes: usize,
    pub row_tiles: usize,
    pub col_tiles: usize,
    /// Crossbar reads issued per inference (EFC issues one per embedding coordinate).
    pub invocations: usize,
    /// Vectors written at inference time; zero for static weights.
    pub programming_vectors: usize,
    pub runtime_programmed: bool,
    /// Input width of the MBSA squaring pass (FM only).
    pub mbsa_bits: u8,
}

impl MappedLayer {
    fn tiled(role: LayerRole, engine: Engine, in_dim: usize, out_dim: usize, w_bits: u8, reram: &ReRAMConfig) -> Self {
        let planes = usize::from(w_bits).div_ceil(usize::from(reram.cell_bits));
        Self {
            role,
            engine,
            in_dim,
            out_dim,
            w_bits,
            planes,
            row_tiles: in_dim.div_ceil(reram.xbar_size),
            col_tiles: (out_dim * planes * 2).div_ceil(reram.xbar_size),
            invocations: 1,
            programming_vectors: 0,
            runtime_programmed: false,
            mbsa_bits: 0,
        }
    }

    pub fn tiles(&self) -> usize {
        self.row_tiles * self.col_tiles
    }

    /// Columns in use on the fullest column tile.
    pub fn active_cols(&self, xbar_size: usize) -> usize {
        (self.out_dim * self.planes * 2).min(xbar_size)
    }

    /// Rows in use on the fullest row tile.
    pub fn active_rows(&self, xbar_size: usize) -> usize {
        self.in_dim.min(xbar_size)
    }

    /// Programmed weight values (static layers) or operand slots (runtime layers).
    pub fn weight_count(&self) -> usize {
        self.in_dim * self.out_dim
    }
}

/// Shape of a DP interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DPGeometry {
    pub k_sparse: usize,
    pub merged_rows: usize,
    pub pair_count: usize,
}

impl DPGeometry {
    /// `k_sparse = round(sqrt(2 * dim_d))`, halves rounded up, computed in integers.
    pub fn for_dim(dim_d: usize) -> Self {
        let two_d = 2 * dim_d;
        let mut k = two_d.isqrt();
        // round up when k + 1/2 <= sqrt(2d)  <=>  4k^2 + 4k + 1 <= 8d
        if 4 * k * k + 4 * k < 4 * two_d {
            k += 1;
        }
        let k = k.max(1);
        let merged_rows = k + 1;
        Self { k_sparse: k, merged_rows, pair_count: merged_rows * (merged_rows - 1) / 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedOperator {
    pub kind: OperatorKind,
    pub slot: Slot,
    /// Owning block, `0` for the final FC.
    pub block: usize,
    pub weight_bits: u8,
    pub inputs: Vec<usize>,
    /// Concatenated dense input width (0 when the operator reads no dense tensor).
    pub dense_in: usize,
    /// Stacked sparse feature rows (0 when the operator reads no sparse tensor).
    pub sparse_rows: usize,
    /// Embedding width of the sparse operands and outputs.
    pub dim_s: usize,
    /// Dense output width, or number of output sparse rows for sparse-branch operators.
    pub out_dim: usize,
    pub layers: Vec<MappedLayer>,
    pub dp: Option<DPGeometry>,
}

impl MappedOperator {
    pub fn id(&self) -> String {
        match self.slot {
            Slot::Final => "final.FC".to_string(),
            Slot::Dense => format!("b{}.dense.{}", self.block, self.kind),
            Slot::Sparse => format!("b{}.sparse.{}", self.block, self.kind),
        }
    }

    pub fn primary(&self) -> &MappedLayer {
        self.layers
            .iter()
            .find(|l| matches!(l.role, LayerRole::Main | LayerRole::Interaction))
            .unwrap_or(&self.layers[0])
    }

    pub fn engine(&self) -> Engine {
        self.primary().engine
    }

    pub fn row_tiles(&self) -> usize {
        self.primary().row_tiles
    }

    pub fn col_tiles(&self) -> usize {
        self.primary().col_tiles
    }

    pub fn planes(&self) -> usize {
        self.primary().planes
    }

    pub fn programming_vectors(&self) -> usize {
        self.layers.iter().map(|l| l.programming_vectors).sum()
    }

    pub fn tiles_on(&self, engine: Engine) -> usize {
        self.layers.iter().filter(|l| l.engine == engine).map(MappedLayer::tiles).sum()
    }

    pub fn layer(&self, role: LayerRole) -> Option<&MappedLayer> {
        self.layers.iter().find(|l| l.role == role)
    }

    pub fn is_dense_output(&self) -> bool {
        self.slot != Slot::Sparse
    }
}

fn single(kind: OperatorKind, layer: MappedLayer) -> MappedOperator {
    MappedOperator {
        kind,
        slot: if kind.is_dense_output() { Slot::Dense } else { Slot::Sparse },
        block: 0,
        weight_bits: layer.w_bits,
        inputs: Vec::new(),
        dense_in: 0,
        sparse_rows: 0,
        dim_s: 0,
        out_dim: layer.out_dim,
        layers: vec![layer],
        dp: None,
    }
}

pub fn map_fc(in_dim: usize, out_dim: usize, w_bits: u8, reram: &ReRAMConfig) -> MappedOperator {
    let mut op = single(
        OperatorKind::Fc,
        MappedLayer::tiled(LayerRole::Main, Engine::Mvm, in_dim, out_dim, w_bits, reram),
    );
    op.dense_in = in_dim;
    op
}

/// `Y_s = W_s X_s`: `n_in` sparse rows mixed into `n_out`, one crossbar read per
/// embedding coordinate. Outputs come out column-major, ready for transposed writes.
pub fn map_efc(n_in: usize, n_out: usize, dim_s: usize, w_bits: u8, reram: &ReRAMConfig) -> MappedOperator {
    let mut layer = MappedLayer::tiled(LayerRole::Main, Engine::Mvm, n_in, n_out, w_bits, reram);
    layer.invocations = dim_s;
    let mut op = single(OperatorKind::Efc, layer);
    op.sparse_rows = n_in;
    op.dim_s = dim_s;
    op
}

/// FC from the dense input to `n_s * dim_s`, reshaped into `n_s` sparse rows.
pub fn map_dsi(in_dim: usize, n_s: usize, dim_s: usize, w_bits: u8, reram: &ReRAMConfig) -> MappedOperator {
    let layer = MappedLayer::tiled(LayerRole::Main, Engine::Mvm, in_dim, n_s * dim_s, w_bits, reram);
    let mut op = single(OperatorKind::Dsi, layer);
    op.dense_in = in_dim;
    op.dim_s = dim_s;
    op.out_dim = n_s;
    op
}

/// FC (dense -> dim_s) + EFC (n_s -> k_sparse) + runtime DP engine + FC (pairs -> dim_d).
pub fn map_dp(
    dense_in: usize,
    dim_d: usize,
    dim_s: usize,
    n_s: usize,
    w_bits: u8,
    reram: &ReRAMConfig,
    a_bits: u8,
) -> MappedOperator {
    let geo = DPGeometry::for_dim(dim_d);
    let dense = MappedLayer::tiled(LayerRole::DenseProjection, Engine::Mvm, dense_in, dim_s, w_bits, reram);
    let mut sparse = MappedLayer::tiled(LayerRole::SparseProjection, Engine::Mvm, n_s, geo.k_sparse, w_bits, reram);
    sparse.invocations = dim_s;
    let mut engine = MappedLayer::tiled(LayerRole::Interaction, Engine::Dp, dim_s, geo.merged_rows, a_bits, reram);
    engine.runtime_programmed = true;
    engine.programming_vectors = geo.merged_rows;
    engine.invocations = geo.merged_rows;
    let out = MappedLayer::tiled(LayerRole::OutputProjection, Engine::Mvm, geo.pair_count, dim_d, w_bits, reram);
    MappedOperator {
        kind: OperatorKind::Dp,
        slot: Slot::Dense,
        block: 0,
        weight_bits: w_bits,
        inputs: Vec::new(),
        dense_in,
        sparse_rows: n_s,
        dim_s,
        out_dim: dim_d,
        layers: vec![dense, sparse, engine, out],
        dp: Some(geo),
    }
}

/// Transposed-write FM engine over `n_s` vectors of width `dim_s`, MBSA squaring, and
/// a trailing FC to `dim_d`.
pub fn map_fm(n_s: usize, dim_s: usize, dim_d: usize, w_bits: u8, reram: &ReRAMConfig, a_bits: u8) -> MappedOperator {
    let mut engine = MappedLayer::tiled(LayerRole::Interaction, Engine::Fm, dim_s, n_s, a_bits, reram);
    engine.runtime_programmed = true;
    engine.programming_vectors = n_s;
    engine.mbsa_bits = fm_sum_bits(n_s, a_bits);
    let out = MappedLayer::tiled(LayerRole::OutputProjection, Engine::Mvm, dim_s, dim_d, w_bits, reram);
    MappedOperator {
        kind: OperatorKind::Fm,
        slot: Slot::Dense,
        block: 0,
        weight_bits: w_bits,
        inputs: Vec::new(),
        dense_in: 0,
        sparse_rows: n_s,
        dim_s,
        out_dim: dim_d,
        layers: vec![engine, out],
        dp: None,
    }
}

/// Bits of `|sum_j x_j|` for `n` values each below `2^(a_bits-1)` in magnitude.
pub(crate) fn fm_sum_bits(n: usize, a_bits: u8) -> u8 {
    (u32::from(a_bits) - 1 + ceil_log2(n)).max(1) as u8
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub mvm_tiles: usize,
    pub dp_tiles: usize,
    pub fm_tiles: usize,
    /// MBSA lanes, one per FM output element.
    pub mbsa_lanes: usize,
    /// Storage tiles holding every embedding table.
    pub memory_tiles: usize,
}

impl TilePlan {
    pub fn compute_tiles(&self) -> usize {
        self.mvm_tiles + self.dp_tiles + self.fm_tiles
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedBlock {
    pub index: usize,
    pub dim_d: usize,
    pub dim_s: usize,
    pub dense: Vec<MappedOperator>,
    pub sparse: Vec<MappedOperator>,
}

/// Stage id of the embedding lookup that feeds every stem consumer.
pub const LOOKUP_STAGE: &str = "lookup";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedModel {
    pub point_id: String,
    pub reram: ReRAMConfig,
    pub a_bits: u8,
    pub num_sparse_features: usize,
    pub embedding_dim: usize,
    pub embedding_rows: usize,
    pub dense_in_dim: usize,
    pub blocks: Vec<MappedBlock>,
    pub final_fc: MappedOperator,
    pub tile_plan: TilePlan,
    pub topology: Vec<Edge>,
}

impl MappedModel {
    /// All operators in block order, dense before sparse, final FC last.
    pub fn operators(&self) -> impl Iterator<Item = &MappedOperator> {
        self.blocks
            .iter()
            .flat_map(|b| b.dense.iter().chain(b.sparse.iter()))
            .chain(std::iter::once(&self.final_fc))
    }

    pub fn operator(&self, id: &str) -> Option<&MappedOperator> {
        self.operators().find(|o| o.id() == id)
    }

    /// Predecessor stage ids of `id` in the dataflow DAG.
    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        self.topology.iter().filter(|e| e.to == id).map(|e| e.from.as_str()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_canonical_pretty(self)
    }

    /// Re-derives tile plan and topology from the operator lists.
    pub fn refresh(&mut self) {
        self.tile_plan = tile_plan(self);
        self.topology = topology(self);
    }
}

pub fn map_model(point: &DesignPoint) -> Result<MappedModel> {
    map_model_with(point, DEFAULT_ACTIVATION_BITS)
}

pub fn map_model_with(point: &DesignPoint, a_bits: u8) -> Result<MappedModel> {
    let m = &point.model;
    let r = &point.reram;
    if point.topological_order().is_none() {
        return Err(Error::InvalidPoint("block connections do not form a DAG".into()));
    }
    if m.num_sparse_features == 0 {
        return Err(Error::InvalidPoint("model needs at least one sparse feature".into()));
    }
    let mut blocks = Vec::with_capacity(m.blocks.len());
    for b in &m.blocks {
        let mut dense = Vec::new();
        let mut sparse = Vec::new();
        for op in b.ops() {
            let mut mo = map_choice(point, b.index, b.dim_d, b.dim_s, op, a_bits)?;
            mo.block = b.index;
            mo.inputs = op.inputs.iter().copied().collect();
            if op.kind.is_dense_output() {
                dense.push(mo);
            } else {
                sparse.push(mo);
            }
        }
        blocks.push(MappedBlock { index: b.index, dim_d: b.dim_d, dim_s: b.dim_s, dense, sparse });
    }
    let last_dim = m.blocks.last().map_or(m.dense_in_dim, |b| b.dim_d);
    let mut final_fc = map_fc(last_dim, 1, m.final_fc_bits, r);
    final_fc.slot = Slot::Final;
    final_fc.inputs = vec![m.blocks.len()];

    let mut mm = MappedModel {
        point_id: point.point_id.clone(),
        reram: *r,
        a_bits,
        num_sparse_features: m.num_sparse_features,
        embedding_dim: m.embedding_dim,
        embedding_rows: m.embedding_rows,
        dense_in_dim: m.dense_in_dim,
        blocks,
        final_fc,
        tile_plan: TilePlan::default(),
        topology: Vec::new(),
    };
    mm.refresh();
    Ok(mm)
}

fn map_choice(
    point: &DesignPoint,
    block: usize,
    dim_d: usize,
    dim_s: usize,
    op: &OpChoice,
    a_bits: u8,
) -> Result<MappedOperator> {
    let m = &point.model;
    let r = &point.reram;
    if op.inputs.is_empty() || op.inputs.iter().any(|&s| s >= block) {
        return Err(Error::InvalidPoint(format!("block {block}: {} has invalid inputs", op.kind)));
    }
    let dense_in: usize = op.inputs.iter().map(|&s| m.dense_width(s)).sum();
    let rows = m.num_sparse_features * op.inputs.len();
    let w = op.weight_bits;
    let mut mo = match op.kind {
        OperatorKind::Fc => map_fc(dense_in, dim_d, w, r),
        OperatorKind::Efc => map_efc(rows, m.num_sparse_features, dim_s, w, r),
        OperatorKind::Dsi => map_dsi(dense_in, m.num_sparse_features, dim_s, w, r),
        OperatorKind::Dp => map_dp(dense_in, dim_d, dim_s, rows, w, r, a_bits),
        OperatorKind::Fm => map_fm(rows, dim_s, dim_d, w, r, a_bits),
    };
    mo.dim_s = dim_s;
    Ok(mo)
}

fn tile_plan(mm: &MappedModel) -> TilePlan {
    let mut plan = TilePlan::default();
    for op in mm.operators() {
        plan.mvm_tiles += op.tiles_on(Engine::Mvm);
        plan.dp_tiles += op.tiles_on(Engine::Dp);
        plan.fm_tiles += op.tiles_on(Engine::Fm);
        if op.kind == OperatorKind::Fm {
            plan.mbsa_lanes += op.dim_s;
        }
    }
    let table_bits = mm.num_sparse_features * mm.embedding_rows * mm.embedding_dim * usize::from(mm.a_bits);
    let tile_bits = mm.reram.xbar_size * mm.reram.xbar_size * usize::from(mm.reram.cell_bits);
    plan.memory_tiles = table_bits.div_ceil(tile_bits);
    plan
}

fn topology(mm: &MappedModel) -> Vec<Edge> {
    let mut edges = BTreeSet::new();
    for b in &mm.blocks {
        for op in b.dense.iter().chain(&b.sparse) {
            for &s in &op.inputs {
                if s == STEM {
                    edges.insert((LOOKUP_STAGE.to_string(), op.id()));
                    continue;
                }
                let src = &mm.blocks[s - 1];
                if op.kind.reads_dense() {
                    edges.extend(src.dense.iter().map(|p| (p.id(), op.id())));
                }
                if op.kind.reads_sparse() {
                    edges.extend(src.sparse.iter().map(|p| (p.id(), op.id())));
                }
            }
        }
    }
    match mm.blocks.last() {
        Some(last) => edges.extend(last.dense.iter().map(|p| (p.id(), mm.final_fc.id()))),
        None => {
            edges.insert((LOOKUP_STAGE.to_string(), mm.final_fc.id()));
        }
    }
    edges.into_iter().map(|(from, to)| Edge { from, to }).collect()
}
