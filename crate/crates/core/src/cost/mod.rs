//! Analytic area, energy and latency for mapped models.

mod tech;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::design_space::{OperatorKind, ReRAMConfig};
use crate::mapping::{Engine, LayerRole, MappedLayer, MappedModel, MappedOperator, LOOKUP_STAGE};
use crate::pipeline::{naive_ready_time, overlap_ready_time};
use crate::{Error, Result};

pub use tech::{AdcEntry, BufferPolicy, TechParams};

/// Stage id of the final activation.
pub const ACTIVATION_STAGE: &str = "activation";

/// Named nonnegative contributions. The total is always the sum of the parts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Components(pub BTreeMap<String, f64>);

impl Components {
    pub fn add(&mut self, name: &str, v: f64) {
        *self.0.entry(name.to_string()).or_insert(0.0) += v;
    }

    pub fn merge(&mut self, other: &Components) {
        for (k, v) in &other.0 {
            self.add(k, *v);
        }
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn get(&self, name: &str) -> f64 {
        self.0.get(name).copied().unwrap_or(0.0)
    }
}

/// Latency of one operator, split so the pipeline can overlap programming with
/// production. Composite operators run their layers back to back.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpLatency {
    /// Layers or buffer reads producing the runtime-programmed vectors.
    pub producer: f64,
    /// `programming_vectors * xbar_write_time`.
    pub program: f64,
    /// Crossbar reads after programming, including the output projection.
    pub compute: f64,
    /// `v_bits * mbsa_time` for FM.
    pub mbsa: f64,
    /// Runtime-programmed vectors (0 for static operators).
    pub vectors: usize,
    /// Serial sum of the parts.
    pub total: f64,
}

impl OpLatency {
    /// Stage time with or without production/programming overlap.
    pub fn stage_time(&self, overlap: bool) -> f64 {
        if self.vectors == 0 {
            return self.total;
        }
        let k = self.vectors;
        let t_e = self.producer / k as f64;
        let t_p = self.program / k as f64;
        let ready = if overlap { overlap_ready_time(k, t_e, t_p) } else { naive_ready_time(k, t_e, t_p) };
        ready + self.compute + self.mbsa
    }

    /// Per-vector producer and programming times `(t_e, t_p)`.
    pub fn per_vector(&self) -> (f64, f64) {
        if self.vectors == 0 {
            return (0.0, 0.0);
        }
        (self.producer / self.vectors as f64, self.program / self.vectors as f64)
    }
}

fn n_slices(a_bits: u8, reram: &ReRAMConfig) -> usize {
    usize::from(a_bits).div_ceil(usize::from(reram.dac_bits))
}

fn read_time(active: usize, tp: &TechParams) -> f64 {
    tp.xbar_read_time + active.div_ceil(tp.adcs_per_xbar) as f64 * tp.adc_time
}

/// Bit-serial reads of one layer. Row and column tiles run in parallel, so one tile's
/// read sequence is the critical path.
pub fn layer_latency(l: &MappedLayer, tp: &TechParams, reram: &ReRAMConfig, a_bits: u8) -> f64 {
    if l.tiles() == 0 {
        return 0.0;
    }
    let slices = n_slices(a_bits, reram);
    match l.engine {
        Engine::Mvm | Engine::Dp => {
            (l.invocations * slices) as f64 * read_time(l.active_cols(reram.xbar_size), tp)
        }
        // all-ones pass per (plane, polarity) plus one self-product pass per slice and plane,
        // converted along rows
        Engine::Fm => ((2 + slices) * l.planes) as f64 * read_time(l.active_rows(reram.xbar_size), tp),
    }
}

pub fn op_latency(mo: &MappedOperator, tp: &TechParams, reram: &ReRAMConfig, a_bits: u8) -> OpLatency {
    let lat = |role| mo.layer(role).map_or(0.0, |l| layer_latency(l, tp, reram, a_bits));
    let mut out = OpLatency::default();
    match mo.kind {
        OperatorKind::Dp => {
            let engine = mo.layer(LayerRole::Interaction);
            out.vectors = engine.map_or(0, |l| l.programming_vectors);
            out.producer = lat(LayerRole::DenseProjection) + lat(LayerRole::SparseProjection);
            out.program = out.vectors as f64 * tp.xbar_write_time;
            out.compute = lat(LayerRole::Interaction) + lat(LayerRole::OutputProjection);
        }
        OperatorKind::Fm => {
            let engine = mo.layer(LayerRole::Interaction);
            out.vectors = engine.map_or(0, |l| l.programming_vectors);
            out.producer = (out.vectors * mo.dim_s) as f64 * tp.buffer_word_time;
            out.program = out.vectors as f64 * tp.xbar_write_time;
            out.compute = lat(LayerRole::Interaction) + lat(LayerRole::OutputProjection);
            out.mbsa = f64::from(engine.map_or(0, |l| l.mbsa_bits)) * tp.mbsa_time;
        }
        _ => out.compute = mo.layers.iter().map(|l| layer_latency(l, tp, reram, a_bits)).sum(),
    }
    out.total = out.producer + out.program + out.compute + out.mbsa;
    out
}

fn layer_area(l: &MappedLayer, tp: &TechParams, reram: &ReRAMConfig, adc: AdcEntry, c: &mut Components) {
    let tiles = l.tiles() as f64;
    let s = reram.xbar_size as f64;
    c.add("crossbar", tiles * s * s * tp.cell_area);
    c.add("adc", tiles * tp.adcs_per_xbar as f64 * adc.area);
    c.add("dac", tiles * s * tp.dac_area);
}

/// `(input words, output words, internal words)` moved through the operator's buffer.
fn io_words(mo: &MappedOperator) -> (usize, usize, usize) {
    let input = mo.dense_in + mo.sparse_rows * mo.dim_s;
    let output = if mo.is_dense_output() { mo.out_dim } else { mo.out_dim * mo.dim_s };
    let internal = match (mo.kind, mo.dp) {
        (OperatorKind::Dp, Some(g)) => g.merged_rows * mo.dim_s + g.pair_count,
        (OperatorKind::Fm, _) => mo.dim_s,
        _ => 0,
    };
    (input, output, internal)
}

fn buffer_bytes(mo: &MappedOperator, tp: &TechParams, a_bits: u8) -> f64 {
    let (i, o, n) = io_words(mo);
    let words = match tp.buffer_policy {
        BufferPolicy::LargestIntermediate => i.max(o).max(n),
        BufferPolicy::InputPlusOutput => i + o + n,
    };
    (words * usize::from(a_bits)) as f64 / 8.0
}

/// Area of one operator by component. No controller share; that is added per model.
pub fn op_area(mo: &MappedOperator, tp: &TechParams, reram: &ReRAMConfig, a_bits: u8) -> Result<Components> {
    let adc = tp.adc_entry(reram.adc_bits)?;
    let mut c = Components::default();
    for l in &mo.layers {
        layer_area(l, tp, reram, adc, &mut c);
        if l.engine == Engine::Fm {
            c.add("mbsa", mo.dim_s as f64 * tp.mbsa_area);
        }
    }
    if mo.layers.iter().any(|l| l.tiles() > 0) {
        c.add("buffer", buffer_bytes(mo, tp, a_bits) * tp.buffer_area_per_byte);
    }
    Ok(c)
}

/// Energy of one inference through one operator, by component.
pub fn op_energy(mo: &MappedOperator, tp: &TechParams, reram: &ReRAMConfig, a_bits: u8) -> Result<Components> {
    let adc = tp.adc_entry(reram.adc_bits)?;
    let slices = n_slices(a_bits, reram) as f64;
    let mut c = Components::default();
    for l in &mo.layers {
        if l.tiles() == 0 {
            continue;
        }
        let logical_cols = (l.out_dim * l.planes * 2) as f64;
        let (rows, rt, ct) = (l.in_dim as f64, l.row_tiles as f64, l.col_tiles as f64);
        match l.engine {
            Engine::Mvm | Engine::Dp => {
                let reads = l.invocations as f64 * slices;
                c.add("dac", reads * rows * ct * tp.dac_energy);
                c.add("crossbar", reads * rows * logical_cols * tp.cell_read_energy);
                c.add("adc", reads * rt * logical_cols * adc.energy);
            }
            Engine::Fm => {
                let passes = (2.0 + slices) * l.planes as f64;
                let vectors = l.out_dim as f64;
                c.add("dac", passes * vectors * rt * tp.dac_energy);
                c.add("crossbar", passes * rows * vectors * tp.cell_read_energy);
                c.add("adc", passes * rows * ct * adc.energy);
                c.add("mbsa", f64::from(l.mbsa_bits) * rows * tp.mbsa_energy);
            }
        }
        if l.runtime_programmed {
            let cells = l.programming_vectors * l.in_dim * l.planes * 2;
            c.add("write", cells as f64 * tp.cell_write_energy);
        }
    }
    if mo.layers.iter().any(|l| l.tiles() > 0) {
        let (i, o, n) = io_words(mo);
        c.add("buffer", (i + n) as f64 * tp.buffer_read_energy + (o + n) as f64 * tp.buffer_write_energy);
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub id: String,
    /// Stage time under the chosen overlap setting.
    pub latency: f64,
    pub energy: f64,
    /// `energy / latency`.
    pub power: f64,
    pub op: Option<OpLatency>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub point_id: String,
    pub tech_label: String,
    pub area: f64,
    pub area_breakdown: Components,
    pub energy_per_inference: f64,
    pub energy_breakdown: Components,
    pub peak_power: f64,
    pub stages: Vec<StageCost>,
    pub bottleneck_stage: String,
    pub bottleneck_time: f64,
    /// Sum of all stage times without any overlap.
    pub serial_latency: f64,
}

impl CostReport {
    pub fn stage(&self, id: &str) -> Option<&StageCost> {
        self.stages.iter().find(|s| s.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_canonical_pretty(self)
    }

    /// One row per stage: `stage,latency,energy,power`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["stage", "latency", "energy", "power"]).map_err(csv_err)?;
        for s in &self.stages {
            w.write_record([s.id.clone(), s.latency.to_string(), s.energy.to_string(), s.power.to_string()])
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Conflict-free lookup time: every bank serves `ceil(N_s / num_banks)` ids.
pub fn ideal_lookup_time(mm: &MappedModel, tp: &TechParams) -> f64 {
    mm.num_sparse_features.div_ceil(tp.num_banks) as f64 * tp.t_bank
}

fn lookup_energy(mm: &MappedModel, tp: &TechParams) -> f64 {
    let n = mm.num_sparse_features as f64;
    n * tp.bank_read_energy + n * mm.embedding_dim as f64 * tp.buffer_write_energy
}

/// Index of the largest value, first one on ties.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Aggregate cost with programming overlap enabled and the conflict-free lookup.
pub fn model_cost(mm: &MappedModel, tp: &TechParams) -> Result<CostReport> {
    model_cost_with(mm, tp, true, ideal_lookup_time(mm, tp))
}

/// Aggregate cost with explicit overlap setting and lookup stage time.
pub fn model_cost_with(mm: &MappedModel, tp: &TechParams, overlap: bool, lookup_time: f64) -> Result<CostReport> {
    let reram = &mm.reram;
    let a = mm.a_bits;
    let mut area = Components::default();
    let mut energy = Components::default();

    let lookup_e = lookup_energy(mm, tp);
    let mut stages = vec![StageCost {
        id: LOOKUP_STAGE.to_string(),
        latency: lookup_time,
        energy: lookup_e,
        power: lookup_e / lookup_time,
        op: None,
    }];
    energy.add("lookup", lookup_e);
    let s = reram.xbar_size as f64;
    area.add("memory", mm.tile_plan.memory_tiles as f64 * s * s * tp.cell_area);
    let mut serial = lookup_time;

    for op in mm.operators() {
        let lat = op_latency(op, tp, reram, a);
        let e = op_energy(op, tp, reram, a)?;
        area.merge(&op_area(op, tp, reram, a)?);
        energy.merge(&e);
        let latency = lat.stage_time(overlap);
        let stage_e = e.total();
        serial += lat.total;
        stages.push(StageCost {
            id: op.id(),
            latency,
            energy: stage_e,
            power: if latency > 0.0 { stage_e / latency } else { 0.0 },
            op: Some(lat),
        });
    }

    let act_e = tp.buffer_read_energy;
    energy.add("activation", act_e);
    stages.push(StageCost {
        id: ACTIVATION_STAGE.to_string(),
        latency: tp.activation_time,
        energy: act_e,
        power: act_e / tp.activation_time,
        op: None,
    });
    serial += tp.activation_time;

    area.add("controller", tp.controller_overhead * area.total());
    energy.add("controller", tp.controller_overhead * energy.total());

    let b = argmax(stages.iter().map(|s| s.latency));
    let peak_power = stages.iter().map(|s| s.power).fold(0.0, f64::max);
    Ok(CostReport {
        point_id: mm.point_id.clone(),
        tech_label: tp.label.clone(),
        area: area.total(),
        area_breakdown: area,
        energy_per_inference: energy.total(),
        energy_breakdown: energy,
        peak_power,
        bottleneck_stage: stages[b].id.clone(),
        bottleneck_time: stages[b].latency,
        stages,
        serial_latency: serial,
    })
}
