//! Stage-level latency and throughput simulation.

mod lookup;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::{ideal_lookup_time, model_cost_with, CostReport, TechParams, ACTIVATION_STAGE};
use crate::mapping::{Edge, MappedModel, LOOKUP_STAGE};
use crate::Result;

pub use lookup::{
    load_trace, parse_trace, place_embeddings, simulate_lookup, synthetic_trace, trace_frequencies,
    EmbeddingPlacement, LookupModel,
};

/// Time at which a runtime-programmed engine holds all `k` vectors when programming
/// vector `j` overlaps production of vector `j + 1`.
pub fn overlap_ready_time(k: usize, t_e: f64, t_p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    t_e + (k - 1) as f64 * t_e.max(t_p) + t_p
}

/// Produce-then-program with no overlap: `k * (t_e + t_p)`.
pub fn naive_ready_time(k: usize, t_e: f64, t_p: f64) -> f64 {
    k as f64 * (t_e + t_p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Lookup,
    Program,
    Compute,
    Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    /// Stage (and tile group) the event runs on.
    pub stage: String,
    pub kind: EventKind,
    pub start: f64,
    pub end: f64,
}

/// Single-query timeline. Each stage owns its tiles; stages start once every DAG
/// predecessor has finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub overlap: bool,
    pub events: Vec<StageEvent>,
    pub edges: Vec<Edge>,
}

impl Schedule {
    pub fn end_of(&self, stage: &str) -> Option<f64> {
        self.events.iter().filter(|e| e.stage == stage).map(|e| e.end).reduce(f64::max)
    }

    pub fn start_of(&self, stage: &str) -> Option<f64> {
        self.events.iter().filter(|e| e.stage == stage).map(|e| e.start).reduce(f64::min)
    }

    pub fn makespan(&self) -> f64 {
        self.events.iter().map(|e| e.end).fold(0.0, f64::max)
    }
}

/// As-soon-as-possible schedule from the stage times in `cost`.
pub fn schedule_from(mm: &MappedModel, cost: &CostReport, overlap: bool) -> Schedule {
    let mut events = Vec::new();
    let mut end: BTreeMap<String, f64> = BTreeMap::new();
    for st in &cost.stages {
        let (kind, start) = if st.id == LOOKUP_STAGE {
            (EventKind::Lookup, 0.0)
        } else if st.id == ACTIVATION_STAGE {
            (EventKind::Activation, end.get(&mm.final_fc.id()).copied().unwrap_or(0.0))
        } else {
            let start = mm.predecessors(&st.id).iter().map(|p| end[*p]).fold(0.0, f64::max);
            (EventKind::Compute, start)
        };
        let mut compute_start = start;
        if let Some(op) = st.op.filter(|o| o.vectors > 0) {
            let (t_e, t_p) = op.per_vector();
            let ready =
                if overlap { overlap_ready_time(op.vectors, t_e, t_p) } else { naive_ready_time(op.vectors, t_e, t_p) };
            events.push(StageEvent { stage: st.id.clone(), kind: EventKind::Program, start, end: start + ready });
            compute_start = start + ready;
        }
        let finish = start + st.latency;
        events.push(StageEvent { stage: st.id.clone(), kind, start: compute_start, end: finish });
        end.insert(st.id.clone(), finish);
    }
    let mut edges = mm.topology.clone();
    edges.push(Edge { from: mm.final_fc.id(), to: ACTIVATION_STAGE.to_string() });
    Schedule { overlap, events, edges }
}

pub fn schedule(mm: &MappedModel, tp: &TechParams, overlap: bool) -> Result<Schedule> {
    let cost = model_cost_with(mm, tp, overlap, ideal_lookup_time(mm, tp))?;
    Ok(schedule_from(mm, &cost, overlap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageUse {
    pub stage: String,
    pub time: f64,
    /// `time / bottleneck_time`.
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub point_id: String,
    pub overlap: bool,
    /// Single-query critical path.
    pub latency: f64,
    /// Queries per time unit with every stage pipelined across queries.
    pub throughput: f64,
    pub bottleneck_stage: String,
    pub bottleneck_time: f64,
    /// Sum of every stage with no overlap at all.
    pub serial_latency: f64,
    pub lookup_time: f64,
    pub stages: Vec<StageUse>,
    pub schedule: Schedule,
}

impl ThroughputReport {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_canonical_pretty(self)
    }
}

/// Lookup stage time under `model`.
pub fn lookup_time(mm: &MappedModel, tp: &TechParams, model: &LookupModel) -> Result<f64> {
    let queries = match model {
        LookupModel::Ideal => return Ok(ideal_lookup_time(mm, tp)),
        LookupModel::Trace { queries } => queries.clone(),
        LookupModel::Synthetic { queries, exponent, seed } => {
            synthetic_trace(mm.num_sparse_features, mm.embedding_rows, *queries, *exponent, *seed)?
        }
    };
    if queries.is_empty() {
        return Ok(0.0);
    }
    let placement = place_embeddings(&trace_frequencies(&queries), tp.num_banks)?;
    let lat = simulate_lookup(&queries, &placement, tp.t_bank)?;
    Ok(lat.iter().sum::<f64>() / lat.len() as f64)
}

/// Cost report and throughput report computed from one set of stage times.
pub fn evaluate(
    mm: &MappedModel,
    tp: &TechParams,
    model: &LookupModel,
    overlap: bool,
) -> Result<(CostReport, ThroughputReport)> {
    let lookup = lookup_time(mm, tp, model)?;
    let cost = model_cost_with(mm, tp, overlap, lookup)?;
    let schedule = schedule_from(mm, &cost, overlap);
    let report = ThroughputReport {
        point_id: mm.point_id.clone(),
        overlap,
        latency: schedule.makespan(),
        throughput: 1.0 / cost.bottleneck_time,
        bottleneck_stage: cost.bottleneck_stage.clone(),
        bottleneck_time: cost.bottleneck_time,
        serial_latency: cost.serial_latency,
        lookup_time: lookup,
        stages: cost
            .stages
            .iter()
            .map(|s| StageUse { stage: s.id.clone(), time: s.latency, utilization: s.latency / cost.bottleneck_time })
            .collect(),
        schedule,
    };
    Ok((cost, report))
}

pub fn simulate(mm: &MappedModel, tp: &TechParams, model: &LookupModel, overlap: bool) -> Result<ThroughputReport> {
    evaluate(mm, tp, model, overlap).map(|(_, r)| r)
}
