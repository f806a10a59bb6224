//! Model-quality signal for the search: a deterministic surrogate loss plus
//! externally measured losses that override it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design_space::{DesignPoint, OperatorKind};
use crate::json::sha256_hex;
use crate::{Error, Result};

/// Lower bound of the surrogate loss.
pub const LOSS_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSource {
    Surrogate,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub log_loss: f64,
    pub auc: Option<f64>,
    pub source: EvalSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    pub base_loss: f64,
    /// Reward per doubling of the summed block widths.
    pub capacity_weight: f64,
    /// Penalty per 4-bit boundary FC (first block's FCs and the final FC).
    pub low_bit_penalty: f64,
    /// Reward per DP or FM operator, up to `interaction_cap`.
    pub interaction_bonus: f64,
    pub interaction_cap: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            base_loss: 0.47,
            capacity_weight: 0.0015,
            low_bit_penalty: 0.004,
            interaction_bonus: 0.0025,
            interaction_cap: 6,
            noise_scale: 0.002,
            seed: 0,
        }
    }
}

impl SurrogateParams {
    pub fn check(&self) -> Result<()> {
        if self.noise_scale.is_nan() || self.noise_scale < 0.0 {
            return Err(Error::InvalidConfig("surrogate: noise_scale must be >= 0".into()));
        }
        let all = [self.base_loss, self.capacity_weight, self.low_bit_penalty, self.interaction_bonus, self.noise_scale];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("surrogate: parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Uniform in `[-1, 1)` from `sha256(point_id || seed)`.
fn hash_noise(point_id: &str, seed: u64) -> f64 {
    let digest = sha256_hex(format!("{point_id}:{seed}").as_bytes());
    let bits = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn low_bit_fcs(point: &DesignPoint) -> usize {
    let m = &point.model;
    let first = m.blocks.first().map_or(0, |b| {
        b.dense_ops.iter().filter(|o| o.kind == OperatorKind::Fc && o.weight_bits == 4).count()
    });
    first + usize::from(m.final_fc_bits == 4)
}

pub fn surrogate_loss(point: &DesignPoint, sp: &SurrogateParams) -> EvalResult {
    let m = &point.model;
    let width: usize = m.blocks.iter().map(|b| b.dim_d).sum::<usize>().max(1);
    let interactions = (m.count_kind(OperatorKind::Dp) + m.count_kind(OperatorKind::Fm)).min(sp.interaction_cap);
    let loss = sp.base_loss - sp.capacity_weight * (width as f64).log2() - sp.interaction_bonus * interactions as f64
        + sp.low_bit_penalty * low_bit_fcs(point) as f64
        + sp.noise_scale * hash_noise(&point.point_id, sp.seed);
    EvalResult { log_loss: loss.max(LOSS_FLOOR), auc: None, source: EvalSource::Surrogate }
}

/// Surrogate loss with externally measured results taking precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluator {
    pub surrogate: SurrogateParams,
    pub external: BTreeMap<String, EvalResult>,
}

impl Evaluator {
    pub fn new(surrogate: SurrogateParams) -> Self {
        Self { surrogate, external: BTreeMap::new() }
    }

    pub fn evaluate(&self, point: &DesignPoint) -> EvalResult {
        self.external.get(&point.point_id).copied().unwrap_or_else(|| surrogate_loss(point, &self.surrogate))
    }
}

/// Parsed external results plus the warnings raised while reading them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub results: BTreeMap<String, EvalResult>,
    pub warnings: Vec<String>,
}

/// Reads `point_id,log_loss[,auc]` CSV with a required header row. Later rows for
/// the same id replace earlier ones.
pub fn ingest_external_str(text: &str) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = rdr.records();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let line_of = |r: &csv::StringRecord| r.position().map_or(0, |p| p.line() as usize);

    match records.next() {
        None => return Ok(out),
        Some(Err(e)) => return Err(parse_err(1, e.to_string())),
        Some(Ok(h)) => {
            let cols: Vec<&str> = h.iter().collect();
            if cols != ["point_id", "log_loss"] && cols != ["point_id", "log_loss", "auc"] {
                return Err(parse_err(line_of(&h), format!("expected header point_id,log_loss[,auc], got {}", cols.join(","))));
            }
        }
    }
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = line_of(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if !(2..=3).contains(&rec.len()) {
            return Err(parse_err(line, format!("expected 2 or 3 fields, got {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty point_id".into()));
        }
        let log_loss: f64 = rec[1].parse().map_err(|e| parse_err(line, format!("log_loss {:?}: {e}", &rec[1])))?;
        if !(log_loss > 0.0 && log_loss.is_finite()) {
            return Err(parse_err(line, format!("log_loss must be > 0, got {log_loss}")));
        }
        let auc = match rec.get(2).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => {
                let v: f64 = s.parse().map_err(|e| parse_err(line, format!("auc {s:?}: {e}")))?;
                if !(v > 0.0 && v < 1.0) {
                    return Err(parse_err(line, format!("auc must lie in (0, 1), got {v}")));
                }
                Some(v)
            }
        };
        let r = EvalResult { log_loss, auc, source: EvalSource::External };
        if out.results.insert(id.clone(), r).is_some() {
            let w = format!("line {line}: duplicate point_id {id}, keeping the later row");
            log::warn!("{w}");
            out.warnings.push(w);
        }
    }
    Ok(out)
}

pub fn ingest_external(path: &Path) -> Result<Ingested> {
    ingest_external_str(&std::fs::read_to_string(path)?)
}

/// Ids in `results` that are not among `known`, each logged as a warning.
pub fn unknown_point_ids<'a>(results: &BTreeMap<String, EvalResult>, known: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let known: std::collections::BTreeSet<&str> = known.into_iter().collect();
    let unknown: Vec<String> = results.keys().filter(|k| !known.contains(k.as_str())).cloned().collect();
    for id in &unknown {
        log::warn!("unknown point_id {id} in external results");
    }
    unknown
}
