use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{fm_sum_bits, Engine, LayerParams, MappedModel, MappedOperator, QuantizedWeights, Slot};
use crate::crossbar::{
    mbsa_square, mvm, program_signed, transposed_program, ConverterSpec, CrossbarSpec, ProgrammedMatrix,
    SaturationLog,
};
use crate::design_space::OperatorKind;
use crate::{Error, Result};

/// `clamp(v >> shift, -(2^(a-1) - 1), 2^(a-1) - 1)`, floor shift.
pub fn requantize(v: i64, shift: u32, a_bits: u8) -> i64 {
    saturate(v >> shift, a_bits)
}

fn saturate(v: i64, a_bits: u8) -> i64 {
    let lim = (1i64 << (a_bits - 1)) - 1;
    v.clamp(-lim, lim)
}

fn requant_all(v: &mut [i64], shift: u32, a_bits: u8) {
    for x in v {
        *x = requantize(*x, shift, a_bits);
    }
}

/// Sparse mixing `Y = W^T X`: `x_rows` is `n_in x width`, the programmed matrix is
/// `n_in x n_out`, one crossbar read per column of `x_rows`. Returns `n_out x width`.
pub fn efc_forward(
    pm: &ProgrammedMatrix,
    x_rows: &[Vec<i64>],
    a_bits: u8,
    conv: &ConverterSpec,
) -> Result<(Vec<Vec<i64>>, SaturationLog)> {
    if x_rows.len() != pm.meta.in_dim {
        return Err(Error::ShapeMismatch(format!("{} sparse rows != {}", x_rows.len(), pm.meta.in_dim)));
    }
    let width = x_rows.first().map_or(0, Vec::len);
    let mut out = vec![vec![0i64; width]; pm.meta.out_dim];
    let mut log = SaturationLog::default();
    for c in 0..width {
        let col: Vec<i64> = x_rows.iter().map(|r| r[c]).collect();
        let (y, l) = mvm(pm, &col, a_bits, conv)?;
        log.merge(&l);
        for (o, v) in y.into_iter().enumerate() {
            out[o][c] = v;
        }
    }
    Ok((out, log))
}

/// Pairwise dot products of `rows` (strict upper triangle, row-major) on a crossbar
/// programmed at runtime with the rows as columns.
pub fn dp_engine_forward(
    rows: &[Vec<i64>],
    spec: CrossbarSpec,
    conv: &ConverterSpec,
    a_bits: u8,
) -> Result<(Vec<i64>, SaturationLog)> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.len() < 2 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::ShapeMismatch("DP needs at least two rows of equal width".into()));
    }
    let transposed: Vec<Vec<i64>> = (0..width).map(|d| rows.iter().map(|r| r[d]).collect()).collect();
    let pm = program_signed(&transposed, a_bits, spec)?;
    let mut out = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    let mut log = SaturationLog::default();
    for (i, r) in rows.iter().enumerate() {
        let (dots, l) = mvm(&pm, r, a_bits, conv)?;
        log.merge(&l);
        out.extend_from_slice(&dots[i + 1..]);
    }
    Ok((out, log))
}

/// `(sum_j x_j)^2 - sum_j x_j^2` per coordinate: the vectors are written into
/// transposed arrays (tiled by coordinate and by vector group), the sum is read with an
/// all-ones drive, squared on the MBSA unit, and the self products are subtracted.
pub fn fm_engine_forward(
    vectors: &[Vec<i64>],
    spec: CrossbarSpec,
    conv: &ConverterSpec,
    a_bits: u8,
) -> Result<(Vec<i64>, SaturationLog)> {
    let len = vectors.first().map_or(0, Vec::len);
    if vectors.is_empty() || len == 0 || vectors.iter().any(|v| v.len() != len) {
        return Err(Error::ShapeMismatch("FM needs nonempty vectors of equal length".into()));
    }
    let planes = usize::from(a_bits).div_ceil(usize::from(spec.cell_bits));
    let per_array = spec.cols / (planes * 2);
    if per_array == 0 {
        return Err(Error::CapacityExceeded(format!("{planes} planes do not fit {} columns", spec.cols)));
    }
    let mut sum = vec![0i64; len];
    let mut sumsq = vec![0i64; len];
    let mut log = SaturationLog::default();
    for lo in (0..len).step_by(spec.rows) {
        let hi = (lo + spec.rows).min(len);
        for group in vectors.chunks(per_array) {
            let seg: Vec<Vec<i64>> = group.iter().map(|v| v[lo..hi].to_vec()).collect();
            let arr = transposed_program(&seg, spec, a_bits)?;
            let (s, l1) = arr.read_ones(conv);
            let (q, l2) = arr.read_self_products(conv);
            log.merge(&l1);
            log.merge(&l2);
            for i in 0..hi - lo {
                sum[lo + i] += s[i];
                sumsq[lo + i] += q[i];
            }
        }
    }
    let mags: Vec<u64> = sum.iter().map(|v| v.unsigned_abs()).collect();
    let squares = mbsa_square(&mags, fm_sum_bits(vectors.len(), a_bits))?;
    Ok((squares.into_iter().zip(sumsq).map(|(s2, q)| s2 as i64 - q).collect(), log))
}

/// Result of one inference through the simulated hardware.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardOutput {
    /// Raw accumulator of the final FC.
    pub logit: i64,
    /// Dense output per source, index 0 being the raw dense input.
    pub dense: Vec<Vec<i64>>,
    /// Sparse output per source, index 0 being the embedded features.
    pub sparse: Vec<Vec<Vec<i64>>>,
    /// ADC saturation per operator id.
    pub logs: BTreeMap<String, SaturationLog>,
}

impl ForwardOutput {
    pub fn is_clean(&self) -> bool {
        self.logs.values().all(SaturationLog::is_clean)
    }
}

/// A mapped model with its static weights already written to crossbars.
#[derive(Debug, Clone)]
pub struct ProgrammedModel {
    pub model: MappedModel,
    spec: CrossbarSpec,
    conv: ConverterSpec,
    programmed: BTreeMap<String, Vec<Option<ProgrammedMatrix>>>,
    params: BTreeMap<String, Vec<LayerParams>>,
}

enum OpOut {
    Dense(Vec<i64>),
    Sparse(Vec<Vec<i64>>),
}

impl ProgrammedModel {
    pub fn program(mm: &MappedModel, weights: &QuantizedWeights) -> Result<Self> {
        let spec = CrossbarSpec::from_reram(&mm.reram)?;
        let conv = ConverterSpec::from_reram(&mm.reram, 1)?;
        let mut programmed = BTreeMap::new();
        let mut params = BTreeMap::new();
        for op in mm.operators() {
            let p = weights.get(op)?;
            let tiles = op
                .layers
                .iter()
                .zip(p)
                .map(|(l, lp)| {
                    if l.runtime_programmed {
                        Ok(None)
                    } else {
                        program_signed(&lp.matrix, l.w_bits, spec).map(Some)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            programmed.insert(op.id(), tiles);
            params.insert(op.id(), p.to_vec());
        }
        Ok(Self { model: mm.clone(), spec, conv, programmed, params })
    }

    /// Runs one inference. `sparse_in` holds the looked-up embedding rows, one per
    /// sparse feature, each `embedding_dim` wide.
    pub fn forward(&self, dense_in: &[i64], sparse_in: &[Vec<i64>]) -> Result<ForwardOutput> {
        let mm = &self.model;
        let a = mm.a_bits;
        if dense_in.len() != mm.dense_in_dim {
            return Err(Error::ShapeMismatch(format!("dense input {} != {}", dense_in.len(), mm.dense_in_dim)));
        }
        if sparse_in.len() != mm.num_sparse_features || sparse_in.iter().any(|r| r.len() != mm.embedding_dim) {
            return Err(Error::ShapeMismatch(format!(
                "sparse input must be {} x {}",
                mm.num_sparse_features, mm.embedding_dim
            )));
        }
        let lim = 1i64 << (a - 1);
        if let Some(&value) = dense_in.iter().chain(sparse_in.iter().flatten()).find(|v| v.abs() >= lim) {
            return Err(Error::OutOfRange { value, bits: a });
        }

        let mut dense = vec![dense_in.to_vec()];
        let mut sparse = vec![sparse_in.to_vec()];
        let mut logs = BTreeMap::new();

        for b in &mm.blocks {
            let mut d_acc = vec![0i64; b.dim_d];
            let mut s_acc = vec![vec![0i64; b.dim_s]; mm.num_sparse_features];
            for op in b.dense.iter().chain(&b.sparse) {
                let dense_x: Vec<i64> = if op.kind.reads_dense() {
                    op.inputs.iter().flat_map(|&s| dense[s].iter().copied()).collect()
                } else {
                    Vec::new()
                };
                let sparse_x: Vec<Vec<i64>> = if op.kind.reads_sparse() {
                    op.inputs.iter().flat_map(|&s| sparse[s].iter().map(|r| align(r, b.dim_s))).collect()
                } else {
                    Vec::new()
                };
                let mut log = SaturationLog::default();
                match self.run_op(op, &dense_x, &sparse_x, &mut log)? {
                    OpOut::Dense(y) => {
                        for (acc, v) in d_acc.iter_mut().zip(y) {
                            *acc = saturate(*acc + v, a);
                        }
                    }
                    OpOut::Sparse(y) => {
                        for (acc_row, row) in s_acc.iter_mut().zip(y) {
                            for (acc, v) in acc_row.iter_mut().zip(row) {
                                *acc = saturate(*acc + v, a);
                            }
                        }
                    }
                }
                logs.insert(op.id(), log);
            }
            for v in &mut d_acc {
                *v = (*v).max(0);
            }
            dense.push(d_acc);
            sparse.push(s_acc);
        }

        let fc = &mm.final_fc;
        let pm = self.matrix(fc, 0)?;
        let (y, log) = mvm(pm, dense.last().expect("stem present"), a, &self.conv)?;
        logs.insert(fc.id(), log);
        Ok(ForwardOutput { logit: y[0], dense, sparse, logs })
    }

    fn matrix(&self, op: &MappedOperator, layer: usize) -> Result<&ProgrammedMatrix> {
        self.programmed
            .get(&op.id())
            .and_then(|v| v.get(layer))
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::ShapeMismatch(format!("{}: layer {layer} not programmed", op.id())))
    }

    fn shift(&self, op: &MappedOperator, layer: usize) -> u32 {
        self.params[&op.id()][layer].shift
    }

    fn fc(&self, op: &MappedOperator, layer: usize, x: &[i64], log: &mut SaturationLog) -> Result<Vec<i64>> {
        let a = self.model.a_bits;
        let (mut y, l) = mvm(self.matrix(op, layer)?, x, a, &self.conv)?;
        log.merge(&l);
        requant_all(&mut y, self.shift(op, layer), a);
        Ok(y)
    }

    fn efc(&self, op: &MappedOperator, layer: usize, x: &[Vec<i64>], log: &mut SaturationLog) -> Result<Vec<Vec<i64>>> {
        let a = self.model.a_bits;
        let (mut y, l) = efc_forward(self.matrix(op, layer)?, x, a, &self.conv)?;
        log.merge(&l);
        for row in &mut y {
            requant_all(row, self.shift(op, layer), a);
        }
        Ok(y)
    }

    fn run_op(&self, op: &MappedOperator, dense_x: &[i64], sparse_x: &[Vec<i64>], log: &mut SaturationLog) -> Result<OpOut> {
        let a = self.model.a_bits;
        debug_assert!(op.slot != Slot::Final);
        Ok(match op.kind {
            OperatorKind::Fc => OpOut::Dense(self.fc(op, 0, dense_x, log)?),
            OperatorKind::Dsi => {
                let y = self.fc(op, 0, dense_x, log)?;
                OpOut::Sparse(y.chunks(op.dim_s).map(<[i64]>::to_vec).collect())
            }
            OperatorKind::Efc => OpOut::Sparse(self.efc(op, 0, sparse_x, log)?),
            OperatorKind::Dp => {
                let mut merged = vec![self.fc(op, 0, dense_x, log)?];
                merged.extend(self.efc(op, 1, sparse_x, log)?);
                let (mut pairs, l) = dp_engine_forward(&merged, self.spec, &self.conv, a)?;
                log.merge(&l);
                requant_all(&mut pairs, self.shift(op, 2), a);
                OpOut::Dense(self.fc(op, 3, &pairs, log)?)
            }
            OperatorKind::Fm => {
                debug_assert_eq!(op.layers[0].engine, Engine::Fm);
                let (mut ix, l) = fm_engine_forward(sparse_x, self.spec, &self.conv, a)?;
                log.merge(&l);
                requant_all(&mut ix, self.shift(op, 0), a);
                OpOut::Dense(self.fc(op, 1, &ix, log)?)
            }
        })
    }
}

/// Pads with zeros or truncates a sparse row to `width`.
fn align(row: &[i64], width: usize) -> Vec<i64> {
    let mut r = row[..row.len().min(width)].to_vec();
    r.resize(width, 0);
    r
}

/// Programs `weights` into `mm` and runs a single inference.
pub fn functional_forward(
    mm: &MappedModel,
    weights: &QuantizedWeights,
    dense_in: &[i64],
    sparse_in: &[Vec<i64>],
) -> Result<ForwardOutput> {
    ProgrammedModel::program(mm, weights)?.forward(dense_in, sparse_in)
}
