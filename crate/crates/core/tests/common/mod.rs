//! Plain-integer oracles shared by the integration tests. Nothing here touches the
//! crossbar simulator; every value is computed directly from its definition.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use pimdse_core::design_space::{DesignPoint, OperatorKind, ReRAMConfig};
use pimdse_core::mapping::QuantizedWeights;
use rand::Rng;

/// `y[o] = sum_r x[r] * w[r][o]`.
pub fn matmul(w: &[Vec<i64>], x: &[i64]) -> Vec<i64> {
    let out = w.first().map_or(0, Vec::len);
    (0..out).map(|o| w.iter().zip(x).map(|(row, &xi)| row[o] * xi).sum()).collect()
}

/// `(sum_j x_j)^2 - sum_j x_j^2`, coordinate-wise.
pub fn fm_by_square(vectors: &[Vec<i64>]) -> Vec<i64> {
    let len = vectors[0].len();
    (0..len)
        .map(|d| {
            let s: i64 = vectors.iter().map(|v| v[d]).sum();
            let q: i64 = vectors.iter().map(|v| v[d] * v[d]).sum();
            s * s - q
        })
        .collect()
}

/// `2 * sum_{i<j} x_i * x_j`, coordinate-wise.
pub fn fm_by_pairs(vectors: &[Vec<i64>]) -> Vec<i64> {
    let len = vectors[0].len();
    let mut out = vec![0i64; len];
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            for d in 0..len {
                out[d] += 2 * vectors[i][d] * vectors[j][d];
            }
        }
    }
    out
}

/// Strict upper triangle of `X X^T`, row-major.
pub fn dp_triu(rows: &[Vec<i64>]) -> Vec<i64> {
    let mut out = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            out.push(rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum());
        }
    }
    out
}

fn bits_for(n: usize) -> u8 {
    let mut b = 0;
    while (1usize << b) < n {
        b += 1;
    }
    b
}

/// Every (dac, cell, xbar, adc) from the published menus whose ADC covers the
/// largest possible column sum `rows * (2^dac - 1) * (2^cell - 1)`.
pub fn lossless_configs() -> Vec<ReRAMConfig> {
    let mut out = Vec::new();
    for dac_bits in [1u8, 2] {
        for cell_bits in [1u8, 2] {
            for xbar_size in [16usize, 32, 64] {
                for adc_bits in [4u8, 6, 8] {
                    if adc_bits >= dac_bits + cell_bits + bits_for(xbar_size) {
                        out.push(ReRAMConfig { dac_bits, cell_bits, xbar_size, adc_bits });
                    }
                }
            }
        }
    }
    out
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(lo..=hi)).collect()).collect()
}

fn rq(v: i64, shift: u32, a_bits: u8) -> i64 {
    let lim = (1i64 << (a_bits - 1)) - 1;
    (v >> shift).clamp(-lim, lim)
}

fn sat(v: i64, a_bits: u8) -> i64 {
    let lim = (1i64 << (a_bits - 1)) - 1;
    v.clamp(-lim, lim)
}

fn fit(row: &[i64], width: usize) -> Vec<i64> {
    (0..width).map(|i| row.get(i).copied().unwrap_or(0)).collect()
}

/// Integer forward pass computed straight from the model description.
pub struct ReferenceOutput {
    pub logit: i64,
    pub dense: Vec<Vec<i64>>,
    pub sparse: Vec<Vec<Vec<i64>>>,
}

pub fn reference_forward(
    point: &DesignPoint,
    weights: &QuantizedWeights,
    a_bits: u8,
    dense_in: &[i64],
    sparse_in: &[Vec<i64>],
) -> ReferenceOutput {
    let m = &point.model;
    let n_s = m.num_sparse_features;
    let mut dense = vec![dense_in.to_vec()];
    let mut sparse = vec![sparse_in.to_vec()];
    for b in &m.blocks {
        let mut d_acc = vec![0i64; b.dim_d];
        let mut s_acc = vec![vec![0i64; b.dim_s]; n_s];
        for (slot, ops) in [("dense", &b.dense_ops), ("sparse", &b.sparse_ops)] {
            for op in ops.iter() {
                let params = &weights.layers[&format!("b{}.{slot}.{}", b.index, op.kind)];
                let w = |i: usize| &params[i].matrix;
                let s = |i: usize| params[i].shift;
                let x: Vec<i64> = op.inputs.iter().flat_map(|&src| dense[src].clone()).collect();
                let rows: Vec<Vec<i64>> =
                    op.inputs.iter().flat_map(|&src| sparse[src].iter().map(|r| fit(r, b.dim_s)).collect::<Vec<_>>()).collect();
                let mix = |mat: &Vec<Vec<i64>>, shift: u32| -> Vec<Vec<i64>> {
                    let outs = mat[0].len();
                    (0..outs)
                        .map(|o| {
                            (0..b.dim_s)
                                .map(|c| rq(rows.iter().zip(mat).map(|(r, wr)| r[c] * wr[o]).sum(), shift, a_bits))
                                .collect()
                        })
                        .collect()
                };
                match op.kind {
                    OperatorKind::Fc => {
                        let y: Vec<i64> = matmul(w(0), &x).into_iter().map(|v| rq(v, s(0), a_bits)).collect();
                        for (acc, v) in d_acc.iter_mut().zip(y) {
                            *acc = sat(*acc + v, a_bits);
                        }
                    }
                    OperatorKind::Dsi => {
                        let y: Vec<i64> = matmul(w(0), &x).into_iter().map(|v| rq(v, s(0), a_bits)).collect();
                        for (r, acc_row) in s_acc.iter_mut().enumerate() {
                            for (c, acc) in acc_row.iter_mut().enumerate() {
                                *acc = sat(*acc + y[r * b.dim_s + c], a_bits);
                            }
                        }
                    }
                    OperatorKind::Efc => {
                        let y = mix(w(0), s(0));
                        for (acc_row, row) in s_acc.iter_mut().zip(y) {
                            for (acc, v) in acc_row.iter_mut().zip(row) {
                                *acc = sat(*acc + v, a_bits);
                            }
                        }
                    }
                    OperatorKind::Dp => {
                        let mut merged = vec![matmul(w(0), &x).into_iter().map(|v| rq(v, s(0), a_bits)).collect::<Vec<_>>()];
                        merged.extend(mix(w(1), s(1)));
                        let pairs: Vec<i64> = dp_triu(&merged).into_iter().map(|v| rq(v, s(2), a_bits)).collect();
                        let y: Vec<i64> = matmul(w(3), &pairs).into_iter().map(|v| rq(v, s(3), a_bits)).collect();
                        for (acc, v) in d_acc.iter_mut().zip(y) {
                            *acc = sat(*acc + v, a_bits);
                        }
                    }
                    OperatorKind::Fm => {
                        let ix: Vec<i64> = fm_by_pairs(&rows).into_iter().map(|v| rq(v, s(0), a_bits)).collect();
                        let y: Vec<i64> = matmul(w(1), &ix).into_iter().map(|v| rq(v, s(1), a_bits)).collect();
                        for (acc, v) in d_acc.iter_mut().zip(y) {
                            *acc = sat(*acc + v, a_bits);
                        }
                    }
                }
            }
        }
        dense.push(d_acc.into_iter().map(|v| v.max(0)).collect());
        sparse.push(s_acc);
    }
    let last = dense.last().expect("stem");
    let logit = matmul(&weights.layers["final.FC"][0].matrix, last)[0];
    ReferenceOutput { logit, dense, sparse }
}

/// Bank-by-bank serialization: every bank keeps its own clock and serves its
/// requests one after another; the query ends when the busiest bank is done.
pub fn lookup_oracle(query: &[u64], bank_of: &BTreeMap<u64, usize>, t_bank: f64) -> f64 {
    let mut clocks: BTreeMap<usize, f64> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for id in query {
        if seen.insert(*id) {
            *clocks.entry(bank_of[id]).or_insert(0.0) += t_bank;
        }
    }
    clocks.values().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Produced(usize),
    Programmed(usize),
}

/// Discrete-event simulation of one producer feeding one programmer. Times are
/// integers; the producer emits vectors back to back and the programmer takes the
/// next vector as soon as it is both produced and the previous write has finished.
pub fn overlap_event_oracle(k: usize, t_e: u64, t_p: u64) -> u64 {
    let mut queue: BinaryHeap<Reverse<(u64, Ev)>> = BinaryHeap::new();
    queue.push(Reverse((t_e, Ev::Produced(0))));
    let mut ready: Vec<usize> = Vec::new();
    let mut busy = false;
    let mut done = 0;
    while let Some(Reverse((now, ev))) = queue.pop() {
        match ev {
            Ev::Produced(j) => {
                ready.push(j);
                if j + 1 < k {
                    queue.push(Reverse((now + t_e, Ev::Produced(j + 1))));
                }
            }
            Ev::Programmed(_) => {
                busy = false;
                done += 1;
                if done == k {
                    return now;
                }
            }
        }
        if !busy && !ready.is_empty() {
            let j = ready.remove(0);
            busy = true;
            queue.push(Reverse((now + t_p, Ev::Programmed(j))));
        }
    }
    0
}
