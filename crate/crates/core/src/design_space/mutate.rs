use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::random_op;
use super::{validate_in, BlockConfig, DesignPoint, OpChoice, OperatorKind, SpaceDescriptor};
use crate::{Error, Result};

/// Redraws allowed per atomic mutation before giving up and keeping the parent.
pub const MUTATION_RETRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutationAction {
    SwapDenseOp,
    SwapSparseOp,
    ChangeDimD,
    ChangeDimS,
    RewireConnection,
    ToggleInteractionOp,
    ChangeWeightBits,
    ChangeReramField,
}

impl MutationAction {
    pub const ALL: [MutationAction; 8] = [
        MutationAction::SwapDenseOp,
        MutationAction::SwapSparseOp,
        MutationAction::ChangeDimD,
        MutationAction::ChangeDimS,
        MutationAction::RewireConnection,
        MutationAction::ToggleInteractionOp,
        MutationAction::ChangeWeightBits,
        MutationAction::ChangeReramField,
    ];
}

pub fn mutate(point: &DesignPoint, seed: u64, num_mutations: usize) -> Result<DesignPoint> {
    mutate_in(&SpaceDescriptor::default(), point, seed, num_mutations)
}

/// Applies `num_mutations` chained atomic mutations. Each step draws an action
/// uniformly; an action that is a no-op or produces an invalid point is redrawn up
/// to [`MUTATION_RETRIES`] times, after which that step leaves the point unchanged.
pub fn mutate_in(
    space: &SpaceDescriptor,
    point: &DesignPoint,
    seed: u64,
    num_mutations: usize,
) -> Result<DesignPoint> {
    if num_mutations == 0 {
        return Err(Error::InvalidConfig("num_mutations must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = point.clone();
    for _ in 0..num_mutations {
        current = mutate_once(space, &current, &mut rng);
    }
    Ok(current)
}

fn mutate_once<R: Rng>(space: &SpaceDescriptor, point: &DesignPoint, rng: &mut R) -> DesignPoint {
    for _ in 0..MUTATION_RETRIES {
        let action = *MutationAction::ALL.choose(rng).expect("nonempty");
        if let Some(child) = apply(space, point, action, rng) {
            if child != *point && validate_in(space, &child).ok {
                return child;
            }
        }
    }
    point.clone()
}

fn apply<R: Rng>(
    space: &SpaceDescriptor,
    point: &DesignPoint,
    action: MutationAction,
    rng: &mut R,
) -> Option<DesignPoint> {
    let mut model = point.model.clone();
    let mut reram = point.reram;
    if model.blocks.is_empty() {
        return None;
    }
    let pos = rng.random_range(0..model.blocks.len());
    let block = &mut model.blocks[pos];

    match action {
        MutationAction::SwapDenseOp => swap_op(&mut block.dense_ops, &space.dense_ops, rng)?,
        MutationAction::SwapSparseOp => swap_op(&mut block.sparse_ops, &space.sparse_ops, rng)?,
        MutationAction::ChangeDimD => block.dim_d = other_value(&space.dim_d, block.dim_d, rng)?,
        MutationAction::ChangeDimS => block.dim_s = other_value(&space.dim_s, block.dim_s, rng)?,
        MutationAction::RewireConnection => {
            let i = block.index;
            let op = random_op_mut(block, rng)?;
            let source = rng.random_range(0..i);
            if !op.inputs.remove(&source) {
                op.inputs.insert(source);
            }
            if op.inputs.is_empty() {
                return None;
            }
        }
        MutationAction::ToggleInteractionOp => toggle_interaction(space, block, rng)?,
        MutationAction::ChangeWeightBits => {
            let n_ops = block.dense_ops.len() + block.sparse_ops.len();
            let pick = rng.random_range(0..=n_ops);
            if pick == n_ops {
                model.final_fc_bits = other_value(&space.weight_bits, model.final_fc_bits, rng)?;
            } else {
                let op = if pick < block.dense_ops.len() {
                    &mut block.dense_ops[pick]
                } else {
                    &mut block.sparse_ops[pick - block.dense_ops.len()]
                };
                op.weight_bits = other_value(&space.weight_bits, op.weight_bits, rng)?;
            }
        }
        MutationAction::ChangeReramField => match rng.random_range(0..4) {
            0 => reram.dac_bits = other_value(&space.dac_bits, reram.dac_bits, rng)?,
            1 => reram.cell_bits = other_value(&space.cell_bits, reram.cell_bits, rng)?,
            2 => reram.xbar_size = other_value(&space.xbar_size, reram.xbar_size, rng)?,
            _ => reram.adc_bits = other_value(&space.adc_bits, reram.adc_bits, rng)?,
        },
    }
    Some(DesignPoint::new(model, reram))
}

fn other_value<T: Copy + PartialEq, R: Rng>(menu: &[T], current: T, rng: &mut R) -> Option<T> {
    let others: Vec<T> = menu.iter().copied().filter(|v| *v != current).collect();
    others.choose(rng).copied()
}

fn swap_op<R: Rng>(ops: &mut [OpChoice], menu: &[OperatorKind], rng: &mut R) -> Option<()> {
    let absent: Vec<OperatorKind> =
        menu.iter().copied().filter(|k| ops.iter().all(|o| o.kind != *k)).collect();
    let new_kind = *absent.choose(rng)?;
    let idx = rng.random_range(0..ops.len().max(1));
    ops.get_mut(idx)?.kind = new_kind;
    Some(())
}

fn random_op_mut<'a, R: Rng>(block: &'a mut BlockConfig, rng: &mut R) -> Option<&'a mut OpChoice> {
    let n = block.dense_ops.len() + block.sparse_ops.len();
    if n == 0 {
        return None;
    }
    let pick = rng.random_range(0..n);
    if pick < block.dense_ops.len() {
        block.dense_ops.get_mut(pick)
    } else {
        block.sparse_ops.get_mut(pick - block.dense_ops.len())
    }
}

fn toggle_interaction<R: Rng>(space: &SpaceDescriptor, block: &mut BlockConfig, rng: &mut R) -> Option<()> {
    let candidates: Vec<(OperatorKind, bool)> = space
        .dense_ops
        .iter()
        .map(|&k| (k, true))
        .chain(space.sparse_ops.iter().map(|&k| (k, false)))
        .filter(|(k, _)| k.is_interaction())
        .collect();
    let &(kind, dense) = candidates.choose(rng)?;
    let index = block.index;
    let ops = if dense { &mut block.dense_ops } else { &mut block.sparse_ops };
    if let Some(pos) = ops.iter().position(|o| o.kind == kind) {
        if ops.len() == 1 {
            return None;
        }
        ops.remove(pos);
    } else {
        ops.push(random_op(rng, space, kind, index));
    }
    Some(())
}

/// Number of atomic edits separating two points with the same block count.
///
/// A changed dimension, weight width, source set or ReRAM field counts one each; an
/// operator kind replaced by another counts one (a swap), an operator present on only
/// one side counts one (a toggle).
pub fn atomic_distance(a: &DesignPoint, b: &DesignPoint) -> usize {
    let mut d = 0;
    let ma = &a.model;
    let mb = &b.model;
    d += usize::from(ma.final_fc_bits != mb.final_fc_bits);
    d += ma.blocks.len().abs_diff(mb.blocks.len());
    for (x, y) in ma.blocks.iter().zip(&mb.blocks) {
        d += usize::from(x.dim_d != y.dim_d);
        d += usize::from(x.dim_s != y.dim_s);
        d += branch_distance(&x.dense_ops, &y.dense_ops);
        d += branch_distance(&x.sparse_ops, &y.sparse_ops);
    }
    let (ra, rb) = (&a.reram, &b.reram);
    d += usize::from(ra.dac_bits != rb.dac_bits);
    d += usize::from(ra.cell_bits != rb.cell_bits);
    d += usize::from(ra.xbar_size != rb.xbar_size);
    d += usize::from(ra.adc_bits != rb.adc_bits);
    d
}

/// Minimum-cost matching between two operator sets. Matching two operators costs one
/// per differing field (kind, width, sources); an unmatched operator costs one.
fn branch_distance(a: &[OpChoice], b: &[OpChoice]) -> usize {
    fn pair(x: &OpChoice, y: &OpChoice) -> usize {
        usize::from(x.kind != y.kind)
            + usize::from(x.weight_bits != y.weight_bits)
            + usize::from(x.inputs != y.inputs)
    }
    fn best(a: &[OpChoice], b: &[OpChoice], used: &mut Vec<bool>) -> usize {
        let Some((first, rest)) = a.split_first() else {
            return used.iter().filter(|u| !**u).count();
        };
        // Leave `first` unmatched.
        let mut min = 1 + best(rest, b, used);
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                min = min.min(pair(first, &b[j]) + best(rest, b, used));
                used[j] = false;
            }
        }
        min
    }
    best(a, b, &mut vec![false; b.len()])
}
