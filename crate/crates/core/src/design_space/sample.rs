use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BlockConfig, DesignPoint, ModelConfig, OpChoice, OperatorKind, SpaceDescriptor};

/// Uniform-ish random point from the default menus; a pure function of `seed`.
pub fn sample_random(seed: u64) -> DesignPoint {
    sample_in(&SpaceDescriptor::default(), seed)
}

pub fn sample_in(space: &SpaceDescriptor, seed: u64) -> DesignPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = (1..=space.num_blocks)
        .map(|i| BlockConfig {
            index: i,
            dense_ops: random_branch(&mut rng, space, &space.dense_ops, i),
            sparse_ops: random_branch(&mut rng, space, &space.sparse_ops, i),
            dim_d: *space.dim_d.choose(&mut rng).expect("nonempty menu"),
            dim_s: *space.dim_s.choose(&mut rng).expect("nonempty menu"),
        })
        .collect();
    let model = ModelConfig {
        blocks,
        final_fc_bits: *space.weight_bits.choose(&mut rng).expect("nonempty menu"),
        num_sparse_features: space.num_sparse_features,
        embedding_dim: space.embedding_dim,
        dense_in_dim: space.dense_in_dim,
        embedding_rows: space.embedding_rows,
    };
    let combos = space.reram_combos();
    let reram = *combos.choose(&mut rng).expect("space has a feasible ReRAM combination");
    DesignPoint::new(model, reram)
}

fn random_branch<R: Rng>(
    rng: &mut R,
    space: &SpaceDescriptor,
    menu: &[OperatorKind],
    block: usize,
) -> Vec<OpChoice> {
    loop {
        let mut ops = Vec::new();
        for &kind in menu {
            if rng.random_bool(0.5) {
                ops.push(random_op(rng, space, kind, block));
            }
        }
        if !ops.is_empty() {
            return ops;
        }
    }
}

pub(super) fn random_op<R: Rng>(rng: &mut R, space: &SpaceDescriptor, kind: OperatorKind, block: usize) -> OpChoice {
    OpChoice {
        kind,
        weight_bits: *space.weight_bits.choose(rng).expect("nonempty menu"),
        inputs: random_sources(rng, block),
    }
}

/// Nonempty subset of `{0, .., block-1}`, uniform over all such subsets.
pub(super) fn random_sources<R: Rng>(rng: &mut R, block: usize) -> BTreeSet<usize> {
    loop {
        let s: BTreeSet<usize> = (0..block).filter(|_| rng.random_bool(0.5)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::validate;
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(sample_random(0).point_id, sample_random(0).point_id);
        assert_ne!(sample_random(0).point_id, sample_random(1).point_id);
    }

    #[test]
    fn samples_are_valid_and_varied() {
        let mut dims = BTreeSet::new();
        for seed in 0..1000 {
            let p = sample_random(seed);
            let r = validate(&p);
            assert!(r.ok, "seed {seed}: {:?}", r.violations);
            assert!(p.topological_order().is_some());
            dims.extend(p.model.blocks.iter().map(|b| b.dim_d));
        }
        assert!(dims.len() >= 2);
    }
}
