mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pimdse_core::design_space::{sample_in, OperatorKind, ReRAMConfig, SpaceDescriptor};
use pimdse_core::mapping::{map_model, ProgrammedModel, QuantizedWeights};

use common::{lossless_configs, random_matrix, reference_forward};

fn small_space() -> SpaceDescriptor {
    SpaceDescriptor {
        num_blocks: 3,
        dim_d: vec![16, 32, 64],
        dim_s: vec![16, 32],
        num_sparse_features: 6,
        embedding_dim: 16,
        dense_in_dim: 13,
        embedding_rows: 50,
        ..SpaceDescriptor::default()
    }
}

#[test]
fn mapped_forward_matches_integer_reference_when_lossless() {
    let configs = lossless_configs();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut kinds = std::collections::BTreeSet::new();
    for seed in 0..40u64 {
        let mut point = sample_in(&small_space(), seed);
        point.reram = configs[seed as usize % configs.len()];
        let mm = map_model(&point).unwrap();
        let weights = QuantizedWeights::random(&mm, seed);
        let pm = ProgrammedModel::program(&mm, &weights).unwrap();
        for b in &point.model.blocks {
            kinds.extend(b.ops().map(|o| o.kind));
        }
        for _ in 0..3 {
            let dense: Vec<i64> = (0..13).map(|_| rng.random_range(-127..=127)).collect();
            let sparse = random_matrix(&mut rng, 6, 16, -127, 127);
            let got = pm.forward(&dense, &sparse).unwrap();
            let want = reference_forward(&point, &weights, mm.a_bits, &dense, &sparse);
            assert!(got.is_clean(), "seed {seed}: clipping under {:?}", point.reram);
            assert_eq!(got.dense, want.dense, "seed {seed}: dense outputs differ");
            assert_eq!(got.sparse, want.sparse, "seed {seed}: sparse outputs differ");
            assert_eq!(got.logit, want.logit, "seed {seed}: logit differs");
        }
    }
    assert_eq!(kinds.len(), OperatorKind::ALL.len(), "every operator kind exercised");
}

#[test]
fn low_resolution_adc_reports_clipping() {
    let mut point = sample_in(&small_space(), 3);
    point.reram = ReRAMConfig { dac_bits: 2, cell_bits: 2, xbar_size: 64, adc_bits: 4 };
    let mm = map_model(&point).unwrap();
    let weights = QuantizedWeights::random(&mm, 3);
    let dense = vec![127i64; 13];
    let sparse = vec![vec![127i64; 16]; 6];
    let out = pimdse_core::mapping::functional_forward(&mm, &weights, &dense, &sparse).unwrap();
    assert!(!out.is_clean());
    assert!(out.logs.values().any(|l| l.max_overflow > 0));
}
