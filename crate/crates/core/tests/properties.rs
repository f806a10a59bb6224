mod common;

use proptest::prelude::*;

use pimdse_core::cost::TechParams;
use pimdse_core::crossbar::{mvm, program_signed, ConverterSpec, CrossbarSpec};
use pimdse_core::design_space::sample_random;
use pimdse_core::evaluator::{surrogate_loss, SurrogateParams};
use pimdse_core::mapping::map_model;
use pimdse_core::pipeline::{naive_ready_time, overlap_ready_time, place_embeddings, simulate, LookupModel};
use pimdse_core::search::criterion;

use common::{lossless_configs, matmul};

fn matrix_and_input() -> impl Strategy<Value = (Vec<Vec<i64>>, Vec<i64>, u8, u8)> {
    (1usize..40, 1usize..6, 2u8..=8, 2u8..=8).prop_flat_map(|(rows, cols, w_bits, a_bits)| {
        let wl = (1i64 << (w_bits - 1)) - 1;
        let al = (1i64 << (a_bits - 1)) - 1;
        (
            prop::collection::vec(prop::collection::vec(-wl..=wl, cols), rows),
            prop::collection::vec(-al..=al, rows),
            Just(w_bits),
            Just(a_bits),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lossless_mvm_is_exact((w, x, w_bits, a_bits) in matrix_and_input(), pick in 0usize..100) {
        let configs = lossless_configs();
        let r = configs[pick % configs.len()];
        let spec = CrossbarSpec::from_reram(&r).unwrap();
        let conv = ConverterSpec::from_reram(&r, 1).unwrap();
        let pm = program_signed(&w, w_bits, spec).unwrap();
        prop_assert_eq!(pm.reconstruct(), w.clone());
        let (y, log) = mvm(&pm, &x, a_bits, &conv).unwrap();
        prop_assert!(log.is_clean());
        prop_assert_eq!(y, matmul(&w, &x));
    }

    #[test]
    fn placement_is_balanced(freqs in prop::collection::btree_map(0u64..10_000, 0u64..50, 0..200), banks in 1usize..20) {
        let p = place_embeddings(&freqs, banks).unwrap();
        let loads = p.loads();
        prop_assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 1);
        prop_assert_eq!(loads.iter().sum::<usize>(), freqs.len());
    }

    #[test]
    fn overlap_never_hurts(k in 1usize..200, t_e in 0.0f64..100.0, t_p in 0.0f64..100.0) {
        let o = overlap_ready_time(k, t_e, t_p);
        prop_assert!(o <= naive_ready_time(k, t_e, t_p) * (1.0 + 1e-12));
        prop_assert!(o >= t_e.max(t_p) * k as f64 * (1.0 - 1e-12));
    }

    #[test]
    fn criterion_recomputes(loss in 0.01f64..1.0, m in prop::array::uniform3(0.0f64..1e6), t in prop::array::uniform3(1e-3f64..1e6), l in prop::array::uniform3(0.0f64..1.0)) {
        let c = criterion(loss, &m, &l, &t);
        prop_assert_eq!(c, criterion(loss, &m, &l, &t));
        prop_assert!(c >= loss);
        prop_assert_eq!(criterion(loss, &m, &[0.0; 3], &t), loss);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pipeline_work_conservation_and_dependencies(seed in any::<u64>(), overlap in any::<bool>()) {
        let mm = map_model(&sample_random(seed)).unwrap();
        let tp = TechParams::illustrative();
        let r = simulate(&mm, &tp, &LookupModel::Ideal, overlap).unwrap();
        prop_assert!(r.latency <= r.serial_latency);
        for e in &r.schedule.edges {
            let from_end = r.schedule.end_of(&e.from).unwrap();
            let to_start = r.schedule.start_of(&e.to).unwrap();
            prop_assert!(to_start >= from_end, "{} starts before {} ends", e.to, e.from);
        }
        // each stage's events are disjoint in time on its own tiles
        for st in &r.stages {
            let mut evs: Vec<_> = r.schedule.events.iter().filter(|e| e.stage == st.stage).collect();
            evs.sort_by(|a, b| a.start.total_cmp(&b.start));
            for w in evs.windows(2) {
                prop_assert!(w[1].start >= w[0].end);
            }
        }
        prop_assert_eq!(r.clone(), simulate(&mm, &tp, &LookupModel::Ideal, overlap).unwrap());
    }

    #[test]
    fn surrogate_is_pure_and_floored(seed in any::<u64>(), noise_seed in any::<u64>()) {
        let p = sample_random(seed);
        let sp = SurrogateParams { seed: noise_seed, ..SurrogateParams::default() };
        let a = surrogate_loss(&p, &sp);
        prop_assert_eq!(a, surrogate_loss(&p, &sp));
        prop_assert!(a.log_loss >= 0.01);
    }
}
