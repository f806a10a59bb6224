use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DesignPoint, OpChoice, SpaceDescriptor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<String>,
}

/// Validates against the default menus.
pub fn validate(point: &DesignPoint) -> ValidationReport {
    validate_in(&SpaceDescriptor::default(), point)
}

pub fn validate_in(space: &SpaceDescriptor, point: &DesignPoint) -> ValidationReport {
    let mut v = Vec::new();
    let m = &point.model;

    if m.blocks.len() != space.num_blocks {
        v.push(format!("model: expected {} blocks, found {}", space.num_blocks, m.blocks.len()));
    }
    if !space.weight_bits.contains(&m.final_fc_bits) {
        v.push(format!("final FC: weight_bits {} not in menu", m.final_fc_bits));
    }
    if m.num_sparse_features != space.num_sparse_features {
        v.push(format!(
            "model: num_sparse_features {} differs from space ({})",
            m.num_sparse_features, space.num_sparse_features
        ));
    }
    if m.num_sparse_features < 2 {
        v.push("model: num_sparse_features must be >= 2".to_string());
    }
    if m.embedding_dim == 0 || m.dense_in_dim == 0 || m.embedding_rows == 0 {
        v.push("model: embedding_dim, dense_in_dim and embedding_rows must be positive".to_string());
    }

    for (pos, b) in m.blocks.iter().enumerate() {
        let i = pos + 1;
        if b.index != i {
            v.push(format!("block {i}: index field is {}", b.index));
        }
        if b.dense_ops.is_empty() {
            v.push(format!("block {i}: dense branch empty"));
        }
        if b.sparse_ops.is_empty() {
            v.push(format!("block {i}: sparse branch empty"));
        }
        check_branch(space, i, "dense", &b.dense_ops, &space.dense_ops, &mut v);
        check_branch(space, i, "sparse", &b.sparse_ops, &space.sparse_ops, &mut v);
        if !space.dim_d.contains(&b.dim_d) {
            v.push(format!("block {i}: dim_d {} not in menu", b.dim_d));
        }
        if !space.dim_s.contains(&b.dim_s) {
            v.push(format!("block {i}: dim_s {} not in menu", b.dim_s));
        }
    }

    let r = &point.reram;
    if !space.dac_bits.contains(&r.dac_bits) {
        v.push(format!("reram: dac_bits {} not in menu", r.dac_bits));
    }
    if !space.cell_bits.contains(&r.cell_bits) {
        v.push(format!("reram: cell_bits {} not in menu", r.cell_bits));
    }
    if !space.xbar_size.contains(&r.xbar_size) {
        v.push(format!("reram: xbar_size {} not in menu", r.xbar_size));
    }
    if !space.adc_bits.contains(&r.adc_bits) {
        v.push(format!("reram: adc_bits {} not in menu", r.adc_bits));
    }
    if !r.is_feasible() {
        v.push("reram: adc_bits < dac_bits + cell_bits".to_string());
    }

    let expected = DesignPoint::new(point.model.clone(), point.reram);
    if expected.point_id != point.point_id {
        v.push("point_id: does not match canonical content hash".to_string());
    }

    ValidationReport { ok: v.is_empty(), violations: v }
}

fn check_branch(
    space: &SpaceDescriptor,
    block: usize,
    branch: &str,
    ops: &[OpChoice],
    menu: &[super::OperatorKind],
    v: &mut Vec<String>,
) {
    let mut seen = BTreeSet::new();
    for op in ops {
        if !menu.contains(&op.kind) {
            v.push(format!("block {block}: {} not allowed in {branch} branch", op.kind));
        }
        if !seen.insert(op.kind) {
            v.push(format!("block {block}: {} selected twice in {branch} branch", op.kind));
        }
        if !space.weight_bits.contains(&op.weight_bits) {
            v.push(format!("block {block}: {} weight_bits {} not in menu", op.kind, op.weight_bits));
        }
        if op.inputs.is_empty() {
            v.push(format!("block {block}: {} has no inputs", op.kind));
        }
        for &s in &op.inputs {
            if s >= block {
                v.push(format!("block {block}: {} input {s} is not a predecessor", op.kind));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{ReRAMConfig};
    use super::*;

    fn rehash(p: &DesignPoint) -> DesignPoint {
        DesignPoint::new(p.model.clone(), p.reram)
    }

    #[test]
    fn minimal_point_is_ok() {
        let r = validate(&minimal_point());
        assert!(r.ok, "{:?}", r.violations);
    }

    #[test]
    fn empty_sparse_branch_is_named() {
        let mut p = minimal_point();
        p.model.blocks[2].sparse_ops.clear();
        let r = validate(&rehash(&p));
        assert!(!r.ok);
        assert!(r.violations.contains(&"block 3: sparse branch empty".to_string()));
    }

    #[test]
    fn adc_feasibility_rule() {
        let mut p = minimal_point();
        p.reram = ReRAMConfig { dac_bits: 2, cell_bits: 2, xbar_size: 16, adc_bits: 4 };
        assert!(validate(&rehash(&p)).ok);

        p.reram.adc_bits = 3;
        let r = validate(&rehash(&p));
        assert!(r.violations.contains(&"reram: adc_bits < dac_bits + cell_bits".to_string()));
        assert!(r.violations.contains(&"reram: adc_bits 3 not in menu".to_string()));
    }

    #[test]
    fn forward_edge_is_rejected() {
        let mut p = minimal_point();
        p.model.blocks[1].dense_ops[0].inputs.insert(5);
        let r = validate(&rehash(&p));
        assert!(r.violations.iter().any(|s| s.starts_with("block 2: FC input 5")));
    }

    #[test]
    fn six_bit_weights_are_excluded() {
        let mut p = minimal_point();
        p.model.blocks[0].dense_ops[0].weight_bits = 6;
        assert!(!validate(&rehash(&p)).ok);
    }

    #[test]
    fn stale_id_is_reported() {
        let mut p = minimal_point();
        p.model.blocks[0].dim_d = 32;
        let r = validate(&p);
        assert_eq!(r.violations, vec!["point_id: does not match canonical content hash".to_string()]);
    }

    #[test]
    fn misplaced_operator_kind() {
        let mut p = minimal_point();
        p.model.blocks[0].dense_ops[0].kind = super::super::OperatorKind::Efc;
        let r = validate(&rehash(&p));
        assert!(r.violations.iter().any(|s| s == "block 1: EFC not allowed in dense branch"));
    }
}
