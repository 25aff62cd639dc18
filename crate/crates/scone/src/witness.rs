//! Lift witness completion and verification.
//!
//! Both projection theorems are constructive: when the exact circuit test
//! holds, the lift variables are filled bottom-up by nested square roots,
//!
//! ```text
//! y_{1,l} = √(u·w),   y_{k,i} = √(y_{k−1,2i−1} · y_{k−1,2i}),
//! ```
//!
//! and every block of the circuit matrix becomes positive semidefinite, the
//! chain inequalities holding with equality.
//!
//! On the primal side the definition `x_β := x_{m,1}/Θ` is circular when `p`
//! is not a power of two (`x_β` feeds the leaf slots that produce `x_{m,1}`).
//! The fixed point resolves in closed form: `t = Θ·x_β` must satisfy
//! `t^p = Π c_α^{p_α}`, so `x_β = Π (c_α/λ_α)^{λ_α}` is exactly the circuit
//! number. `singleton_theta_gap_is_tiny` below validates this against the
//! completed chain for p ∈ {3, 5, 6, 7}.
//!
//! Witness values are doubles (the lift needs real square roots); exact
//! accept/reject decisions stay in [`crate::certify`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::certify::{
    check_dual_circuit, check_primal_circuit, circuit_number, CertifyError, CircuitCoefficients,
};
use crate::circuits::{Circuit, Parity};
use crate::forms::rat_to_f64;
use crate::liftrep::{
    leaf_slots, theta, BlockBody, BlockSpec, BlockTag, CircuitMatrix, LeafSlot, VarKind, VarRef,
};
use num_traits::Zero;

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("assignment is missing variable {0}")]
    MissingVariable(String),
}

/// A total assignment of values to named variables.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct Assignment {
    values: BTreeMap<VarRef, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Assignment::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (VarRef, f64)>) -> Self {
        Assignment {
            values: pairs.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, var: VarRef, value: f64) {
        self.values.insert(var, value);
    }

    pub fn get(&self, var: &VarRef) -> Option<f64> {
        self.values.get(var).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarRef, f64)> {
        self.values.iter().map(|(v, &x)| (v, x))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// JSON object mapping variable ids to values.
    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .map(|(v, &x)| (v.id(), serde_json::json!(x)))
            .collect();
        serde_json::Value::Object(map)
    }
}

/// Outcome of checking an assignment against a block list.
#[derive(Clone, PartialEq, Debug)]
pub struct VerifyReport {
    pub ok: bool,
    pub worst_block: Option<BlockTag>,
    /// Minimum over blocks of the block margin: the entry for singletons,
    /// `min(a, c, det/scale)` with `scale = max(1, |a|+|c|)²` for 2×2 blocks.
    pub worst_margin: f64,
}

/// Check every block of a circuit matrix: diagonal entries and (scaled)
/// determinants must stay above `−tol`.
pub fn verify_assignment(
    matrix: &CircuitMatrix,
    assignment: &Assignment,
    tol: f64,
) -> Result<VerifyReport, WitnessError> {
    verify_blocks(matrix.blocks(), assignment, tol)
}

/// As [`verify_assignment`], for a standalone block list (e.g. a matrix plus
/// its odd-extension block).
pub fn verify_blocks(
    blocks: &[BlockSpec],
    assignment: &Assignment,
    tol: f64,
) -> Result<VerifyReport, WitnessError> {
    let mut worst_margin = f64::INFINITY;
    let mut worst_block = None;
    for block in blocks {
        let margin = block_margin(block, assignment)?;
        if margin < worst_margin {
            worst_margin = margin;
            worst_block = Some(block.tag);
        }
    }
    Ok(VerifyReport {
        ok: worst_margin >= -tol,
        worst_block,
        worst_margin,
    })
}

fn block_margin(block: &BlockSpec, assignment: &Assignment) -> Result<f64, WitnessError> {
    let eval = |entry: &crate::liftrep::AffineEntry| -> Result<f64, WitnessError> {
        entry
            .eval_with(|v| assignment.get(v))
            .ok_or_else(|| missing_var(entry, assignment))
    };
    match &block.body {
        BlockBody::Singleton(entry) => eval(entry),
        BlockBody::Sym2 { a, b, c } => {
            let av = eval(a)?;
            let bv = eval(b)?;
            let cv = eval(c)?;
            let det = av * cv - bv * bv;
            let scale = 1.0f64.max(av.abs() + cv.abs()).powi(2);
            Ok(av.min(cv).min(det / scale))
        }
    }
}

fn missing_var(entry: &crate::liftrep::AffineEntry, assignment: &Assignment) -> WitnessError {
    let id = entry
        .vars()
        .find(|v| assignment.get(v).is_none())
        .map(|v| v.id())
        .unwrap_or_default();
    WitnessError::MissingVariable(id)
}

/// Square-root chain over the leaf slot values: level 1 holds
/// `√(s_{2l−1}·s_{2l})`, level `k` the pairwise geometric means of level
/// `k−1`. Level `k` has `2^{m−k}` values.
fn chain_levels(slot_values: &[f64], m: u32) -> Vec<Vec<f64>> {
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(m as usize);
    let mut current: Vec<f64> = slot_values
        .chunks(2)
        .map(|pair| (pair[0] * pair[1]).sqrt())
        .collect();
    levels.push(current.clone());
    for _ in 2..=m {
        current = current
            .chunks(2)
            .map(|pair| (pair[0] * pair[1]).sqrt())
            .collect();
        levels.push(current.clone());
    }
    levels
}

/// Complete a dual witness: accept iff the exact dual circuit test holds,
/// then fill the `y` chain by nested square roots. Odd circuits first set
/// `y_β := |v_β|` and run the even construction with `y_β` in the `v_β`
/// role. The returned assignment covers every variable of
/// [`crate::liftrep::dual_circuit_matrix`] (plus `v_β` itself for odd
/// circuits, so the odd-extension block can be checked too).
pub fn complete_dual_witness(
    values: &CircuitCoefficients,
    circuit: &Circuit,
) -> Option<Assignment> {
    if !check_dual_circuit(values, circuit) {
        return None;
    }
    let cid = circuit.id();
    let mut assignment = Assignment::new();
    let outer_f64: Vec<f64> = values.outer().iter().map(rat_to_f64).collect();
    for (point, &value) in circuit.outer().iter().zip(&outer_f64) {
        assignment.insert(VarRef::global(VarKind::DualCoord(point.clone())), value);
    }
    let v_beta = rat_to_f64(values.inner());
    assignment.insert(
        VarRef::global(VarKind::DualCoord(circuit.inner().clone())),
        v_beta,
    );
    let beta_value = match circuit.parity() {
        Parity::Even => v_beta,
        Parity::Odd => {
            let abs = v_beta.abs();
            assignment.insert(VarRef::scoped(VarKind::LiftDualBeta, &cid), abs);
            abs
        }
    };

    let slots = leaf_slots(circuit.bary());
    complete_dual_into(&mut assignment, circuit, &slots, &outer_f64, beta_value);
    Some(assignment)
}

fn complete_dual_into(
    assignment: &mut Assignment,
    circuit: &Circuit,
    slots: &[LeafSlot],
    outer_f64: &[f64],
    beta_value: f64,
) {
    let m = circuit.bary().m();
    if m == 1 {
        return; // no lift chain
    }
    let cid = circuit.id();
    let slot_values: Vec<f64> = slots
        .iter()
        .map(|slot| match slot {
            LeafSlot::Outer(idx) => outer_f64[*idx],
            LeafSlot::Beta => beta_value,
        })
        .collect();
    let levels = chain_levels(&slot_values, m - 1);
    for (level_idx, level) in levels.iter().enumerate() {
        let k = level_idx as u32 + 1;
        for (i, &value) in level.iter().enumerate() {
            assignment.insert(
                VarRef::scoped(
                    VarKind::LiftDual {
                        k,
                        i: i as u64 + 1,
                    },
                    &cid,
                ),
                value,
            );
        }
    }
}

/// Complete a primal witness: accept iff the exact primal test holds, set
/// `x_β` to the circuit number, `t = Θ·x_β`, and fill the `x` chain by
/// nested square roots over the leaf multiset `{c_α (p_α), t (2^m − p)}`.
/// When some `c_α = 0` the whole lift collapses to zero (membership then
/// forces `c_β ≥ 0` resp. `c_β = 0`).
pub fn complete_primal_witness(
    coeffs: &CircuitCoefficients,
    circuit: &Circuit,
) -> Result<Option<Assignment>, CertifyError> {
    if !check_primal_circuit(coeffs, circuit)? {
        return Ok(None);
    }
    let cid = circuit.id();
    let mut assignment = Assignment::new();
    let outer_f64: Vec<f64> = coeffs.outer().iter().map(rat_to_f64).collect();
    for (point, &value) in circuit.outer().iter().zip(&outer_f64) {
        assignment.insert(VarRef::global(VarKind::CoeffOuter(point.clone())), value);
    }
    assignment.insert(
        VarRef::global(VarKind::CoeffInner),
        rat_to_f64(coeffs.inner()),
    );

    let m = circuit.bary().m();
    if coeffs.outer().iter().any(Zero::is_zero) {
        assignment.insert(VarRef::scoped(VarKind::LiftPrimalBeta, &cid), 0.0);
        for k in 1..=m {
            for i in 1..=(1u64 << (m - k)) {
                assignment.insert(VarRef::scoped(VarKind::LiftPrimal { k, i }, &cid), 0.0);
            }
        }
        return Ok(Some(assignment));
    }

    let x_beta = circuit_number(coeffs, circuit)?;
    assignment.insert(VarRef::scoped(VarKind::LiftPrimalBeta, &cid), x_beta);
    let t = theta(circuit.bary()) * x_beta;
    let slots = leaf_slots(circuit.bary());
    let slot_values: Vec<f64> = slots
        .iter()
        .map(|slot| match slot {
            LeafSlot::Outer(idx) => outer_f64[*idx],
            LeafSlot::Beta => t,
        })
        .collect();
    let levels = chain_levels(&slot_values, m);
    for (level_idx, level) in levels.iter().enumerate() {
        let k = level_idx as u32 + 1;
        for (i, &value) in level.iter().enumerate() {
            assignment.insert(
                VarRef::scoped(
                    VarKind::LiftPrimal {
                        k,
                        i: i as u64 + 1,
                    },
                    &cid,
                ),
                value,
            );
        }
    }
    Ok(Some(assignment))
}
