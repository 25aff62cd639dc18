//! Symbolic circuit matrices and their second-order form.
//!
//! For a circuit with barycentric data `λ_α = p_α/p` and `m = ⌈log₂ p⌉`, the
//! dual circuit matrix is the block-diagonal matrix with blocks
//!
//! ```text
//! [[y_{k−1,2i−1}, y_{k,i}], [y_{k,i}, y_{k−1,2i}]]   k ∈ {2,…,m−1}, i ∈ [2^{m−k}]
//! [[y_{m−1,1}, v_β], [v_β, y_{m−1,2}]]
//! (v_β)
//! [[u, y_{1,l}], [y_{1,l}, w]]                        l ∈ [2^{m−1}]
//! ```
//!
//! where the leaf slots `u, w` run through the multiset holding each `v_α`
//! exactly `p_α` times and `v_β` exactly `2^m − p` times. PSD-feasibility of
//! the matrix projects onto the dual circuit cone `{v ≥ 0, v_β^p ≤ Π
//! v_α^{p_α}}`: the nested `y` variables linearise the weighted geometric
//! mean one square root at a time.
//!
//! The primal circuit matrix is the analogous chain in variables
//! `(x_β, x_{k,i})` with two singleton blocks `x_{m,1} − Θ·x_β` and
//! `x_β + c_β`, where `Θ = Π λ_α^{λ_α}`, and leaf slots drawn from
//! `{c_α (p_α times)} ∪ {Θ·x_β (2^m − p times)}`.
//!
//! Every matrix entry is an affine form in named variables, so a 2×2 block
//! `[[a,b],[b,c]]` rewrites to the second-order constraint
//! `‖(2b, a−c)‖₂ ≤ a+c` and a 1×1 block to a linear inequality.
//!
//! The slot order inside the leaf multiset does not affect the projected
//! feasible region (only the product of the leaves matters), but it is fixed
//! deterministically — outer points in lexicographic order, β-slots last —
//! so that emitted problems are reproducible byte for byte.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{Pow, ToPrimitive};
use thiserror::Error;

use crate::certify::kahan_sum;
use crate::circuits::{BarycentricData, Circuit, Parity};
use crate::forms::{parse_rational, ExponentVector, Rat};

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("odd extension requires an odd circuit")]
    OddExtensionOnEven,
}

/// Which cone a circuit matrix describes.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Primal,
    Dual,
}

/// The role of a named variable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum VarKind {
    /// Coefficient `c_α` of an outer point of one circuit.
    CoeffOuter(ExponentVector),
    /// Coefficient `c_β` of the inner point of one circuit.
    CoeffInner,
    /// Dual coordinate `v_γ` of a support point.
    DualCoord(ExponentVector),
    /// Primal lift variable `x_{k,i}`, `k ∈ [m]`, `i ∈ [2^{m−k}]`.
    LiftPrimal { k: u32, i: u64 },
    /// Primal lift variable `x_β`.
    LiftPrimalBeta,
    /// Dual lift variable `y_{k,i}`, `k ∈ [m−1]`, `i ∈ [2^{m−k}]`.
    LiftDual { k: u32, i: u64 },
    /// Dual lift variable `y_β` (odd circuits).
    LiftDualBeta,
    /// Per-circuit share `c^{A,β}_γ` of a decomposed coefficient.
    DecompCoeff(ExponentVector),
    /// Slack for a degenerate singleton term `s_α·|x|^α`, `s_α ≥ 0`.
    Slack(ExponentVector),
}

impl VarKind {
    pub fn kind_str(&self) -> &'static str {
        match self {
            VarKind::CoeffOuter(_) => "coeff_outer",
            VarKind::CoeffInner => "coeff_inner",
            VarKind::DualCoord(_) => "dual_coord",
            VarKind::LiftPrimal { .. } => "lift_primal",
            VarKind::LiftPrimalBeta => "lift_primal_beta",
            VarKind::LiftDual { .. } => "lift_dual",
            VarKind::LiftDualBeta => "lift_dual_beta",
            VarKind::DecompCoeff(_) => "decomp_coeff",
            VarKind::Slack(_) => "slack",
        }
    }
}

/// A named variable. Lift and decomposition variables are scoped to a
/// circuit by its canonical id; coefficient, dual-coordinate and slack
/// variables are global.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VarRef {
    circuit: Option<String>,
    kind: VarKind,
}

impl VarRef {
    pub fn global(kind: VarKind) -> Self {
        VarRef {
            circuit: None,
            kind,
        }
    }

    pub fn scoped(kind: VarKind, circuit_id: &str) -> Self {
        VarRef {
            circuit: Some(circuit_id.to_string()),
            kind,
        }
    }

    pub fn kind(&self) -> &VarKind {
        &self.kind
    }

    pub fn circuit_id(&self) -> Option<&str> {
        self.circuit.as_deref()
    }

    /// Stable id: `c[(0)]`, `cbeta`, `v[(2)]`, `x[1][1]@<circuit>`,
    /// `xbeta@<circuit>`, `y[2][1]@<circuit>`, `ybeta@<circuit>`,
    /// `d[(2)]@<circuit>`, `s[(0)]`. The id determines kind and indices.
    pub fn id(&self) -> String {
        let base = match &self.kind {
            VarKind::CoeffOuter(p) => format!("c[{}]", p.label()),
            VarKind::CoeffInner => "cbeta".to_string(),
            VarKind::DualCoord(p) => format!("v[{}]", p.label()),
            VarKind::LiftPrimal { k, i } => format!("x[{k}][{i}]"),
            VarKind::LiftPrimalBeta => "xbeta".to_string(),
            VarKind::LiftDual { k, i } => format!("y[{k}][{i}]"),
            VarKind::LiftDualBeta => "ybeta".to_string(),
            VarKind::DecompCoeff(p) => format!("d[{}]", p.label()),
            VarKind::Slack(p) => format!("s[{}]", p.label()),
        };
        match &self.circuit {
            Some(cid) => format!("{base}@{cid}"),
            None => base,
        }
    }

    /// Inverse of [`VarRef::id`].
    pub fn parse_id(id: &str) -> Option<VarRef> {
        let (base, circuit) = match id.split_once('@') {
            Some((b, c)) if !c.is_empty() => (b, Some(c.to_string())),
            Some(_) => return None,
            None => (id, None),
        };
        let kind = if base == "cbeta" {
            VarKind::CoeffInner
        } else if base == "xbeta" {
            VarKind::LiftPrimalBeta
        } else if base == "ybeta" {
            VarKind::LiftDualBeta
        } else if let Some(label) = bracket_payload(base, 'c') {
            VarKind::CoeffOuter(parse_point_label(label)?)
        } else if let Some(label) = bracket_payload(base, 'v') {
            VarKind::DualCoord(parse_point_label(label)?)
        } else if let Some(label) = bracket_payload(base, 'd') {
            VarKind::DecompCoeff(parse_point_label(label)?)
        } else if let Some(label) = bracket_payload(base, 's') {
            VarKind::Slack(parse_point_label(label)?)
        } else if let Some((k, i)) = indexed_payload(base, 'x') {
            VarKind::LiftPrimal { k, i }
        } else if let Some((k, i)) = indexed_payload(base, 'y') {
            VarKind::LiftDual { k, i }
        } else {
            return None;
        };
        Some(VarRef { circuit, kind })
    }
}

fn bracket_payload(base: &str, prefix: char) -> Option<&str> {
    let rest = base.strip_prefix(prefix)?;
    rest.strip_prefix('[')?.strip_suffix(']')
}

fn indexed_payload(base: &str, prefix: char) -> Option<(u32, u64)> {
    let rest = base.strip_prefix(prefix)?.strip_prefix('[')?;
    let (k, rest) = rest.split_once("][")?;
    let i = rest.strip_suffix(']')?;
    Some((k.parse().ok()?, i.parse().ok()?))
}

fn parse_point_label(label: &str) -> Option<ExponentVector> {
    let inner = label.strip_prefix('(')?.strip_suffix(')')?;
    let coords: Option<Vec<Rat>> = inner.split(',').map(|c| parse_rational(c).ok()).collect();
    Some(ExponentVector::new(coords?))
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// An affine form `Σ coef·var + const` with f64 coefficients. Variables are
/// unique within the term list.
#[derive(Clone, PartialEq, Debug)]
pub struct AffineEntry {
    terms: Vec<(f64, VarRef)>,
    constant: f64,
}

impl AffineEntry {
    pub fn constant(value: f64) -> Self {
        AffineEntry {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(var: VarRef) -> Self {
        AffineEntry {
            terms: vec![(1.0, var)],
            constant: 0.0,
        }
    }

    pub fn scaled_var(coef: f64, var: VarRef) -> Self {
        AffineEntry {
            terms: vec![(coef, var)],
            constant: 0.0,
        }
    }

    pub fn from_parts(terms: Vec<(f64, VarRef)>, constant: f64) -> Self {
        let mut entry = AffineEntry {
            terms: Vec::new(),
            constant,
        };
        for (coef, var) in terms {
            entry.accumulate(coef, var);
        }
        entry
    }

    pub fn terms(&self) -> &[(f64, VarRef)] {
        &self.terms
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    fn accumulate(&mut self, coef: f64, var: VarRef) {
        if let Some(slot) = self.terms.iter_mut().find(|(_, v)| *v == var) {
            slot.0 += coef;
        } else {
            self.terms.push((coef, var));
        }
        self.terms.retain(|(c, _)| *c != 0.0);
    }

    pub fn plus(&self, other: &AffineEntry) -> AffineEntry {
        let mut out = self.clone();
        out.constant += other.constant;
        for (coef, var) in &other.terms {
            out.accumulate(*coef, var.clone());
        }
        out
    }

    pub fn minus(&self, other: &AffineEntry) -> AffineEntry {
        self.plus(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> AffineEntry {
        AffineEntry {
            terms: self
                .terms
                .iter()
                .filter(|(c, _)| *c * factor != 0.0)
                .map(|(c, v)| (c * factor, v.clone()))
                .collect(),
            constant: self.constant * factor,
        }
    }

    /// Evaluate against a value lookup; `None` when a variable is missing.
    pub fn eval_with(&self, lookup: impl Fn(&VarRef) -> Option<f64>) -> Option<f64> {
        let mut total = self.constant;
        for (coef, var) in &self.terms {
            total += coef * lookup(var)?;
        }
        Some(total)
    }

    /// Rewrite every variable reference (used when decomposition variables
    /// replace the per-circuit coefficient placeholders).
    pub fn rename_vars(&self, rename: impl Fn(&VarRef) -> VarRef) -> AffineEntry {
        AffineEntry {
            terms: self.terms.iter().map(|(c, v)| (*c, rename(v))).collect(),
            constant: self.constant,
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = &VarRef> {
        self.terms.iter().map(|(_, v)| v)
    }
}

/// Role of a block inside a circuit matrix.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BlockTag {
    /// Linking block `[[·_{k−1,2i−1}, ·_{k,i}],[·_{k,i}, ·_{k−1,2i}]]`.
    Chain { k: u32, i: u64 },
    /// Dual block tying `v_β` to the top of the chain.
    Special,
    /// `(v_β)` on the dual side, `(x_β + c_β)` on the primal side.
    SingletonBeta,
    /// `(x_{m,1} − Θ·x_β)` on the primal side.
    SingletonTheta,
    /// Bottom block `[[u, ·_{1,l}],[·_{1,l}, w]]` over the leaf multiset.
    Leaf(u64),
    /// `[[x_β, c_β],[c_β, x_β]]` resp. `[[y_β, v_β],[v_β, y_β]]`.
    OddExtension,
}

impl fmt::Display for BlockTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockTag::Chain { k, i } => write!(f, "chain[{k}][{i}]"),
            BlockTag::Special => f.write_str("special"),
            BlockTag::SingletonBeta => f.write_str("singleton_beta"),
            BlockTag::SingletonTheta => f.write_str("singleton_theta"),
            BlockTag::Leaf(l) => write!(f, "leaf[{l}]"),
            BlockTag::OddExtension => f.write_str("odd_extension"),
        }
    }
}

/// Entries of a symmetric block: a single affine form, or `(a, b, c)` for
/// `[[a, b], [b, c]]`.
#[derive(Clone, PartialEq, Debug)]
pub enum BlockBody {
    Singleton(AffineEntry),
    Sym2 {
        a: AffineEntry,
        b: AffineEntry,
        c: AffineEntry,
    },
}

#[derive(Clone, PartialEq, Debug)]
pub struct BlockSpec {
    pub tag: BlockTag,
    pub body: BlockBody,
}

impl BlockSpec {
    pub fn size(&self) -> usize {
        match self.body {
            BlockBody::Singleton(_) => 1,
            BlockBody::Sym2 { .. } => 2,
        }
    }

    fn singleton(tag: BlockTag, entry: AffineEntry) -> Self {
        BlockSpec {
            tag,
            body: BlockBody::Singleton(entry),
        }
    }

    fn sym2(tag: BlockTag, a: AffineEntry, b: AffineEntry, c: AffineEntry) -> Self {
        BlockSpec {
            tag,
            body: BlockBody::Sym2 { a, b, c },
        }
    }

    pub fn vars(&self) -> Vec<&VarRef> {
        match &self.body {
            BlockBody::Singleton(e) => e.vars().collect(),
            BlockBody::Sym2 { a, b, c } => a.vars().chain(b.vars()).chain(c.vars()).collect(),
        }
    }
}

/// A symbolic block-diagonal circuit matrix together with its variable
/// registry, in deterministic order.
#[derive(Clone, PartialEq, Debug)]
pub struct CircuitMatrix {
    side: Side,
    circuit: Circuit,
    blocks: Vec<BlockSpec>,
    vars: Vec<VarRef>,
}

impl CircuitMatrix {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn vars(&self) -> &[VarRef] {
        &self.vars
    }

    pub fn count_blocks(&self, size: usize) -> usize {
        self.blocks.iter().filter(|b| b.size() == size).count()
    }

    /// Number of lift variables in the registry (chain variables plus the
    /// β-lifts; coefficient and dual-coordinate variables excluded).
    pub fn lift_var_count(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| {
                matches!(
                    v.kind(),
                    VarKind::LiftPrimal { .. }
                        | VarKind::LiftPrimalBeta
                        | VarKind::LiftDual { .. }
                        | VarKind::LiftDualBeta
                )
            })
            .count()
    }
}

/// One slot of the leaf multiset: an outer point (by index) or the β-slot.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum LeafSlot {
    Outer(usize),
    Beta,
}

/// The deterministic leaf multiset: each outer point repeated `p_α` times in
/// lexicographic order, then `2^m − p` β-slots. Leaf `l` takes slots
/// `2l−1, 2l`.
pub(crate) fn leaf_slots(bary: &BarycentricData) -> Vec<LeafSlot> {
    let mut slots = Vec::with_capacity(1usize << bary.m());
    for (idx, &pa) in bary.p_alpha().iter().enumerate() {
        for _ in 0..pa {
            slots.push(LeafSlot::Outer(idx));
        }
    }
    let beta_copies = (1u64 << bary.m()) - bary.p();
    for _ in 0..beta_copies {
        slots.push(LeafSlot::Beta);
    }
    slots
}

/// `Θ = Π λ_α^{λ_α}`.
///
/// `Θ^p = Π p_α^{p_α} / p^p` is rational, so for `p` a power of two the value
/// is obtained by exact square roots of a rational (giving Θ = 1/2 exactly
/// for `p = 2`); otherwise it is computed in the log domain with compensated
/// summation. Relative error ≤ 1e−14.
pub fn theta(bary: &BarycentricData) -> f64 {
    let p = bary.p();
    if p.is_power_of_two() {
        let mut numer = BigInt::from(1);
        for &pa in bary.p_alpha() {
            numer *= Pow::pow(&BigInt::from(pa), pa as u32);
        }
        let denom = Pow::pow(&BigInt::from(p), p as u32);
        let mut value = Rat::new(numer, denom).to_f64().unwrap_or(0.0);
        for _ in 0..bary.m() {
            value = value.sqrt();
        }
        value
    } else {
        let pf = p as f64;
        let log_theta = kahan_sum(
            bary.p_alpha()
                .iter()
                .map(|&pa| pa as f64 * (pa as f64).ln())
                .chain(std::iter::once(-pf * pf.ln())),
        ) / pf;
        log_theta.exp()
    }
}

fn lift_dual(cid: &str, k: u32, i: u64) -> VarRef {
    VarRef::scoped(VarKind::LiftDual { k, i }, cid)
}

fn lift_primal(cid: &str, k: u32, i: u64) -> VarRef {
    VarRef::scoped(VarKind::LiftPrimal { k, i }, cid)
}

/// The dual circuit matrix.
///
/// For even circuits the β-slot is the dual coordinate `v_β` itself; for odd
/// circuits the whole matrix is built with the lift `y_β` in place of `v_β`
/// and [`odd_extension`] supplies the coupling block `|v_β| ≤ y_β`.
///
/// Degenerate `m = 1` (`p = 2`): the singleton `(v_β)` plus one leaf
/// `[[u, v_β],[v_β, w]]` with `v_β` in the `y_{1,1}` role, no lift chain.
pub fn dual_circuit_matrix(circuit: &Circuit) -> CircuitMatrix {
    dual_matrix_with_slots(circuit, &leaf_slots(circuit.bary()))
}

pub(crate) fn dual_matrix_with_slots(circuit: &Circuit, slots: &[LeafSlot]) -> CircuitMatrix {
    let cid = circuit.id();
    let bary = circuit.bary();
    let m = bary.m();
    let beta_slot = match circuit.parity() {
        Parity::Even => VarRef::global(VarKind::DualCoord(circuit.inner().clone())),
        Parity::Odd => VarRef::scoped(VarKind::LiftDualBeta, &cid),
    };
    let outer_var = |idx: usize| VarRef::global(VarKind::DualCoord(circuit.outer()[idx].clone()));
    let slot_var = |slot: &LeafSlot| match slot {
        LeafSlot::Outer(idx) => outer_var(*idx),
        LeafSlot::Beta => beta_slot.clone(),
    };

    let mut blocks = Vec::new();
    if m == 1 {
        blocks.push(BlockSpec::singleton(
            BlockTag::SingletonBeta,
            AffineEntry::var(beta_slot.clone()),
        ));
        blocks.push(BlockSpec::sym2(
            BlockTag::Leaf(1),
            AffineEntry::var(slot_var(&slots[0])),
            AffineEntry::var(beta_slot.clone()),
            AffineEntry::var(slot_var(&slots[1])),
        ));
    } else {
        for k in 2..m {
            for i in 1..=(1u64 << (m - k)) {
                blocks.push(BlockSpec::sym2(
                    BlockTag::Chain { k, i },
                    AffineEntry::var(lift_dual(&cid, k - 1, 2 * i - 1)),
                    AffineEntry::var(lift_dual(&cid, k, i)),
                    AffineEntry::var(lift_dual(&cid, k - 1, 2 * i)),
                ));
            }
        }
        blocks.push(BlockSpec::sym2(
            BlockTag::Special,
            AffineEntry::var(lift_dual(&cid, m - 1, 1)),
            AffineEntry::var(beta_slot.clone()),
            AffineEntry::var(lift_dual(&cid, m - 1, 2)),
        ));
        blocks.push(BlockSpec::singleton(
            BlockTag::SingletonBeta,
            AffineEntry::var(beta_slot.clone()),
        ));
        for l in 1..=(1u64 << (m - 1)) {
            blocks.push(BlockSpec::sym2(
                BlockTag::Leaf(l),
                AffineEntry::var(slot_var(&slots[(2 * l - 2) as usize])),
                AffineEntry::var(lift_dual(&cid, 1, l)),
                AffineEntry::var(slot_var(&slots[(2 * l - 1) as usize])),
            ));
        }
    }

    let mut vars: Vec<VarRef> = (0..circuit.outer().len()).map(outer_var).collect();
    vars.push(beta_slot);
    for k in 1..m {
        for i in 1..=(1u64 << (m - k)) {
            vars.push(lift_dual(&cid, k, i));
        }
    }

    CircuitMatrix {
        side: Side::Dual,
        circuit: circuit.clone(),
        blocks,
        vars,
    }
}

/// The primal circuit matrix, symbolic in the coefficients `c_α`, `c_β` and
/// the lift `(x_β, x_{k,i})`.
pub fn primal_circuit_matrix(circuit: &Circuit) -> CircuitMatrix {
    primal_matrix_with_slots(circuit, &leaf_slots(circuit.bary()))
}

pub(crate) fn primal_matrix_with_slots(circuit: &Circuit, slots: &[LeafSlot]) -> CircuitMatrix {
    let cid = circuit.id();
    let bary = circuit.bary();
    let m = bary.m();
    let theta_value = theta(bary);
    let x_beta = VarRef::scoped(VarKind::LiftPrimalBeta, &cid);
    let outer_var = |idx: usize| VarRef::global(VarKind::CoeffOuter(circuit.outer()[idx].clone()));
    let slot_entry = |slot: &LeafSlot| match slot {
        LeafSlot::Outer(idx) => AffineEntry::var(outer_var(*idx)),
        LeafSlot::Beta => AffineEntry::scaled_var(theta_value, x_beta.clone()),
    };

    let mut blocks = Vec::new();
    for k in 2..=m {
        for i in 1..=(1u64 << (m - k)) {
            blocks.push(BlockSpec::sym2(
                BlockTag::Chain { k, i },
                AffineEntry::var(lift_primal(&cid, k - 1, 2 * i - 1)),
                AffineEntry::var(lift_primal(&cid, k, i)),
                AffineEntry::var(lift_primal(&cid, k - 1, 2 * i)),
            ));
        }
    }
    blocks.push(BlockSpec::singleton(
        BlockTag::SingletonTheta,
        AffineEntry::var(lift_primal(&cid, m, 1))
            .minus(&AffineEntry::scaled_var(theta_value, x_beta.clone())),
    ));
    blocks.push(BlockSpec::singleton(
        BlockTag::SingletonBeta,
        AffineEntry::var(x_beta.clone())
            .plus(&AffineEntry::var(VarRef::global(VarKind::CoeffInner))),
    ));
    for l in 1..=(1u64 << (m - 1)) {
        blocks.push(BlockSpec::sym2(
            BlockTag::Leaf(l),
            slot_entry(&slots[(2 * l - 2) as usize]),
            AffineEntry::var(lift_primal(&cid, 1, l)),
            slot_entry(&slots[(2 * l - 1) as usize]),
        ));
    }

    let mut vars: Vec<VarRef> = (0..circuit.outer().len()).map(outer_var).collect();
    vars.push(VarRef::global(VarKind::CoeffInner));
    vars.push(x_beta);
    for k in 1..=m {
        for i in 1..=(1u64 << (m - k)) {
            vars.push(lift_primal(&cid, k, i));
        }
    }

    CircuitMatrix {
        side: Side::Primal,
        circuit: circuit.clone(),
        blocks,
        vars,
    }
}

/// The coupling block for odd circuits: `[[x_β, c_β],[c_β, x_β]] ⪰ 0`
/// (`⇔ |c_β| ≤ x_β`) on the primal side, `[[y_β, v_β],[v_β, y_β]] ⪰ 0`
/// (`⇔ |v_β| ≤ y_β`) on the dual side.
pub fn odd_extension(side: Side, circuit: &Circuit) -> Result<BlockSpec, LiftError> {
    if circuit.parity() != Parity::Odd {
        return Err(LiftError::OddExtensionOnEven);
    }
    let cid = circuit.id();
    let (diag, off) = match side {
        Side::Primal => (
            VarRef::scoped(VarKind::LiftPrimalBeta, &cid),
            VarRef::global(VarKind::CoeffInner),
        ),
        Side::Dual => (
            VarRef::scoped(VarKind::LiftDualBeta, &cid),
            VarRef::global(VarKind::DualCoord(circuit.inner().clone())),
        ),
    };
    Ok(BlockSpec::sym2(
        BlockTag::OddExtension,
        AffineEntry::var(diag.clone()),
        AffineEntry::var(off),
        AffineEntry::var(diag),
    ))
}

/// A second-order constraint `‖rows‖₂ ≤ rhs` with affine rows.
#[derive(Clone, PartialEq, Debug)]
pub struct SocConstraint {
    pub rows: Vec<AffineEntry>,
    pub rhs: AffineEntry,
}

impl SocConstraint {
    /// `rhs − ‖rows‖₂` under a value lookup.
    pub fn margin_with(&self, lookup: impl Fn(&VarRef) -> Option<f64> + Copy) -> Option<f64> {
        let mut norm_sq = 0.0;
        for row in &self.rows {
            let v = row.eval_with(lookup)?;
            norm_sq += v * v;
        }
        Some(self.rhs.eval_with(lookup)? - norm_sq.sqrt())
    }
}

/// Result of rewriting one block: a second-order constraint for 2×2 blocks,
/// a linear inequality `entry ≥ 0` for singletons.
#[derive(Clone, PartialEq, Debug)]
pub enum SocOrLinear {
    Soc(SocConstraint),
    Linear(AffineEntry),
}

/// Rewrite a block as a second-order condition: `[[a,b],[b,c]] ⪰ 0` iff
/// `‖(2b, a−c)‖₂ ≤ a + c`, and `(a) ⪰ 0` iff `a ≥ 0`.
pub fn psd2x2_to_soc(block: &BlockSpec) -> SocOrLinear {
    match &block.body {
        BlockBody::Singleton(entry) => SocOrLinear::Linear(entry.clone()),
        BlockBody::Sym2 { a, b, c } => SocOrLinear::Soc(SocConstraint {
            rows: vec![b.scale(2.0), a.minus(c)],
            rhs: a.plus(c),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::Circuit;

    fn ev(coords: &[i64]) -> ExponentVector {
        ExponentVector::from_ints(coords)
    }

    fn line_circuit(a: i64, b: i64, inner: i64, parity: Parity) -> Circuit {
        Circuit::build(vec![ev(&[a]), ev(&[b])], ev(&[inner]), parity)
            .unwrap()
            .unwrap()
    }

    fn entry_var(entry: &AffineEntry) -> &VarRef {
        assert_eq!(entry.terms().len(), 1);
        assert_eq!(entry.terms()[0].0, 1.0);
        &entry.terms()[0].1
    }

    #[test]
    fn dual_matrix_p3_structure() {
        let circ = line_circuit(0, 6, 2, Parity::Even);
        let mat = dual_circuit_matrix(&circ);
        assert_eq!(mat.count_blocks(2), 3);
        assert_eq!(mat.count_blocks(1), 1);
        assert_eq!(mat.lift_var_count(), 2);

        let v0 = VarRef::global(VarKind::DualCoord(ev(&[0])));
        let v2 = VarRef::global(VarKind::DualCoord(ev(&[2])));
        let v6 = VarRef::global(VarKind::DualCoord(ev(&[6])));
        let y11 = lift_dual(&circ.id(), 1, 1);
        let y12 = lift_dual(&circ.id(), 1, 2);

        // Special [[y11, v2],[v2, y12]]; (v2); Leaf1 [[v0,y11],[y11,v0]];
        // Leaf2 [[v6,y12],[y12,v2]].
        match &mat.blocks()[0].body {
            BlockBody::Sym2 { a, b, c } => {
                assert_eq!(entry_var(a), &y11);
                assert_eq!(entry_var(b), &v2);
                assert_eq!(entry_var(c), &y12);
            }
            _ => panic!("special block must be 2×2"),
        }
        match &mat.blocks()[1].body {
            BlockBody::Singleton(e) => assert_eq!(entry_var(e), &v2),
            _ => panic!("singleton expected"),
        }
        match &mat.blocks()[2].body {
            BlockBody::Sym2 { a, b, c } => {
                assert_eq!(entry_var(a), &v0);
                assert_eq!(entry_var(b), &y11);
                assert_eq!(entry_var(c), &v0);
            }
            _ => panic!(),
        }
        match &mat.blocks()[3].body {
            BlockBody::Sym2 { a, b, c } => {
                assert_eq!(entry_var(a), &v6);
                assert_eq!(entry_var(b), &y12);
                assert_eq!(entry_var(c), &v2);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn dual_matrix_degenerate_p2() {
        let circ = line_circuit(0, 2, 1, Parity::Even);
        assert_eq!(circ.bary().p(), 2);
        let mat = dual_circuit_matrix(&circ);
        assert_eq!(mat.count_blocks(1), 1);
        assert_eq!(mat.count_blocks(2), 1);
        assert_eq!(mat.lift_var_count(), 0);
        // The leaf is [[v0, v1],[v1, v2]] with v1 in the y-role.
        match &mat.blocks()[1].body {
            BlockBody::Sym2 { a, b, c } => {
                assert_eq!(entry_var(a), &VarRef::global(VarKind::DualCoord(ev(&[0]))));
                assert_eq!(entry_var(b), &VarRef::global(VarKind::DualCoord(ev(&[1]))));
                assert_eq!(entry_var(c), &VarRef::global(VarKind::DualCoord(ev(&[2]))));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn dual_matrix_p4_has_no_chain_and_no_beta_slots() {
        let circ = line_circuit(0, 4, 1, Parity::Even);
        assert_eq!(circ.bary().p(), 4);
        let mat = dual_circuit_matrix(&circ);
        assert!(mat
            .blocks()
            .iter()
            .all(|b| !matches!(b.tag, BlockTag::Chain { .. })));
        assert_eq!(mat.lift_var_count(), 2);
        // Leaf slots: p₀ = 3 copies of v0, one v4, no β-slot (2² − 4 = 0).
        let slots = leaf_slots(circ.bary());
        assert_eq!(
            slots,
            vec![
                LeafSlot::Outer(0),
                LeafSlot::Outer(0),
                LeafSlot::Outer(0),
                LeafSlot::Outer(1)
            ]
        );
    }

    #[test]
    fn primal_matrix_p2_structure() {
        let circ = line_circuit(0, 2, 1, Parity::Odd);
        let mat = primal_circuit_matrix(&circ);
        assert_eq!(mat.count_blocks(2), 1);
        assert_eq!(mat.count_blocks(1), 2);
        assert_eq!(mat.lift_var_count(), 2);

        // x11 − ½·xβ ≥ 0 with Θ exactly one half.
        let BlockBody::Singleton(theta_entry) = &mat.blocks()[0].body else {
            panic!()
        };
        assert_eq!(mat.blocks()[0].tag, BlockTag::SingletonTheta);
        assert_eq!(theta_entry.terms().len(), 2);
        assert_eq!(theta_entry.terms()[0].0, 1.0);
        assert_eq!(theta_entry.terms()[1].0, -0.5);

        // xβ + cβ ≥ 0.
        let BlockBody::Singleton(beta_entry) = &mat.blocks()[1].body else {
            panic!()
        };
        assert_eq!(mat.blocks()[1].tag, BlockTag::SingletonBeta);
        assert_eq!(beta_entry.terms().len(), 2);

        // [[c0, x11],[x11, c2]].
        let BlockBody::Sym2 { a, b, c } = &mat.blocks()[2].body else {
            panic!()
        };
        assert_eq!(entry_var(a), &VarRef::global(VarKind::CoeffOuter(ev(&[0]))));
        assert_eq!(
            entry_var(b),
            &VarRef::scoped(VarKind::LiftPrimal { k: 1, i: 1 }, &circ.id())
        );
        assert_eq!(entry_var(c), &VarRef::global(VarKind::CoeffOuter(ev(&[2]))));
    }

    #[test]
    fn primal_matrix_p3_leaf_multiset() {
        let circ = line_circuit(0, 6, 2, Parity::Even);
        let mat = primal_circuit_matrix(&circ);
        // Chain [[x11,x21],[x21,x12]], SingletonTheta, SingletonBeta, two leaves.
        assert_eq!(mat.count_blocks(2), 3);
        assert_eq!(mat.count_blocks(1), 2);
        assert_eq!(mat.lift_var_count(), 4);
        let slots = leaf_slots(circ.bary());
        assert_eq!(
            slots,
            vec![
                LeafSlot::Outer(0),
                LeafSlot::Outer(0),
                LeafSlot::Outer(1),
                LeafSlot::Beta
            ]
        );
    }

    #[test]
    fn block_count_formulas() {
        for p in 2u64..=24 {
            for k in 1..p {
                if num_integer::gcd(k, p) != 1 {
                    continue;
                }
                let circ = line_circuit(0, p as i64, k as i64, Parity::Even);
                assert_eq!(circ.bary().p(), p, "p mismatch for ({p},{k})");
                let m = circ.bary().m();
                let two = (1usize << m) - 1;
                let dual = dual_circuit_matrix(&circ);
                assert_eq!(dual.count_blocks(2), two);
                assert_eq!(dual.count_blocks(1), 1);
                assert_eq!(dual.lift_var_count(), (1usize << m) - 2);
                let primal = primal_circuit_matrix(&circ);
                assert_eq!(primal.count_blocks(2), two);
                assert_eq!(primal.count_blocks(1), 2);
                assert_eq!(primal.lift_var_count(), 1usize << m);
                // Leaf multiset conservation: Σ p_α + (2^m − p) slots = 2^m.
                assert_eq!(leaf_slots(circ.bary()).len(), 1usize << m);
                break;
            }
        }
    }

    #[test]
    fn leaf_multiplicities_across_blocks() {
        // p = 5, m = 3: each v_α on the leaf diagonals p_α times, the β-slot
        // 2^m − p = 3 times.
        let circ = line_circuit(0, 5, 2, Parity::Even);
        let mat = dual_circuit_matrix(&circ);
        let mut counts: std::collections::BTreeMap<VarRef, usize> = Default::default();
        for block in mat.blocks() {
            if !matches!(block.tag, BlockTag::Leaf(_)) {
                continue;
            }
            let BlockBody::Sym2 { a, c, .. } = &block.body else {
                panic!("leaves are 2×2")
            };
            for entry in [a, c] {
                *counts.entry(entry_var(entry).clone()).or_default() += 1;
            }
        }
        let bary = circ.bary();
        for (idx, point) in circ.outer().iter().enumerate() {
            let var = VarRef::global(VarKind::DualCoord(point.clone()));
            assert_eq!(counts[&var] as u64, bary.p_alpha()[idx]);
        }
        let beta = VarRef::global(VarKind::DualCoord(circ.inner().clone()));
        assert_eq!(counts[&beta] as u64, (1u64 << bary.m()) - bary.p());
    }

    #[test]
    fn theta_values() {
        let p2 = line_circuit(0, 2, 1, Parity::Even);
        assert_eq!(theta(p2.bary()), 0.5);

        let p3 = line_circuit(0, 6, 2, Parity::Even);
        let expected = (4.0f64 / 27.0).cbrt(); // (2/3)^{2/3}·(1/3)^{1/3}
        assert!((theta(p3.bary()) - expected).abs() <= 1e-14 * expected);

        let p4 = line_circuit(0, 4, 1, Parity::Even);
        let expected = (27.0f64 / 256.0).sqrt().sqrt();
        assert_eq!(theta(p4.bary()), expected);
    }

    #[test]
    fn odd_extension_blocks() {
        let odd = line_circuit(0, 2, 1, Parity::Odd);
        let primal = odd_extension(Side::Primal, &odd).unwrap();
        assert_eq!(primal.tag, BlockTag::OddExtension);
        let dual = odd_extension(Side::Dual, &odd).unwrap();
        let BlockBody::Sym2 { a, b, c } = &dual.body else {
            panic!()
        };
        assert_eq!(entry_var(a), entry_var(c));
        assert_eq!(entry_var(b), &VarRef::global(VarKind::DualCoord(ev(&[1]))));

        let even = line_circuit(0, 2, 1, Parity::Even);
        assert!(odd_extension(Side::Primal, &even).is_err());
    }

    #[test]
    fn soc_rewriting_matches_eigenvalues() {
        let holds = |a: f64, b: f64, c: f64| {
            let block = BlockSpec::sym2(
                BlockTag::Leaf(1),
                AffineEntry::constant(a),
                AffineEntry::constant(b),
                AffineEntry::constant(c),
            );
            match psd2x2_to_soc(&block) {
                SocOrLinear::Soc(soc) => soc.margin_with(|_| None).unwrap() >= 0.0,
                SocOrLinear::Linear(_) => unreachable!(),
            }
        };
        assert!(holds(1.0, 0.0, 1.0)); // identity
        assert!(!holds(1.0, 2.0, 1.0)); // eigenvalues {3, −1}
        assert!(holds(0.0, 0.0, 0.0)); // zero matrix, boundary
        assert!(holds(2.0, -2.0, 2.0)); // boundary, det 0
        assert!(!holds(-1.0, 0.0, -1.0)); // negative definite
    }

    #[test]
    fn var_ids_round_trip() {
        let refs = vec![
            VarRef::global(VarKind::CoeffOuter(ev(&[0, 6]))),
            VarRef::global(VarKind::CoeffInner),
            VarRef::global(VarKind::DualCoord(ExponentVector::new(vec![Rat::new(
                1.into(),
                2.into(),
            )]))),
            VarRef::scoped(VarKind::LiftPrimal { k: 2, i: 3 }, "abc123"),
            VarRef::scoped(VarKind::LiftPrimalBeta, "abc123"),
            VarRef::scoped(VarKind::LiftDual { k: 1, i: 1 }, "ff00aa"),
            VarRef::scoped(VarKind::LiftDualBeta, "ff00aa"),
            VarRef::scoped(VarKind::DecompCoeff(ev(&[1, 1])), "ff00aa"),
            VarRef::global(VarKind::Slack(ev(&[4]))),
        ];
        for r in refs {
            let id = r.id();
            assert_eq!(VarRef::parse_id(&id), Some(r), "id {id}");
        }
        assert_eq!(VarRef::parse_id("nonsense"), None);
    }

    #[test]
    fn affine_entry_arithmetic() {
        let v = VarRef::global(VarKind::CoeffInner);
        let e = AffineEntry::scaled_var(2.0, v.clone()).plus(&AffineEntry::constant(1.0));
        let f = e.minus(&AffineEntry::scaled_var(2.0, v.clone()));
        assert!(f.terms().is_empty());
        assert_eq!(f.constant_part(), 1.0);
        let g = AffineEntry::from_parts(vec![(1.0, v.clone()), (3.0, v.clone())], 0.0);
        assert_eq!(g.terms(), &[(4.0, v)]);
    }
}
