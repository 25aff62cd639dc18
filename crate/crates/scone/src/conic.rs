//! Assembly of the full primal/dual second-order programs, a projection
//! feasibility routine and problem import/export.
//!
//! The primal program decides membership of a form `f` with coefficients
//! `c`: every reduced circuit gets its own share `c^{A,β}` of the
//! coefficient vector (variables `d[γ]@circuit`), linked by the equalities
//! `Σ_circuits d[γ] (+ s_γ for γ in the |x|-support) = c_γ`, and its own
//! lift variables constrained by the primal circuit matrix blocks. The
//! slacks `s_γ ≥ 0` carry the degenerate single-point terms `s_γ·|x|^γ`
//! that no two-point circuit can produce.
//!
//! The dual program carries one coordinate `v[γ]` per support point with
//! `v ≥ 0` on the |x|-support, and per reduced circuit the dual matrix
//! blocks (plus `|v_β| ≤ y_β` for odd circuits). Membership of a concrete
//! point is decided by pinning the coordinates and running [`feasibility`].
//!
//! [`feasibility`] is a semidecision at fixed precision: a Dykstra-corrected
//! alternating projection between the affine set (equalities plus pins,
//! projected via a pseudo-inverse factorized once) and the product of
//! half-spaces and second-order cones. Exact answers for single circuits
//! live in [`crate::certify`]; assembled problems can always be exported for
//! an external solver.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{enumerate_reduced_threaded, Circuit, CircuitError, Parity};
use crate::forms::{rat_to_f64, AGForm, Support};
use crate::liftrep::{
    dual_circuit_matrix, odd_extension, primal_circuit_matrix, psd2x2_to_soc, AffineEntry,
    CircuitMatrix, Side, SocConstraint, SocOrLinear, VarKind, VarRef,
};
use crate::witness::Assignment;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("circuit enumeration failed: {0}")]
    Circuits(#[from] CircuitError),
    #[error("malformed problem JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("variable id {0} does not parse")]
    BadVarId(String),
    #[error("variable {id} declared as {declared}, id says {parsed}")]
    KindMismatch {
        id: String,
        declared: String,
        parsed: String,
    },
    #[error("entry references undeclared variable {0}")]
    UnknownVariable(String),
}

/// A conic feasibility/optimization problem in second-order standard form:
/// linear equalities, affine non-negativity constraints and second-order
/// constraints `‖rows‖₂ ≤ rhs`, plus an optional linear objective.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct ConicProblem {
    vars: Vec<VarRef>,
    equalities: Vec<AffineEntry>,
    nonneg: Vec<AffineEntry>,
    socs: Vec<SocConstraint>,
    objective: Option<AffineEntry>,
}

impl ConicProblem {
    pub fn vars(&self) -> &[VarRef] {
        &self.vars
    }

    pub fn equalities(&self) -> &[AffineEntry] {
        &self.equalities
    }

    pub fn nonneg(&self) -> &[AffineEntry] {
        &self.nonneg
    }

    pub fn socs(&self) -> &[SocConstraint] {
        &self.socs
    }

    pub fn objective(&self) -> Option<&AffineEntry> {
        self.objective.as_ref()
    }

    /// Attach a linear objective (`min objective`). Every referenced
    /// variable must already be declared.
    pub fn set_objective(&mut self, objective: Option<AffineEntry>) -> Result<(), ConicError> {
        if let Some(entry) = &objective {
            for var in entry.vars() {
                if !self.vars.contains(var) {
                    return Err(ConicError::UnknownVariable(var.id()));
                }
            }
        }
        self.objective = objective;
        Ok(())
    }
}

/// Wrap a single circuit matrix as an exportable problem: its 1×1 blocks
/// become non-negativity constraints, its 2×2 blocks second-order
/// constraints, over the matrix's own variables.
pub fn matrix_to_problem(matrix: &CircuitMatrix) -> ConicProblem {
    let mut problem = ConicProblem {
        vars: matrix.vars().to_vec(),
        ..ConicProblem::default()
    };
    for block in matrix.blocks() {
        match psd2x2_to_soc(block) {
            SocOrLinear::Linear(entry) => problem.nonneg.push(entry),
            SocOrLinear::Soc(soc) => problem.socs.push(soc),
        }
    }
    problem
}

/// Outcome of the projection feasibility routine.
#[derive(Clone, PartialEq, Debug)]
pub enum FeasibilityResult {
    /// All equality and cone residuals at or below the tolerance; the
    /// assignment satisfies every constraint within `tol`.
    Feasible(Assignment),
    /// The alternating sequence stabilized with a residual above `10·tol`;
    /// strong evidence of infeasibility, not a certificate.
    InfeasibleHint { residual: f64 },
    /// Iteration budget exhausted without a verdict.
    Undetermined { iterations: usize, residual: f64 },
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityResult::Feasible(_))
    }
}

fn decomp_var(circuit: &Circuit, point: &crate::forms::ExponentVector) -> VarRef {
    VarRef::scoped(VarKind::DecompCoeff(point.clone()), &circuit.id())
}

/// Replace the per-circuit coefficient placeholders of a primal matrix by
/// the circuit's decomposition variables.
fn decomposed(circuit: &Circuit, entry: &AffineEntry) -> AffineEntry {
    entry.rename_vars(|v| match v.kind() {
        VarKind::CoeffOuter(p) => decomp_var(circuit, p),
        VarKind::CoeffInner => decomp_var(circuit, circuit.inner()),
        _ => v.clone(),
    })
}

fn push_matrix_constraints(
    problem: &mut ConicProblem,
    matrix: &CircuitMatrix,
    rewrite: &impl Fn(&AffineEntry) -> AffineEntry,
) {
    for block in matrix.blocks() {
        match psd2x2_to_soc(block) {
            SocOrLinear::Linear(entry) => problem.nonneg.push(rewrite(&entry)),
            SocOrLinear::Soc(soc) => problem.socs.push(SocConstraint {
                rows: soc.rows.iter().map(rewrite).collect(),
                rhs: rewrite(&soc.rhs),
            }),
        }
    }
}

/// Assemble the primal membership program for a form.
///
/// Degenerate cases fold into the same shape: with no reduced circuits the
/// equalities collapse to `s_γ = c_γ` on the |x|-support and `0 = c_β` on
/// the odd support, so a negative |x|-coefficient or a nonzero odd
/// coefficient is reported as infeasible by [`feasibility`] rather than
/// raising an error.
pub fn assemble_primal(form: &AGForm) -> Result<ConicProblem, ConicError> {
    assemble_primal_threaded(form, 1)
}

pub fn assemble_primal_threaded(form: &AGForm, threads: usize) -> Result<ConicProblem, ConicError> {
    let support = form.support();
    let (even, odd) = enumerate_reduced_threaded(support, threads)?;
    let circuits: Vec<&Circuit> = even.iter().chain(odd.iter()).collect();

    let mut problem = ConicProblem::default();

    // Variables: per circuit its decomposition shares then its lift, then
    // one slack per |x|-point.
    for circuit in &circuits {
        let matrix = primal_circuit_matrix(circuit);
        for var in matrix.vars() {
            match var.kind() {
                VarKind::CoeffOuter(p) => problem.vars.push(decomp_var(circuit, p)),
                VarKind::CoeffInner => problem.vars.push(decomp_var(circuit, circuit.inner())),
                _ => problem.vars.push(var.clone()),
            }
        }
    }
    for point in support.abs_points() {
        problem.vars.push(VarRef::global(VarKind::Slack(point.clone())));
    }

    // Linkage: Σ_circuits d[γ] (+ s_γ) − c_γ = 0 per support point.
    for point in support.all_points() {
        let mut terms: Vec<(f64, VarRef)> = Vec::new();
        for circuit in &circuits {
            if circuit.outer_index(point).is_some() || circuit.inner() == point {
                terms.push((1.0, decomp_var(circuit, point)));
            }
        }
        if support.contains_abs(point) {
            terms.push((1.0, VarRef::global(VarKind::Slack(point.clone()))));
        }
        let entry = AffineEntry::from_parts(terms, -rat_to_f64(&form.coeff(point)));
        problem.equalities.push(entry);
    }

    // Slacks are non-negative; circuit blocks supply the rest.
    for point in support.abs_points() {
        problem
            .nonneg
            .push(AffineEntry::var(VarRef::global(VarKind::Slack(
                point.clone(),
            ))));
    }
    for circuit in &circuits {
        let matrix = primal_circuit_matrix(circuit);
        let rewrite = |entry: &AffineEntry| decomposed(circuit, entry);
        push_matrix_constraints(&mut problem, &matrix, &rewrite);
        if circuit.parity() == Parity::Odd {
            let extension = odd_extension(Side::Primal, circuit).expect("circuit is odd");
            if let SocOrLinear::Soc(soc) = psd2x2_to_soc(&extension) {
                problem.socs.push(SocConstraint {
                    rows: soc.rows.iter().map(rewrite).collect(),
                    rhs: rewrite(&soc.rhs),
                });
            }
        }
    }
    Ok(problem)
}

/// Assemble the dual membership program for a support. Coordinates are free
/// variables; pin them through [`feasibility`]'s `fixed` argument to test a
/// concrete point.
pub fn assemble_dual(support: &Support) -> Result<ConicProblem, ConicError> {
    assemble_dual_threaded(support, 1)
}

pub fn assemble_dual_threaded(
    support: &Support,
    threads: usize,
) -> Result<ConicProblem, ConicError> {
    let (even, odd) = enumerate_reduced_threaded(support, threads)?;
    let circuits: Vec<&Circuit> = even.iter().chain(odd.iter()).collect();

    let mut problem = ConicProblem::default();
    for point in support.all_points() {
        problem
            .vars
            .push(VarRef::global(VarKind::DualCoord(point.clone())));
    }
    for circuit in &circuits {
        let matrix = dual_circuit_matrix(circuit);
        for var in matrix.vars() {
            if !matches!(var.kind(), VarKind::DualCoord(_)) {
                problem.vars.push(var.clone());
            }
        }
    }

    // Global sign conditions on the |x|-support.
    for point in support.abs_points() {
        problem
            .nonneg
            .push(AffineEntry::var(VarRef::global(VarKind::DualCoord(
                point.clone(),
            ))));
    }
    let identity = |entry: &AffineEntry| entry.clone();
    for circuit in &circuits {
        let matrix = dual_circuit_matrix(circuit);
        push_matrix_constraints(&mut problem, &matrix, &identity);
        if circuit.parity() == Parity::Odd {
            let extension = odd_extension(Side::Dual, circuit).expect("circuit is odd");
            if let SocOrLinear::Soc(soc) = psd2x2_to_soc(&extension) {
                problem.socs.push(soc);
            }
        }
    }
    Ok(problem)
}

/// Euclidean projection onto the second-order cone `{(t, z) : ‖z‖₂ ≤ t}`:
/// the identity inside the cone, zero inside the polar cone, and
/// `((t+‖z‖)/2)·(1, z/‖z‖)` in between.
pub fn project_soc(t: f64, z: &[f64]) -> (f64, Vec<f64>) {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= t {
        (t, z.to_vec())
    } else if norm <= -t {
        (0.0, vec![0.0; z.len()])
    } else {
        let s = 0.5 * (t + norm);
        (s, z.iter().map(|v| v * s / norm).collect())
    }
}

/// One scalar block of the constraint cone.
enum ConeBlock {
    Nonneg { offset: usize },
    Soc { offset: usize, rows: usize },
}

struct ConstraintSpace {
    /// Affine map x ↦ s = Px + q listing all constraint scalars.
    p: DMatrix<f64>,
    q: DVector<f64>,
    blocks: Vec<ConeBlock>,
}

impl ConstraintSpace {
    /// Project the s-part onto the cone product, in place.
    fn project(&self, s: &mut [f64]) {
        for block in &self.blocks {
            match block {
                ConeBlock::Nonneg { offset } => s[*offset] = s[*offset].max(0.0),
                ConeBlock::Soc { offset, rows } => {
                    let (t, z) = project_soc(s[*offset], &s[*offset + 1..*offset + 1 + rows]);
                    s[*offset] = t;
                    s[*offset + 1..*offset + 1 + rows].copy_from_slice(&z);
                }
            }
        }
    }

    /// ∞-norm distance of the s-part from the cone product.
    fn distance(&self, s: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for block in &self.blocks {
            match block {
                ConeBlock::Nonneg { offset } => worst = worst.max(-s[*offset]),
                ConeBlock::Soc { offset, rows } => {
                    let norm = s[*offset + 1..*offset + 1 + rows]
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(norm - s[*offset]);
                }
            }
        }
        worst
    }
}

fn entry_coeffs(
    entry: &AffineEntry,
    index: &BTreeMap<VarRef, usize>,
    mut set: impl FnMut(usize, f64),
) -> Result<(), ConicError> {
    for (coef, var) in entry.terms() {
        let col = index
            .get(var)
            .ok_or_else(|| ConicError::UnknownVariable(var.id()))?;
        set(*col, *coef);
    }
    Ok(())
}

/// Decide feasibility by Dykstra-corrected alternating projections between
/// the affine set `{equalities hold, pins hold}` and the cone product, in
/// the lifted space `(x, s)` with `s = Px + q` collecting every constraint
/// scalar.
///
/// `fixed` pins coefficient or dual-coordinate variables (pins for
/// variables absent from the problem are ignored). Returns `Feasible` when
/// all residuals drop to `tol`, `InfeasibleHint` when the residual
/// stabilizes above `10·tol` over a 100-iteration window, `Undetermined`
/// otherwise.
pub fn feasibility(
    problem: &ConicProblem,
    fixed: &Assignment,
    max_iter: usize,
    tol: f64,
) -> FeasibilityResult {
    // Trivially contradictory rows (no variables, nonzero residue) short out
    // the iteration; this covers forms whose odd coefficients cannot be
    // covered by any reduced circuit.
    for entry in &problem.equalities {
        if entry.terms().is_empty() && entry.constant_part().abs() > tol {
            return FeasibilityResult::InfeasibleHint {
                residual: entry.constant_part().abs(),
            };
        }
    }
    for entry in &problem.nonneg {
        if entry.terms().is_empty() && entry.constant_part() < -tol {
            return FeasibilityResult::InfeasibleHint {
                residual: -entry.constant_part(),
            };
        }
    }

    let index: BTreeMap<VarRef, usize> = problem
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), i))
        .collect();
    let n = problem.vars.len();

    // Constraint scalars: every nonneg entry, then (rhs, rows...) per SOC.
    let mut cone_blocks = Vec::new();
    let mut scalar_entries: Vec<&AffineEntry> = Vec::new();
    for entry in &problem.nonneg {
        cone_blocks.push(ConeBlock::Nonneg {
            offset: scalar_entries.len(),
        });
        scalar_entries.push(entry);
    }
    for soc in &problem.socs {
        cone_blocks.push(ConeBlock::Soc {
            offset: scalar_entries.len(),
            rows: soc.rows.len(),
        });
        scalar_entries.push(&soc.rhs);
        for row in &soc.rows {
            scalar_entries.push(row);
        }
    }
    let s_count = scalar_entries.len();

    let mut p = DMatrix::zeros(s_count, n);
    let mut q = DVector::zeros(s_count);
    for (row, entry) in scalar_entries.iter().enumerate() {
        if entry_coeffs(entry, &index, |col, coef| p[(row, col)] += coef).is_err() {
            // Assembled problems declare every referenced variable; an
            // undeclared one can only come from a hand-built problem.
            return FeasibilityResult::Undetermined {
                iterations: 0,
                residual: f64::INFINITY,
            };
        }
        q[row] = entry.constant_part();
    }
    let space = ConstraintSpace {
        p,
        q,
        blocks: cone_blocks,
    };

    // Equilibrate: one uniform positive factor per cone block (which maps
    // each half-space and second-order cone onto itself) evens out wildly
    // different coefficient magnitudes and speeds up the projections.
    // Residuals are still measured on the unscaled data below.
    let mut scale = vec![1.0f64; s_count];
    for block in &space.blocks {
        let (offset, len) = match block {
            ConeBlock::Nonneg { offset } => (*offset, 1),
            ConeBlock::Soc { offset, rows } => (*offset, rows + 1),
        };
        let mut worst = 0.0f64;
        for j in offset..offset + len {
            let norm = (space.p.row(j).norm_squared() + space.q[j] * space.q[j]).sqrt();
            worst = worst.max(norm);
        }
        let gamma = (1.0 / worst.max(1e-12)).clamp(1e-8, 1e8);
        for entry in scale.iter_mut().skip(offset).take(len) {
            *entry = gamma;
        }
    }

    // Affine rows: equalities, pins, and the linking rows s = γ(Px + q).
    let pins: Vec<(usize, f64)> = fixed
        .iter()
        .filter_map(|(var, value)| index.get(var).map(|&col| (col, value)))
        .collect();
    let eq_rows = problem.equalities.len() + pins.len();
    let total_rows = eq_rows + s_count;
    let width = n + s_count;
    if n == 0 && s_count == 0 {
        return FeasibilityResult::Feasible(Assignment::new());
    }

    // Unscaled equality system, kept for residual evaluation.
    let mut eq_mat = DMatrix::zeros(eq_rows, n);
    let mut eq_rhs = DVector::zeros(eq_rows);
    for (row, entry) in problem.equalities.iter().enumerate() {
        if entry_coeffs(entry, &index, |col, coef| eq_mat[(row, col)] += coef).is_err() {
            return FeasibilityResult::Undetermined {
                iterations: 0,
                residual: f64::INFINITY,
            };
        }
        eq_rhs[row] = -entry.constant_part();
    }
    for (pin_idx, (col, value)) in pins.iter().enumerate() {
        let row = problem.equalities.len() + pin_idx;
        eq_mat[(row, *col)] = 1.0;
        eq_rhs[row] = *value;
    }

    let mut mat = DMatrix::zeros(total_rows, width);
    let mut rhs = DVector::zeros(total_rows);
    for row in 0..eq_rows {
        let norm = (eq_mat.row(row).norm_squared() + eq_rhs[row] * eq_rhs[row]).sqrt();
        let gamma = (1.0 / norm.max(1e-12)).clamp(1e-8, 1e8);
        for col in 0..n {
            mat[(row, col)] = gamma * eq_mat[(row, col)];
        }
        rhs[row] = gamma * eq_rhs[row];
    }
    for srow in 0..s_count {
        let row = eq_rows + srow;
        for col in 0..n {
            mat[(row, col)] = scale[srow] * space.p[(srow, col)];
        }
        mat[(row, n + srow)] = -1.0;
        rhs[row] = -scale[srow] * space.q[srow];
    }

    let svd = mat.clone().svd(true, true);
    let rank_tol = f64::EPSILON
        * (total_rows.max(width) as f64)
        * svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let project_affine = |w: &DVector<f64>| -> DVector<f64> {
        let residual = &mat * w - &rhs;
        let correction = svd
            .clone()
            .solve(&residual, rank_tol.max(f64::MIN_POSITIVE))
            .expect("svd computed with u and v_t");
        w - correction
    };

    // Start from the pinned values.
    let mut x0 = DVector::zeros(n);
    for (col, value) in &pins {
        x0[*col] = *value;
    }
    let mut w = DVector::zeros(width);
    for i in 0..n {
        w[i] = x0[i];
    }
    let s0 = &space.p * &x0 + &space.q;
    for j in 0..s_count {
        w[n + j] = scale[j] * s0[j];
    }

    let mut p_corr = DVector::zeros(width);
    let mut q_corr = DVector::zeros(width);
    let mut window: VecDeque<f64> = VecDeque::with_capacity(100);
    let mut residual = f64::INFINITY;
    let mut best_residual = f64::INFINITY;
    let mut last_restart_best = f64::INFINITY;

    for iteration in 1..=max_iter {
        let y = project_affine(&(&w + &p_corr));
        p_corr = &w + &p_corr - &y;

        // Residual of the affine-feasible iterate y, on the unscaled data.
        let x = DVector::from_column_slice(&y.as_slice()[..n]);
        let eq_res = if eq_rows == 0 {
            0.0
        } else {
            (&eq_mat * &x - &eq_rhs).amax()
        };
        let s_unscaled = &space.p * &x + &space.q;
        let cone_res = space.distance(s_unscaled.as_slice());
        residual = eq_res.max(cone_res);
        best_residual = best_residual.min(residual);
        if residual <= tol {
            let mut assignment = Assignment::new();
            for (i, var) in problem.vars.iter().enumerate() {
                assignment.insert(var.clone(), y[i]);
            }
            return FeasibilityResult::Feasible(assignment);
        }

        let mut z = &y + &q_corr;
        space.project(&mut z.as_mut_slice()[n..]);
        q_corr = &y + &q_corr - &z;
        w = z;

        if window.len() == 100 {
            window.pop_front();
        }
        window.push_back(residual);
        if window.len() == 100 {
            let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = window.iter().cloned().fold(0.0f64, f64::max);
            if min > 10.0 * tol && (max - min) <= 1e-10 * max {
                return FeasibilityResult::InfeasibleHint { residual };
            }
        }

        // Dykstra approaches its limit tangentially on badly conditioned
        // feasible instances; when a period brought less than a 2× residual
        // reduction, drop the accumulated corrections and restart the scheme
        // from the current (much closer) iterate.
        if iteration % 250 == 0 {
            if best_residual > 0.5 * last_restart_best {
                p_corr.fill(0.0);
                q_corr.fill(0.0);
            }
            last_restart_best = best_residual;
        }
    }
    FeasibilityResult::Undetermined {
        iterations: max_iter,
        residual,
    }
}

/// Output format for [`export_problem`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExportFormat {
    Json,
    SocpText,
}

#[derive(Serialize, Deserialize)]
struct VarJson {
    id: String,
    kind: String,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    terms: Vec<(f64, String)>,
    #[serde(rename = "const")]
    constant: f64,
}

#[derive(Serialize, Deserialize)]
struct SocJson {
    rows: Vec<EntryJson>,
    rhs: EntryJson,
}

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    vars: Vec<VarJson>,
    eq: Vec<EntryJson>,
    nonneg: Vec<EntryJson>,
    soc: Vec<SocJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objective: Option<EntryJson>,
}

fn entry_to_json(entry: &AffineEntry) -> EntryJson {
    EntryJson {
        terms: entry
            .terms()
            .iter()
            .map(|(c, v)| (*c, v.id()))
            .collect(),
        constant: entry.constant_part(),
    }
}

fn entry_from_json(
    entry: &EntryJson,
    known: &BTreeMap<String, VarRef>,
) -> Result<AffineEntry, ConicError> {
    let mut terms = Vec::with_capacity(entry.terms.len());
    for (coef, id) in &entry.terms {
        let var = known
            .get(id)
            .ok_or_else(|| ConicError::UnknownVariable(id.clone()))?;
        terms.push((*coef, var.clone()));
    }
    Ok(AffineEntry::from_parts(terms, entry.constant))
}

/// Render the problem: compact JSON with a stable field order, or the plain
/// text form with the header `SOCP n_vars n_eq n_nonneg n_soc` and the
/// sections `EQ`, `NONNEG`, `SOC`, one constraint per line, 17 significant
/// digits per coefficient.
pub fn export_problem(problem: &ConicProblem, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => {
            let json = ProblemJson {
                vars: problem
                    .vars
                    .iter()
                    .map(|v| VarJson {
                        id: v.id(),
                        kind: v.kind().kind_str().to_string(),
                    })
                    .collect(),
                eq: problem.equalities.iter().map(entry_to_json).collect(),
                nonneg: problem.nonneg.iter().map(entry_to_json).collect(),
                soc: problem
                    .socs
                    .iter()
                    .map(|soc| SocJson {
                        rows: soc.rows.iter().map(entry_to_json).collect(),
                        rhs: entry_to_json(&soc.rhs),
                    })
                    .collect(),
                objective: problem.objective.as_ref().map(entry_to_json),
            };
            serde_json::to_vec(&json).expect("problem serializes")
        }
        ExportFormat::SocpText => {
            let mut out = String::new();
            out.push_str(&format!(
                "SOCP {} {} {} {}\n",
                problem.vars.len(),
                problem.equalities.len(),
                problem.nonneg.len(),
                problem.socs.len()
            ));
            if let Some(objective) = &problem.objective {
                out.push_str("MIN\n");
                out.push_str(&format!("{}\n", lincomb_text(objective)));
            }
            out.push_str("EQ\n");
            for entry in &problem.equalities {
                out.push_str(&format!("{} = 0\n", lincomb_text(entry)));
            }
            out.push_str("NONNEG\n");
            for entry in &problem.nonneg {
                out.push_str(&format!("{} >= 0\n", lincomb_text(entry)));
            }
            out.push_str("SOC\n");
            for soc in &problem.socs {
                let rows: Vec<String> = soc.rows.iter().map(lincomb_text).collect();
                out.push_str(&format!(
                    "|| {} || <= {}\n",
                    rows.join(" ; "),
                    lincomb_text(&soc.rhs)
                ));
            }
            out.into_bytes()
        }
    }
}

fn lincomb_text(entry: &AffineEntry) -> String {
    let mut pieces: Vec<String> = entry
        .terms()
        .iter()
        .map(|(c, v)| format!("{:.16e}*{}", c, v.id()))
        .collect();
    if entry.constant_part() != 0.0 || pieces.is_empty() {
        pieces.push(format!("{:.16e}", entry.constant_part()));
    }
    pieces.join(" + ")
}

/// Parse a problem back from its JSON export. Structural inverse of
/// [`export_problem`] with [`ExportFormat::Json`].
pub fn import_problem(bytes: &[u8]) -> Result<ConicProblem, ConicError> {
    let json: ProblemJson = serde_json::from_slice(bytes)?;
    let mut vars = Vec::with_capacity(json.vars.len());
    let mut known: BTreeMap<String, VarRef> = BTreeMap::new();
    for var in &json.vars {
        let parsed =
            VarRef::parse_id(&var.id).ok_or_else(|| ConicError::BadVarId(var.id.clone()))?;
        if parsed.kind().kind_str() != var.kind {
            return Err(ConicError::KindMismatch {
                id: var.id.clone(),
                declared: var.kind.clone(),
                parsed: parsed.kind().kind_str().to_string(),
            });
        }
        known.insert(var.id.clone(), parsed.clone());
        vars.push(parsed);
    }
    let mut problem = ConicProblem {
        vars,
        ..ConicProblem::default()
    };
    for entry in &json.eq {
        problem.equalities.push(entry_from_json(entry, &known)?);
    }
    for entry in &json.nonneg {
        problem.nonneg.push(entry_from_json(entry, &known)?);
    }
    for soc in &json.soc {
        let rows: Result<Vec<_>, _> = soc
            .rows
            .iter()
            .map(|row| entry_from_json(row, &known))
            .collect();
        problem.socs.push(SocConstraint {
            rows: rows?,
            rhs: entry_from_json(&soc.rhs, &known)?,
        });
    }
    if let Some(objective) = &json.objective {
        problem.objective = Some(entry_from_json(objective, &known)?);
    }
    Ok(problem)
}
