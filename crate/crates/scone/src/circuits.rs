//! Circuit enumeration over a support, with exact barycentric data.
//!
//! A circuit `(A, β)` is an affinely independent outer set `A` together with
//! an inner point `β ∈ relint(conv A) \ A`. The unique barycentric
//! coordinates `λ` of `β` are rational whenever the support is, and are
//! carried around as `λ_α = p_α / p` with `p` minimal; `m = ⌈log₂ p⌉`
//! controls the size of the second-order lift built in [`crate::liftrep`].
//!
//! A circuit is *reduced* (w.r.t. a ground support) when no other ground
//! point of `A` lies in `conv(A)`; reduced circuits suffice to generate the
//! S-cone, which keeps the assembled programs small. Reducedness is a
//! boundary-sensitive predicate, so every decision here is made over exact
//! rationals.

use std::fmt;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::forms::{ExponentVector, Rat, Support};
use crate::ratlin;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("outer set must not be empty")]
    EmptyOuter,
    #[error("pool point {0} does not belong to the support")]
    PoolNotInSupport(String),
    #[error("max_outer {max_outer} exceeds dimension bound {bound}")]
    MaxOuterTooLarge { max_outer: usize, bound: usize },
    #[error("barycentric denominator of {0} does not fit the supported range")]
    DenominatorOverflow(String),
}

/// Whether the inner point of a circuit is an odd monomial exponent (`B`) or
/// an |x|-exponent (`A`).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Parity {
    Even,
    Odd,
}

/// Exact barycentric data of an inner point: `λ_α = p_α / p` with
/// `Σ λ_α = 1`, all `λ_α > 0` and `p` the least common denominator.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BarycentricData {
    lambda: Vec<Rat>,
    p: u64,
    p_alpha: Vec<u64>,
    m: u32,
}

impl BarycentricData {
    /// Coordinates, parallel to the circuit's outer points.
    pub fn lambda(&self) -> &[Rat] {
        &self.lambda
    }

    /// Least common denominator of the coordinates.
    pub fn p(&self) -> u64 {
        self.p
    }

    /// Integer numerators, parallel to the outer points; `Σ p_α = p`.
    pub fn p_alpha(&self) -> &[u64] {
        &self.p_alpha
    }

    /// `⌈log₂ p⌉`, the depth of the square-root lift.
    pub fn m(&self) -> u32 {
        self.m
    }
}

/// A circuit `(A, β)` with its exact barycentric data and parity.
#[derive(Clone, PartialEq, Debug)]
pub struct Circuit {
    outer: Vec<ExponentVector>,
    inner: ExponentVector,
    bary: BarycentricData,
    parity: Parity,
}

impl Circuit {
    /// Build a circuit from an outer set and inner point, sorting the outer
    /// set. Returns `Ok(None)` when `(outer, inner)` is not a circuit.
    pub fn build(
        outer: Vec<ExponentVector>,
        inner: ExponentVector,
        parity: Parity,
    ) -> Result<Option<Circuit>, CircuitError> {
        let mut outer = outer;
        outer.sort();
        outer.dedup();
        if outer.iter().any(|p| p == &inner) {
            return Ok(None);
        }
        let Some(bary) = barycentric(&outer, &inner)? else {
            return Ok(None);
        };
        Ok(Some(Circuit {
            outer,
            inner,
            bary,
            parity,
        }))
    }

    /// Outer points, lexicographically sorted.
    pub fn outer(&self) -> &[ExponentVector] {
        &self.outer
    }

    pub fn inner(&self) -> &ExponentVector {
        &self.inner
    }

    pub fn bary(&self) -> &BarycentricData {
        &self.bary
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Canonical id: a short hash of `(A, β)`, stable across runs. Used to
    /// scope lift-variable names per circuit.
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.outer {
            hasher.update(p.label().as_bytes());
            hasher.update(b";");
        }
        hasher.update(b"|");
        hasher.update(self.inner.label().as_bytes());
        let digest = hasher.finalize();
        let mut id = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            id.push_str(&format!("{byte:02x}"));
        }
        id
    }

    /// Position of an outer point, if present.
    pub fn outer_index(&self, p: &ExponentVector) -> Option<usize> {
        self.outer.binary_search(p).ok()
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let outer: Vec<String> = self.outer.iter().map(|p| p.label()).collect();
        write!(f, "({{{}}}, {})", outer.join(","), self.inner.label())
    }
}

/// Result of the reducedness test: the ground points found strictly inside
/// `conv(A)` besides the circuit's own points.
#[derive(Clone, PartialEq, Debug)]
pub struct ReducedFlag {
    pub is_reduced: bool,
    pub blockers: Vec<ExponentVector>,
}

/// Exact barycentric coordinates of `inner` with respect to `outer`.
///
/// Returns `None` unless `outer` is affinely independent and `inner` lies in
/// the relative interior of its convex hull (all coordinates strictly
/// positive). A coordinate vector with denominator `p = 1` would force
/// `inner` to be an outer vertex, which is not a circuit, and also yields
/// `None`.
pub fn barycentric(
    outer: &[ExponentVector],
    inner: &ExponentVector,
) -> Result<Option<BarycentricData>, CircuitError> {
    if outer.is_empty() {
        return Err(CircuitError::EmptyOuter);
    }
    let dim = inner.dim();
    for p in outer {
        if p.dim() != dim {
            return Err(CircuitError::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
    }
    let points: Vec<&[Rat]> = outer.iter().map(|p| p.coords()).collect();
    let Some(lambda) = ratlin::affine_coordinates(&points, inner.coords()) else {
        return Ok(None);
    };
    if lambda.iter().any(|l| !l.is_positive()) {
        return Ok(None);
    }
    let mut p_big = BigInt::one();
    for l in &lambda {
        p_big = p_big.lcm(l.denom());
    }
    if p_big.is_one() {
        return Ok(None);
    }
    let p = p_big
        .to_u64()
        .filter(|&p| p <= u32::MAX as u64)
        .ok_or_else(|| CircuitError::DenominatorOverflow(inner.label()))?;
    let p_rat = Rat::from(BigInt::from(p));
    let p_alpha: Vec<u64> = lambda
        .iter()
        .map(|l| (l * &p_rat).to_integer().to_u64().expect("p_α ≤ p"))
        .collect();
    debug_assert_eq!(p_alpha.iter().sum::<u64>(), p);
    Ok(Some(BarycentricData {
        lambda,
        p,
        p_alpha,
        m: ceil_log2(p),
    }))
}

/// `⌈log₂ p⌉` for `p ≥ 2`.
pub(crate) fn ceil_log2(p: u64) -> u32 {
    debug_assert!(p >= 2);
    64 - (p - 1).leading_zeros()
}

/// Enumerate all circuits `(A, β)` with `A ⊆ outer_pool`,
/// `|A| ∈ [2, max_outer]` and `β ∈ inner_pool \ A`, in lexicographic order
/// by `(A, β)`.
pub fn enumerate_circuits(
    support: &Support,
    outer_pool: &[ExponentVector],
    inner_pool: &[ExponentVector],
    max_outer: usize,
) -> Result<Vec<Circuit>, CircuitError> {
    enumerate_circuits_threaded(support, outer_pool, inner_pool, max_outer, 1)
}

/// As [`enumerate_circuits`], splitting the search over `threads` workers.
/// Candidate outer sets are independent, so results are merged back in the
/// deterministic lexicographic order regardless of scheduling.
pub fn enumerate_circuits_threaded(
    support: &Support,
    outer_pool: &[ExponentVector],
    inner_pool: &[ExponentVector],
    max_outer: usize,
    threads: usize,
) -> Result<Vec<Circuit>, CircuitError> {
    let bound = support.dim() + 1;
    if max_outer > bound {
        return Err(CircuitError::MaxOuterTooLarge { max_outer, bound });
    }
    for p in outer_pool.iter().chain(inner_pool.iter()) {
        if !support.contains_abs(p) && !support.contains_odd(p) {
            return Err(CircuitError::PoolNotInSupport(p.label()));
        }
    }
    let mut outer_pool = outer_pool.to_vec();
    outer_pool.sort();
    outer_pool.dedup();
    let mut inner_pool = inner_pool.to_vec();
    inner_pool.sort();
    inner_pool.dedup();

    let roots: Vec<usize> = (0..outer_pool.len()).collect();
    let run_root = |root: usize| -> Result<Vec<Circuit>, CircuitError> {
        let mut found = Vec::new();
        let mut prefix = vec![root];
        explore(
            support,
            &outer_pool,
            &inner_pool,
            max_outer,
            &mut prefix,
            &mut found,
        )?;
        Ok(found)
    };

    let per_root: Vec<Vec<Circuit>> = if threads <= 1 || roots.len() <= 1 {
        let mut out = Vec::with_capacity(roots.len());
        for &root in &roots {
            out.push(run_root(root)?);
        }
        out
    } else {
        type RootResult = Option<Result<Vec<Circuit>, CircuitError>>;
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Mutex<Vec<RootResult>> =
            Mutex::new((0..roots.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..threads.min(roots.len()) {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if idx >= roots.len() {
                        break;
                    }
                    let result = run_root(roots[idx]);
                    slots.lock().expect("enumeration worker poisoned")[idx] = Some(result);
                });
            }
        });
        let slots = slots.into_inner().expect("enumeration workers done");
        let mut out = Vec::with_capacity(roots.len());
        for slot in slots {
            out.push(slot.expect("every root processed")?);
        }
        out
    };

    Ok(per_root.into_iter().flatten().collect())
}

/// Depth-first extension of one outer prefix, pruning affinely dependent
/// sets (every superset of a dependent set is dependent).
fn explore(
    support: &Support,
    outer_pool: &[ExponentVector],
    inner_pool: &[ExponentVector],
    max_outer: usize,
    prefix: &mut Vec<usize>,
    found: &mut Vec<Circuit>,
) -> Result<(), CircuitError> {
    let points: Vec<&[Rat]> = prefix.iter().map(|&i| outer_pool[i].coords()).collect();
    if !ratlin::affinely_independent(&points) {
        return Ok(());
    }
    if prefix.len() >= 2 {
        let outer: Vec<ExponentVector> = prefix.iter().map(|&i| outer_pool[i].clone()).collect();
        for beta in inner_pool {
            if outer.binary_search(beta).is_ok() {
                continue;
            }
            if let Some(bary) = barycentric(&outer, beta)? {
                let parity = if support.contains_odd(beta) {
                    Parity::Odd
                } else {
                    Parity::Even
                };
                found.push(Circuit {
                    outer: outer.clone(),
                    inner: beta.clone(),
                    bary,
                    parity,
                });
            }
        }
    }
    if prefix.len() < max_outer {
        let start = prefix.last().copied().unwrap_or(0) + 1;
        for next in start..outer_pool.len() {
            prefix.push(next);
            explore(support, outer_pool, inner_pool, max_outer, prefix, found)?;
            prefix.pop();
        }
    }
    Ok(())
}

/// Decide reducedness of a circuit against a ground support: a ground
/// |x|-point `γ ∉ A ∪ {β}` lying in `conv(A)` (boundary included) blocks.
pub fn is_reduced(circuit: &Circuit, ground: &Support) -> ReducedFlag {
    let points: Vec<&[Rat]> = circuit.outer.iter().map(|p| p.coords()).collect();
    let mut blockers = Vec::new();
    for gamma in ground.abs_points() {
        if circuit.outer_index(gamma).is_some() || gamma == &circuit.inner {
            continue;
        }
        if let Some(coords) = ratlin::affine_coordinates(&points, gamma.coords()) {
            if coords.iter().all(|c| !c.is_negative()) {
                blockers.push(gamma.clone());
            }
        }
    }
    ReducedFlag {
        is_reduced: blockers.is_empty(),
        blockers,
    }
}

/// All reduced circuits of a support: the even ones (inner in `A`) and the
/// odd ones (inner in `B`), each filtered against the full |x|-support.
pub fn enumerate_reduced(support: &Support) -> Result<(Vec<Circuit>, Vec<Circuit>), CircuitError> {
    enumerate_reduced_threaded(support, 1)
}

/// As [`enumerate_reduced`], with a worker-thread count for the enumeration.
pub fn enumerate_reduced_threaded(
    support: &Support,
    threads: usize,
) -> Result<(Vec<Circuit>, Vec<Circuit>), CircuitError> {
    let max_outer = support.dim() + 1;
    let abs = support.abs_points();
    let even = enumerate_circuits_threaded(support, abs, abs, max_outer, threads)?;
    let odd = enumerate_circuits_threaded(support, abs, support.odd_points(), max_outer, threads)?;
    let keep = |cs: Vec<Circuit>| {
        cs.into_iter()
            .filter(|c| is_reduced(c, support).is_reduced)
            .collect::<Vec<_>>()
    };
    Ok((keep(even), keep(odd)))
}
