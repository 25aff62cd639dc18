//! Checkable non-negativity certificates for sparse polynomials and
//! exponential sums via second-order cone representations of rational
//! S-cones and their duals.
//!
//! The S-cone is the conic hull of non-negative AG (arithmetic-geometric
//! mean) functions
//!
//! ```text
//! f(x) = Σ_{α∈A} c_α |x|^α + Σ_{β∈B} c_β x^β
//! ```
//!
//! over a support `A ⊆ ℚⁿ` of |x|-exponents and a support `B ⊆ ℕⁿ\(2ℕ)ⁿ`
//! of odd monomial exponents. It specializes to the SONC cone (sums of
//! non-negative circuit polynomials) and, for `B = ∅`, to the SAGE cone of
//! exponential sums. Non-negativity of a single circuit function reduces to
//! the arithmetic-geometric inequality, so membership in the cone — and in
//! its dual — admits an explicit second-order lift built from 1×1 and 2×2
//! blocks.
//!
//! The crate is organised along that pipeline:
//!
//! - [`forms`]: exact rational exponent vectors, supports, AG forms, the
//!   term grammar and the evaluation oracle;
//! - [`circuits`]: circuit and reduced-circuit enumeration with exact
//!   barycentric data `(λ, p, p_α, m)`;
//! - [`certify`]: exact (cleared-denominator) membership tests for single
//!   circuits, circuit numbers and the relative-entropy verifier;
//! - [`liftrep`]: symbolic primal/dual circuit matrices and the 2×2 PSD →
//!   second-order rewrite;
//! - [`witness`]: nested-square-root witness completion and block-wise
//!   verification of assignments;
//! - [`conic`]: assembly of the full primal/dual programs over all reduced
//!   circuits, an alternating-projection feasibility routine and problem
//!   export (JSON / plain text).
//!
//! All symbolic data is exact `BigRational`; floating point enters only in
//! witness values, the scalar Θ = Π λ_α^{λ_α} and the projection solver.

pub mod certify;
pub mod circuits;
pub mod conic;
pub mod forms;
pub mod liftrep;
mod ratlin;
pub mod witness;

pub use forms::{AGForm, ExponentVector, ExtendedReal, FormError, Rat, Support};
