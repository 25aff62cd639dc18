//! Exact membership oracles for single-circuit cones and their duals.
//!
//! Non-negativity of a circuit function with coefficients `c` comes down to
//! the arithmetic-geometric inequality: the circuit number
//! `Π_α (c_α/λ_α)^{λ_α}` must dominate `−c_β` (even inner term) or `|c_β|`
//! (odd inner term). Clearing the rational exponents `λ_α = p_α/p` turns the
//! test into a comparison of integer powers,
//!
//! ```text
//! (−c_β)^p · Π p_α^{p_α}  ≤  (Π c_α^{p_α}) · p^p,
//! ```
//!
//! which is decided exactly over `BigRational`. The same clearing applies to
//! the dual test `v_β^p ≤ Π v_α^{p_α}`. Floating point shows up only in the
//! reported circuit numbers and margins.
//!
//! The relative-entropy characterization (`∃ν ≥ 0: Σν_α α = (Σν_α)β`,
//! `D(ν, e·c) ≤ c_β`) is supported as a *verifier* of a supplied `ν`; this
//! crate does not solve relative entropy programs.

use num_bigint::BigInt;
use num_traits::{One, Pow, Signed, Zero};
use thiserror::Error;

use crate::circuits::{Circuit, Parity};
use crate::forms::{rat_to_f64, AGForm, Rat};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("outer coefficient {0} is negative")]
    NegativeCoefficient(String),
    #[error("coefficient count {got} does not match outer set size {expected}")]
    CoefficientCount { expected: usize, got: usize },
}

/// Coefficients of a circuit function: `c_α ≥ 0` on the outer set (in the
/// circuit's outer order) and a free inner coefficient. The same container
/// carries dual coordinate vectors `v` restricted to a circuit.
#[derive(Clone, PartialEq, Debug)]
pub struct CircuitCoefficients {
    outer: Vec<Rat>,
    inner: Rat,
}

impl CircuitCoefficients {
    pub fn new(circuit: &Circuit, outer: Vec<Rat>, inner: Rat) -> Result<Self, CertifyError> {
        if outer.len() != circuit.outer().len() {
            return Err(CertifyError::CoefficientCount {
                expected: circuit.outer().len(),
                got: outer.len(),
            });
        }
        Ok(CircuitCoefficients { outer, inner })
    }

    /// Restrict a form's coefficients to the circuit (missing points read 0).
    pub fn from_form(circuit: &Circuit, form: &AGForm) -> Self {
        CircuitCoefficients {
            outer: circuit.outer().iter().map(|p| form.coeff(p)).collect(),
            inner: form.coeff(circuit.inner()),
        }
    }

    pub fn outer(&self) -> &[Rat] {
        &self.outer
    }

    pub fn inner(&self) -> &Rat {
        &self.inner
    }

    fn ensure_outer_nonneg(&self, circuit: &Circuit) -> Result<(), CertifyError> {
        for (value, point) in self.outer.iter().zip(circuit.outer()) {
            if value.is_negative() {
                return Err(CertifyError::NegativeCoefficient(point.label()));
            }
        }
        Ok(())
    }
}

/// A candidate for the relative-entropy membership condition: `ν ≥ 0`
/// indexed by the circuit's outer set.
#[derive(Clone, PartialEq, Debug)]
pub struct EntropyCertificate {
    nu: Vec<Rat>,
}

impl EntropyCertificate {
    pub fn new(nu: Vec<Rat>) -> Self {
        EntropyCertificate { nu }
    }

    pub fn nu(&self) -> &[Rat] {
        &self.nu
    }
}

fn rat_pow(base: &Rat, exp: u64) -> Rat {
    let exp = u32::try_from(exp).expect("exponent fits u32 by circuit construction");
    Rat::new(Pow::pow(base.numer(), exp), Pow::pow(base.denom(), exp))
}

fn bigint_pow(base: u64, exp: u64) -> BigInt {
    Pow::pow(
        &BigInt::from(base),
        u32::try_from(exp).expect("exponent fits u32"),
    )
}

/// Compensated (Kahan) summation.
pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// The circuit number `Π_α (c_α/λ_α)^{λ_α}`, computed in the log domain with
/// compensated summation. Zero whenever some `c_α` vanishes.
pub fn circuit_number(coeffs: &CircuitCoefficients, circuit: &Circuit) -> Result<f64, CertifyError> {
    coeffs.ensure_outer_nonneg(circuit)?;
    if coeffs.outer.iter().any(Zero::is_zero) {
        return Ok(0.0);
    }
    let bary = circuit.bary();
    let p = bary.p() as f64;
    let log_sum = kahan_sum(coeffs.outer.iter().zip(bary.p_alpha()).map(|(c, &pa)| {
        let lambda = pa as f64 / p;
        lambda * (rat_to_f64(c).ln() - lambda.ln())
    }));
    Ok(log_sum.exp())
}

/// The exact comparison `t^p · Π p_α^{p_α} ≤ (Π c_α^{p_α}) · p^p` for a
/// non-negative threshold `t` (the cleared-denominator form of
/// `t ≤ Π (c_α/λ_α)^{λ_α}`).
fn threshold_dominated(threshold: &Rat, outer: &[Rat], circuit: &Circuit) -> bool {
    let bary = circuit.bary();
    let mut lhs = rat_pow(threshold, bary.p());
    let mut weights = BigInt::one();
    for &pa in bary.p_alpha() {
        weights *= bigint_pow(pa, pa);
    }
    lhs *= Rat::from(weights);
    let mut rhs = Rat::from(bigint_pow(bary.p(), bary.p()));
    for (c, &pa) in outer.iter().zip(bary.p_alpha()) {
        rhs *= rat_pow(c, pa);
    }
    lhs <= rhs
}

/// Exact primal membership of a circuit function: even inner terms must
/// satisfy `−c_β ≤` circuit number, odd ones `|c_β| ≤` circuit number.
/// Negative outer coefficients are an input error.
pub fn check_primal_circuit(
    coeffs: &CircuitCoefficients,
    circuit: &Circuit,
) -> Result<bool, CertifyError> {
    coeffs.ensure_outer_nonneg(circuit)?;
    let c_beta = &coeffs.inner;
    match circuit.parity() {
        Parity::Even => {
            if !c_beta.is_negative() {
                Ok(true)
            } else {
                Ok(threshold_dominated(&c_beta.abs(), &coeffs.outer, circuit))
            }
        }
        Parity::Odd => Ok(threshold_dominated(&c_beta.abs(), &coeffs.outer, circuit)),
    }
}

/// Exact dual membership of a coordinate vector restricted to a circuit:
/// `v_|A ≥ 0` and `v_β^p ≤ Π v_α^{p_α}` (even inner), or `v_|A ≥ 0` and
/// `|v_β|^p ≤ Π v_α^{p_α}` (odd inner).
pub fn check_dual_circuit(values: &CircuitCoefficients, circuit: &Circuit) -> bool {
    if values.outer.iter().any(Signed::is_negative) {
        return false;
    }
    let v_beta = &values.inner;
    let bary = circuit.bary();
    let threshold = match circuit.parity() {
        Parity::Even => {
            if v_beta.is_negative() {
                return false;
            }
            v_beta.clone()
        }
        Parity::Odd => v_beta.abs(),
    };
    let mut rhs = Rat::one();
    for (v, &pa) in values.outer.iter().zip(bary.p_alpha()) {
        rhs *= rat_pow(v, pa);
    }
    rat_pow(&threshold, bary.p()) <= rhs
}

/// Float margin of the exact dual test on the circuit-number scale:
/// `(Π v_α^{p_α})^{1/p} − |v_β|`. Assumes `v_|A ≥ 0`.
pub fn dual_margin(values: &CircuitCoefficients, circuit: &Circuit) -> f64 {
    let bary = circuit.bary();
    let geo = if values.outer.iter().any(Zero::is_zero) {
        0.0
    } else {
        let p = bary.p() as f64;
        kahan_sum(
            values
                .outer
                .iter()
                .zip(bary.p_alpha())
                .map(|(v, &pa)| pa as f64 / p * rat_to_f64(v).ln()),
        )
        .exp()
    };
    geo - rat_to_f64(&values.inner).abs()
}

/// Float margin of the exact primal test: circuit number minus the
/// requirement `max(0, −c_β)` (even) or `|c_β|` (odd).
pub fn primal_margin(coeffs: &CircuitCoefficients, circuit: &Circuit) -> Result<f64, CertifyError> {
    let number = circuit_number(coeffs, circuit)?;
    let c_beta = rat_to_f64(&coeffs.inner);
    let requirement = match circuit.parity() {
        Parity::Even => (-c_beta).max(0.0),
        Parity::Odd => c_beta.abs(),
    };
    Ok(number - requirement)
}

/// Verify a relative-entropy certificate: the moment condition
/// `Σ ν_α α = (Σ ν_α) β` is checked exactly, the bound `D(ν, e·c) ≤ c_β`
/// (even) resp. `≤ −|c_β|` (odd) within `tol` in the log domain, under the
/// conventions `0·ln(0/y) = 0` and `y·ln(y/0) = ∞`.
pub fn verify_entropy_certificate(
    coeffs: &CircuitCoefficients,
    circuit: &Circuit,
    certificate: &EntropyCertificate,
    tol: f64,
) -> bool {
    let nu = certificate.nu();
    if nu.len() != circuit.outer().len() || nu.iter().any(Signed::is_negative) {
        return false;
    }
    // Moment condition, coordinate-wise: Σ ν_α (α_j − β_j) = 0.
    let beta = circuit.inner();
    for j in 0..beta.dim() {
        let lhs: Rat = circuit
            .outer()
            .iter()
            .zip(nu)
            .map(|(alpha, n)| n * (&alpha.coords()[j] - &beta.coords()[j]))
            .sum();
        if !lhs.is_zero() {
            return false;
        }
    }
    // D(ν, e·c) = Σ ν_α (ln ν_α − 1 − ln c_α); infinite when ν_α > 0, c_α = 0.
    let mut terms = Vec::with_capacity(nu.len());
    for (n, c) in nu.iter().zip(coeffs.outer()) {
        if n.is_zero() {
            continue;
        }
        if !c.is_positive() {
            return false;
        }
        let nf = rat_to_f64(n);
        terms.push(nf * (nf.ln() - 1.0 - rat_to_f64(c).ln()));
    }
    let divergence = kahan_sum(terms.into_iter());
    let bound = match circuit.parity() {
        Parity::Even => rat_to_f64(&coeffs.inner),
        Parity::Odd => -rat_to_f64(&coeffs.inner).abs(),
    };
    divergence <= bound + tol
}

/// Helper for tests and the CLI: build a circuit over a plain support.
pub fn restrict(form: &AGForm, circuit: &Circuit) -> CircuitCoefficients {
    CircuitCoefficients::from_form(circuit, form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::Circuit;
    use crate::forms::ExponentVector;
    use num_bigint::BigInt;

    fn ev(coords: &[i64]) -> ExponentVector {
        ExponentVector::from_ints(coords)
    }

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(n.into(), d.into())
    }

    fn int(n: i64) -> Rat {
        Rat::from(BigInt::from(n))
    }

    fn line_circuit() -> Circuit {
        Circuit::build(vec![ev(&[0]), ev(&[6])], ev(&[2]), Parity::Even)
            .unwrap()
            .unwrap()
    }

    fn plane_circuit(inner: &[i64]) -> Circuit {
        Circuit::build(
            vec![ev(&[0, 0]), ev(&[4, 2]), ev(&[2, 4])],
            ev(inner),
            Parity::Even,
        )
        .unwrap()
        .unwrap()
    }

    #[test]
    fn circuit_numbers_match_arbitrary_precision_values() {
        let circ = line_circuit();
        let coeffs = CircuitCoefficients::new(&circ, vec![int(1), int(1)], int(0)).unwrap();
        // (3/2)^{2/3} · 3^{1/3} = (27/4)^{1/3}
        let expected = 6.75f64.cbrt();
        let got = circuit_number(&coeffs, &circ).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected, "{got}");

        let plane = plane_circuit(&[1, 1]);
        let coeffs = CircuitCoefficients::new(&plane, vec![int(1); 3], int(0)).unwrap();
        // (27/2)^{1/3}
        let expected = 13.5f64.cbrt();
        let got = circuit_number(&coeffs, &plane).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected, "{got}");
    }

    #[test]
    fn circuit_number_zero_factor() {
        let circ = line_circuit();
        let coeffs = CircuitCoefficients::new(&circ, vec![int(0), int(5)], int(0)).unwrap();
        assert_eq!(circuit_number(&coeffs, &circ).unwrap(), 0.0);
    }

    #[test]
    fn circuit_number_rejects_negative_outer() {
        let circ = line_circuit();
        let coeffs = CircuitCoefficients::new(&circ, vec![int(-1), int(1)], int(0)).unwrap();
        assert!(circuit_number(&coeffs, &circ).is_err());
    }

    #[test]
    fn primal_check_examples() {
        let circ = line_circuit();
        // (47/25)³ · 4 = 26.578688 ≤ 27, so c₂ = −1.88 is accepted.
        let ok = CircuitCoefficients::new(&circ, vec![int(1), int(1)], rat(-47, 25)).unwrap();
        assert!(check_primal_circuit(&ok, &circ).unwrap());
        // c₂ = −1.89 fails: (189/100)³·4 = 27.010... > 27.
        let no = CircuitCoefficients::new(&circ, vec![int(1), int(1)], rat(-189, 100)).unwrap();
        assert!(!check_primal_circuit(&no, &circ).unwrap());
        // Non-negative inner coefficient is always accepted.
        let pos = CircuitCoefficients::new(&circ, vec![int(0), int(0)], int(3)).unwrap();
        assert!(check_primal_circuit(&pos, &circ).unwrap());
    }

    #[test]
    fn primal_check_boundary_equality() {
        // λ = (1/3, 1/3, 1/3), p = 3: equality 3³·1 = 1·3³ holds exactly.
        let circ = plane_circuit(&[2, 2]);
        assert_eq!(circ.bary().p(), 3);
        assert_eq!(circ.bary().p_alpha(), &[1, 1, 1]);
        let boundary = CircuitCoefficients::new(&circ, vec![int(1); 3], int(-3)).unwrap();
        assert!(check_primal_circuit(&boundary, &circ).unwrap());
        // Any exact overshoot is rejected: c_β = −3 − 10⁻⁹.
        let over = CircuitCoefficients::new(
            &circ,
            vec![int(1); 3],
            -(int(3) + Rat::new(1.into(), 1_000_000_000.into())),
        )
        .unwrap();
        assert!(!check_primal_circuit(&over, &circ).unwrap());
    }

    #[test]
    fn odd_primal_zero_inner_is_member() {
        let circ = Circuit::build(vec![ev(&[0]), ev(&[2])], ev(&[1]), Parity::Odd)
            .unwrap()
            .unwrap();
        let coeffs = CircuitCoefficients::new(&circ, vec![int(2), int(0)], int(0)).unwrap();
        assert!(check_primal_circuit(&coeffs, &circ).unwrap());
        // With a zero outer coefficient, any nonzero inner is rejected.
        let bad = CircuitCoefficients::new(&circ, vec![int(2), int(0)], rat(1, 100)).unwrap();
        assert!(!check_primal_circuit(&bad, &circ).unwrap());
    }

    #[test]
    fn dual_check_examples() {
        let circ = line_circuit();
        let ones = CircuitCoefficients::new(&circ, vec![int(1), int(1)], int(1)).unwrap();
        assert!(check_dual_circuit(&ones, &circ));
        // (101/100)³ > 1² · 1.
        let over = CircuitCoefficients::new(&circ, vec![int(1), int(1)], rat(101, 100)).unwrap();
        assert!(!check_dual_circuit(&over, &circ));
        // Negative v_β fails the even sign condition.
        let neg = CircuitCoefficients::new(&circ, vec![int(1), int(1)], int(-1)).unwrap();
        assert!(!check_dual_circuit(&neg, &circ));

        let odd = Circuit::build(vec![ev(&[0]), ev(&[4])], ev(&[1]), Parity::Odd)
            .unwrap()
            .unwrap();
        let v = CircuitCoefficients::new(&odd, vec![int(1), int(1)], int(-1)).unwrap();
        assert!(check_dual_circuit(&v, &odd));
    }

    #[test]
    fn primal_scaling_invariance() {
        let circ = line_circuit();
        for (c0, c6, cb) in [(3, 5, -4), (1, 1, -1), (2, 7, -3)] {
            let base =
                CircuitCoefficients::new(&circ, vec![int(c0), int(c6)], int(cb)).unwrap();
            let scaled = CircuitCoefficients::new(
                &circ,
                vec![int(c0) * rat(7, 3), int(c6) * rat(7, 3)],
                int(cb) * rat(7, 3),
            )
            .unwrap();
            assert_eq!(
                check_primal_circuit(&base, &circ).unwrap(),
                check_primal_circuit(&scaled, &circ).unwrap()
            );
        }
    }

    #[test]
    fn entropy_certificate_accepts_the_optimal_ray() {
        let circ = line_circuit();
        // Optimum of D(tλ, e·c) over t is −circuit number at t = circuit number;
        // a rational t near the optimum keeps the moment condition exact.
        let t = rat(1_889_881_575, 1_000_000_000);
        let nu: Vec<Rat> = circ.bary().lambda().iter().map(|l| l * &t).collect();
        let cert = EntropyCertificate::new(nu);
        let c_beta = -rat(1_889_881_574, 1_000_000_000);
        let coeffs = CircuitCoefficients::new(&circ, vec![int(1), int(1)], c_beta).unwrap();
        assert!(verify_entropy_certificate(&coeffs, &circ, &cert, 1e-9));

        // Push c_β below −circuit number: no ν can work, this one fails too.
        let coeffs = CircuitCoefficients::new(&circ, vec![int(1), int(1)], rat(-19, 10)).unwrap();
        assert!(!verify_entropy_certificate(&coeffs, &circ, &cert, 1e-9));
    }

    #[test]
    fn entropy_certificate_zero_nu() {
        let circ = line_circuit();
        let cert = EntropyCertificate::new(vec![int(0), int(0)]);
        let nonneg = CircuitCoefficients::new(&circ, vec![int(1), int(1)], int(1)).unwrap();
        assert!(verify_entropy_certificate(&nonneg, &circ, &cert, 1e-9));
        let negative = CircuitCoefficients::new(&circ, vec![int(1), int(1)], int(-1)).unwrap();
        assert!(!verify_entropy_certificate(&negative, &circ, &cert, 1e-9));
    }

    #[test]
    fn entropy_certificate_moment_violation() {
        let circ = line_circuit();
        // ν = (1, 1) has Σ ν_α α = 6 ≠ (Σ ν_α)·β = 4.
        let cert = EntropyCertificate::new(vec![int(1), int(1)]);
        let coeffs = CircuitCoefficients::new(&circ, vec![int(1), int(1)], int(5)).unwrap();
        assert!(!verify_entropy_certificate(&coeffs, &circ, &cert, 1e-9));
    }

    #[test]
    fn exactness_bridge_spot_checks() {
        let circ = line_circuit();
        for (c0, c6, num, den) in [(1, 1, -17, 10), (2, 3, -5, 2), (1, 4, -1, 3)] {
            let coeffs =
                CircuitCoefficients::new(&circ, vec![int(c0), int(c6)], rat(num, den)).unwrap();
            let exact = check_primal_circuit(&coeffs, &circ).unwrap();
            let number = circuit_number(&coeffs, &circ).unwrap();
            let float = number >= -rat_to_f64(&rat(num, den));
            let margin = number + rat_to_f64(&rat(num, den));
            if margin.abs() > 1e-9 * number.max(1.0) {
                assert_eq!(exact, float);
            }
        }
    }
}
