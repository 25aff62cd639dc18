//! Exact rational exponent vectors, supports and AG forms.
//!
//! An AG form is a function
//!
//! ```text
//! f(x) = Σ_{α∈A} c_α |x|^α  +  Σ_{β∈B} c_β x^β
//! ```
//!
//! with exact rational coefficients, where `A ⊆ ℚⁿ` collects the
//! |x|-exponents and `B ⊆ ℕⁿ\(2ℕ)ⁿ` the exponents of genuine (odd) monomials.
//! `A` and `B` must be disjoint and `A` non-empty. The two supports are kept
//! separate because the sign behaviour differs: |x|-terms are non-negative
//! wherever finite, plain monomial terms can change sign.
//!
//! Everything symbolic here is `BigRational`; the only floating point is in
//! [`AGForm::evaluate`], the desk-scale sanity-check oracle.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational scalar used throughout the symbolic layer.
pub type Rat = BigRational;

#[derive(Debug, Error)]
pub enum FormError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("the |x| support must not be empty")]
    EmptyAbsSupport,
    #[error("exponent {0} appears both as an |x| term and as a plain monomial")]
    OverlappingSupports(String),
    #[error("plain monomial exponent {0} has only even entries; write it as an |x| term")]
    AllEvenMonomial(String),
    #[error("plain monomial exponent {0} must have natural (non-negative integer) entries")]
    NonNaturalMonomial(String),
    #[error("coefficient exponent {0} does not belong to the support")]
    UnknownExponent(String),
}

/// A support point: an exact rational exponent vector.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ExponentVector {
    coords: Vec<Rat>,
}

impl ExponentVector {
    pub fn new(coords: Vec<Rat>) -> Self {
        ExponentVector { coords }
    }

    /// Convenience constructor from integer coordinates.
    pub fn from_ints(coords: &[i64]) -> Self {
        ExponentVector {
            coords: coords.iter().map(|&c| Rat::from(BigInt::from(c))).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Rat] {
        &self.coords
    }

    /// All coordinates are non-negative integers.
    pub fn is_natural(&self) -> bool {
        self.coords
            .iter()
            .all(|c| c.is_integer() && !c.is_negative())
    }

    /// All coordinates are even integers (membership in (2ℕ)ⁿ for natural vectors).
    pub fn is_all_even(&self) -> bool {
        self.coords
            .iter()
            .all(|c| c.is_integer() && (c.numer() % BigInt::from(2)).is_zero())
    }

    /// Canonical text form, e.g. `(0,6)` or `(1/2)`. Used in variable ids,
    /// diagnostics and the printed term grammar.
    pub fn label(&self) -> String {
        let inner: Vec<String> = self.coords.iter().map(rational_to_string).collect();
        format!("({})", inner.join(","))
    }
}

impl fmt::Display for ExponentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The pair of supports `(A, B)` an AG form lives on.
///
/// Points are deduplicated and kept in lexicographic order so that every
/// downstream construction (circuit enumeration, variable registries,
/// exports) is deterministic.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Support {
    dim: usize,
    abs_points: Vec<ExponentVector>,
    odd_points: Vec<ExponentVector>,
}

impl Support {
    pub fn new(
        abs_points: Vec<ExponentVector>,
        odd_points: Vec<ExponentVector>,
    ) -> Result<Self, FormError> {
        let mut abs_points = abs_points;
        let mut odd_points = odd_points;
        abs_points.sort();
        abs_points.dedup();
        odd_points.sort();
        odd_points.dedup();
        if abs_points.is_empty() {
            return Err(FormError::EmptyAbsSupport);
        }
        let dim = abs_points[0].dim();
        for p in abs_points.iter().chain(odd_points.iter()) {
            if p.dim() != dim {
                return Err(FormError::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
        }
        for p in &odd_points {
            if !p.is_natural() {
                return Err(FormError::NonNaturalMonomial(p.label()));
            }
            if p.is_all_even() {
                return Err(FormError::AllEvenMonomial(p.label()));
            }
            if abs_points.binary_search(p).is_ok() {
                return Err(FormError::OverlappingSupports(p.label()));
            }
        }
        Ok(Support {
            dim,
            abs_points,
            odd_points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The |x|-support `A`, lexicographically sorted.
    pub fn abs_points(&self) -> &[ExponentVector] {
        &self.abs_points
    }

    /// The odd monomial support `B`, lexicographically sorted.
    pub fn odd_points(&self) -> &[ExponentVector] {
        &self.odd_points
    }

    /// All support points, `A` first then `B`.
    pub fn all_points(&self) -> impl Iterator<Item = &ExponentVector> {
        self.abs_points.iter().chain(self.odd_points.iter())
    }

    pub fn contains_abs(&self, p: &ExponentVector) -> bool {
        self.abs_points.binary_search(p).is_ok()
    }

    pub fn contains_odd(&self, p: &ExponentVector) -> bool {
        self.odd_points.binary_search(p).is_ok()
    }
}

/// Value of an AG form at a point: a real or the +∞ that arises from a zero
/// base raised to a negative exponent.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PosInfinity => f.write_str("inf"),
        }
    }
}

/// An AG form: a support together with a coefficient map.
///
/// Missing keys denote coefficient zero; zero coefficients are normalised
/// away at construction, so two forms are equal iff they have equal supports
/// and equal non-zero coefficients.
#[derive(Clone, PartialEq, Debug)]
pub struct AGForm {
    support: Support,
    coeffs: BTreeMap<ExponentVector, Rat>,
}

impl AGForm {
    pub fn new(
        support: Support,
        coeffs: BTreeMap<ExponentVector, Rat>,
    ) -> Result<Self, FormError> {
        let mut coeffs = coeffs;
        coeffs.retain(|_, c| !c.is_zero());
        for key in coeffs.keys() {
            if !support.contains_abs(key) && !support.contains_odd(key) {
                return Err(FormError::UnknownExponent(key.label()));
            }
        }
        Ok(AGForm { support, coeffs })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    /// Coefficient at a support point (zero when absent).
    pub fn coeff(&self, p: &ExponentVector) -> Rat {
        self.coeffs.get(p).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn coeffs(&self) -> &BTreeMap<ExponentVector, Rat> {
        &self.coeffs
    }

    /// Evaluate at a real point, honouring the `|x|^α = ∞` convention for a
    /// zero base with negative exponent.
    pub fn evaluate(&self, x: &[f64]) -> Result<ExtendedReal, FormError> {
        if x.len() != self.support.dim() {
            return Err(FormError::DimensionMismatch {
                expected: self.support.dim(),
                got: x.len(),
            });
        }
        let mut sum = 0.0;
        for (point, coeff) in &self.coeffs {
            let is_abs = self.support.contains_abs(point);
            let mut term = 1.0;
            for (xj, ej) in x.iter().zip(point.coords()) {
                if is_abs {
                    if *xj == 0.0 {
                        if ej.is_negative() {
                            return Ok(ExtendedReal::PosInfinity);
                        }
                        term *= if ej.is_zero() { 1.0 } else { 0.0 };
                    } else {
                        term *= xj.abs().powf(rat_to_f64(ej));
                    }
                } else {
                    // B-points have natural integer coordinates.
                    let e = ej.to_integer().to_i32().unwrap_or(i32::MAX);
                    term *= xj.powi(e);
                }
            }
            sum += rat_to_f64(coeff) * term;
        }
        Ok(ExtendedReal::Finite(sum))
    }
}

impl fmt::Display for AGForm {
    /// Prints in the term grammar, one term per support point (zero
    /// coefficients included so the support survives a round trip).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut write_term =
            |f: &mut fmt::Formatter<'_>, coeff: &Rat, base: &str, p: &ExponentVector| {
                let joiner = if first {
                    if coeff.is_negative() {
                        "-"
                    } else {
                        ""
                    }
                } else if coeff.is_negative() {
                    " - "
                } else {
                    " + "
                };
                first = false;
                write!(
                    f,
                    "{joiner}{}*{base}^{}",
                    rational_to_string(&coeff.abs()),
                    p.label()
                )
            };
        for p in &self.support.abs_points {
            let c = self.coeff(p);
            write_term(f, &c, "|x|", p)?;
        }
        for p in &self.support.odd_points {
            let c = self.coeff(p);
            write_term(f, &c, "x", p)?;
        }
        Ok(())
    }
}

impl FromStr for AGForm {
    type Err = FormError;

    fn from_str(text: &str) -> Result<Self, FormError> {
        parse_form(text)
    }
}

/// Render a rational without a trailing `/1`.
pub fn rational_to_string(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parse a rational literal: `p/q`, an integer, or a decimal such as `1.8`
/// (converted exactly).
pub fn parse_rational(text: &str) -> Result<Rat, FormError> {
    let mut scanner = Scanner::new(text);
    let value = scanner.rational()?;
    scanner.skip_ws();
    if !scanner.at_end() {
        return Err(scanner.error("trailing input after rational"));
    }
    Ok(value)
}

/// Parse a form in the term grammar
///
/// ```text
/// form     := ['+'|'-'] term (('+'|'-') term)*
/// term     := coeff '*' base '^' '(' rational (',' rational)* ')'
/// base     := '|x|' | 'x'
/// coeff    := rational
/// rational := ['+'|'-'] digits ['/' digits | '.' digits]
/// ```
///
/// Whitespace is insignificant. |x|-terms populate the support `A`, plain
/// monomials the support `B`; a plain monomial with all-even exponents is
/// rejected (it must be written as an |x| term).
pub fn parse_form(text: &str) -> Result<AGForm, FormError> {
    let mut scanner = Scanner::new(text);
    let mut abs_terms: Vec<(ExponentVector, Rat)> = Vec::new();
    let mut mono_terms: Vec<(ExponentVector, Rat)> = Vec::new();

    let mut first = true;
    loop {
        scanner.skip_ws();
        if scanner.at_end() {
            if first {
                return Err(scanner.error("empty form"));
            }
            break;
        }
        let sign = if let Some(s) = scanner.try_sign() {
            s
        } else if first {
            1
        } else {
            return Err(scanner.error("expected '+' or '-' between terms"));
        };
        first = false;

        let coeff = scanner.rational()?;
        scanner.expect('*')?;
        let is_abs = scanner.base()?;
        scanner.expect('^')?;
        scanner.expect('(')?;
        let mut coords = vec![scanner.rational()?];
        loop {
            scanner.skip_ws();
            if scanner.try_char(',') {
                coords.push(scanner.rational()?);
            } else {
                scanner.expect(')')?;
                break;
            }
        }
        let point_pos = scanner.pos;
        let point = ExponentVector::new(coords);
        let signed = if sign < 0 { -coeff } else { coeff };
        if is_abs {
            abs_terms.push((point, signed));
        } else {
            if !point.is_natural() {
                return Err(FormError::Parse {
                    pos: point_pos,
                    msg: FormError::NonNaturalMonomial(point.label()).to_string(),
                });
            }
            if point.is_all_even() {
                return Err(FormError::Parse {
                    pos: point_pos,
                    msg: FormError::AllEvenMonomial(point.label()).to_string(),
                });
            }
            mono_terms.push((point, signed));
        }
    }

    let dim = abs_terms
        .first()
        .map(|(p, _)| p.dim())
        .or_else(|| mono_terms.first().map(|(p, _)| p.dim()))
        .unwrap_or(0);
    for (p, _) in abs_terms.iter().chain(mono_terms.iter()) {
        if p.dim() != dim {
            return Err(FormError::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
    }

    let support = Support::new(
        abs_terms.iter().map(|(p, _)| p.clone()).collect(),
        mono_terms.iter().map(|(p, _)| p.clone()).collect(),
    )?;
    let mut coeffs: BTreeMap<ExponentVector, Rat> = BTreeMap::new();
    for (p, c) in abs_terms.into_iter().chain(mono_terms) {
        let entry = coeffs.entry(p).or_insert_with(Rat::zero);
        *entry = &*entry + c;
    }
    AGForm::new(support, coeffs)
}

struct Scanner<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner { text, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    fn error(&self, msg: &str) -> FormError {
        FormError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.rest().chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn try_char(&mut self, expected: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(expected) {
            self.pos += expected.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, expected: char) -> Result<(), FormError> {
        if self.try_char(expected) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{expected}'")))
        }
    }

    /// A '+' or '-' (ASCII or U+2212) if present.
    fn try_sign(&mut self) -> Option<i32> {
        self.skip_ws();
        let c = self.rest().chars().next()?;
        match c {
            '+' => {
                self.pos += 1;
                Some(1)
            }
            '-' | '\u{2212}' => {
                self.pos += c.len_utf8();
                Some(-1)
            }
            _ => None,
        }
    }

    fn digits(&mut self) -> Result<&'a str, FormError> {
        let start = self.pos;
        while self
            .rest()
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_digit())
        {
            self.pos += 1;
        }
        if self.pos == start {
            Err(self.error("expected digits"))
        } else {
            Ok(&self.text[start..self.pos])
        }
    }

    fn rational(&mut self) -> Result<Rat, FormError> {
        self.skip_ws();
        let sign = self.try_sign().unwrap_or(1);
        self.skip_ws();
        let int_part = self.digits()?;
        let numer: BigInt = int_part.parse().expect("digits parse as BigInt");
        let mut value = if self.rest().starts_with('/') {
            self.pos += 1;
            let den_pos = self.pos;
            let den_part = self.digits()?;
            let denom: BigInt = den_part.parse().expect("digits parse as BigInt");
            if denom.is_zero() {
                return Err(FormError::Parse {
                    pos: den_pos,
                    msg: "zero denominator".to_string(),
                });
            }
            Rat::new(numer, denom)
        } else if self.rest().starts_with('.') {
            self.pos += 1;
            let frac_part = self.digits()?;
            let scale = BigInt::from(10).pow(frac_part.len() as u32);
            let frac: BigInt = frac_part.parse().expect("digits parse as BigInt");
            Rat::new(numer * &scale + frac, scale)
        } else {
            Rat::from(numer)
        };
        if sign < 0 {
            value = -value;
        }
        Ok(value)
    }

    /// `|x|` (true) or `x` (false).
    fn base(&mut self) -> Result<bool, FormError> {
        self.skip_ws();
        if self.rest().starts_with("|x|") {
            self.pos += 3;
            Ok(true)
        } else if self.rest().starts_with('x') {
            self.pos += 1;
            Ok(false)
        } else {
            Err(self.error("expected base '|x|' or 'x'"))
        }
    }
}

/// Lossy conversion to `f64` for reporting and the evaluation oracle.
pub(crate) fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}
