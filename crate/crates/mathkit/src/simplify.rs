//! Evaluation and simplification over a polynomial normal form.
//!
//! Expressions are normalized into a sum of monomials with exact rational
//! coefficients. Monomial atoms are symbols and square roots of squarefree
//! integers, so constant arithmetic, like-term collection, fraction
//! reduction, and surd normalization all fall out of one representation.
//! Normalization is a fixpoint: rendering and re-normalizing is stable.

use std::collections::BTreeMap;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};

use crate::expr::Expr;
use crate::{ToolErrorKind, ToolResult};

/// Why an expression could not be normalized.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimplifyError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{0}")]
    Unsupported(String),
}

fn unsupported(msg: impl Into<String>) -> SimplifyError {
    SimplifyError::Unsupported(msg.into())
}

/// A multiplicative atom inside a monomial. Symbols order before surds so
/// rendered terms lead with variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Atom {
    Symbol(String),
    Surd(BigInt),
}

/// Product of atoms raised to nonzero integer powers, kept sorted by atom.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Monomial(pub(crate) Vec<(Atom, i64)>);

impl Monomial {
    fn unit() -> Self {
        Monomial(Vec::new())
    }

    fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    fn symbol(name: &str) -> Self {
        Monomial(vec![(Atom::Symbol(name.to_string()), 1)])
    }
}

/// Normal form: monomial -> coefficient, with no zero coefficients stored.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub(crate) struct Poly {
    pub(crate) terms: BTreeMap<Monomial, BigRational>,
}

/// Integer power of a rational, with negative exponents inverting.
fn rational_pow(base: &BigRational, exp: i64) -> Result<BigRational, SimplifyError> {
    if exp == 0 {
        return Ok(BigRational::one());
    }
    if base.is_zero() && exp < 0 {
        return Err(SimplifyError::DivisionByZero);
    }
    let mag: u32 = exp
        .unsigned_abs()
        .try_into()
        .map_err(|_| unsupported("exponent too large"))?;
    let numer = num::pow::Pow::pow(base.numer(), mag);
    let denom = num::pow::Pow::pow(base.denom(), mag);
    let powed = BigRational::new(numer, denom);
    if exp < 0 {
        Ok(powed.recip())
    } else {
        Ok(powed)
    }
}

/// Splits `n > 0` into `(k, m)` with `n = k^2 * m` and `m` squarefree
/// (up to a trial-division bound, with a final perfect-square check).
pub(crate) fn extract_square(n: &BigInt) -> (BigInt, BigInt) {
    let mut k = BigInt::one();
    let mut m = BigInt::one();
    let mut rest = n.clone();
    let mut p = BigInt::from(2);
    let bound = BigInt::from(1000);
    while &p * &p <= rest && p <= bound {
        if rest.is_multiple_of(&p) {
            let mut count = 0u32;
            while rest.is_multiple_of(&p) {
                rest /= &p;
                count += 1;
            }
            k *= num::pow::Pow::pow(&p, count / 2);
            if count % 2 == 1 {
                m *= &p;
            }
        }
        p += 1;
    }
    if rest > BigInt::one() {
        let root = rest.sqrt();
        if &root * &root == rest {
            k *= root;
        } else {
            m *= rest;
        }
    }
    (k, m)
}

/// `sqrt(r)` for `r >= 0` as `coef * sqrt(radicand)`, radicand squarefree.
fn sqrt_rational(r: &BigRational) -> Result<(BigRational, Option<BigInt>), SimplifyError> {
    if r.is_negative() {
        return Err(unsupported("square root of a negative value"));
    }
    if r.is_zero() {
        return Ok((BigRational::zero(), None));
    }
    // sqrt(p/q) = sqrt(p*q)/q
    let pq = r.numer() * r.denom();
    let (k, m) = extract_square(&pq);
    let coef = BigRational::new(k, r.denom().clone());
    if m.is_one() {
        Ok((coef, None))
    } else {
        Ok((coef, Some(m)))
    }
}

impl Poly {
    pub(crate) fn zero() -> Self {
        Poly::default()
    }

    pub(crate) fn constant(r: BigRational) -> Self {
        let mut p = Poly::zero();
        if !r.is_zero() {
            p.terms.insert(Monomial::unit(), r);
        }
        p
    }

    pub(crate) fn symbol(name: &str) -> Self {
        let mut p = Poly::zero();
        p.terms.insert(Monomial::symbol(name), BigRational::one());
        p
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Some(coefficient) when the polynomial is a bare constant.
    pub(crate) fn as_constant(&self) -> Option<BigRational> {
        if self.terms.is_empty() {
            return Some(BigRational::zero());
        }
        if self.terms.len() == 1 {
            if let Some((m, c)) = self.terms.iter().next() {
                if m.is_unit() {
                    return Some(c.clone());
                }
            }
        }
        None
    }

    pub(crate) fn add_term(&mut self, mono: Monomial, coef: BigRational) {
        if coef.is_zero() {
            return;
        }
        let combined = match self.terms.get(&mono) {
            Some(existing) => existing + &coef,
            None => coef,
        };
        if combined.is_zero() {
            self.terms.remove(&mono);
        } else {
            self.terms.insert(mono, combined);
        }
    }

    pub(crate) fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub(crate) fn neg(&self) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.terms.insert(m.clone(), -c.clone());
        }
        out
    }

    pub(crate) fn scale(&self, factor: &BigRational) -> Poly {
        let mut out = Poly::zero();
        if factor.is_zero() {
            return out;
        }
        for (m, c) in &self.terms {
            out.terms.insert(m.clone(), c * factor);
        }
        out
    }

    pub(crate) fn mul(&self, other: &Poly) -> Result<Poly, SimplifyError> {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let (mono, extra) = mul_monomials(ma, mb)?;
                out.add_term(mono, ca * cb * extra);
            }
        }
        Ok(out)
    }

    fn pow(&self, exp: i64) -> Result<Poly, SimplifyError> {
        if exp == 0 {
            return Ok(Poly::constant(BigRational::one()));
        }
        if let Some(c) = self.as_constant() {
            return Ok(Poly::constant(rational_pow(&c, exp)?));
        }
        if exp < 0 {
            // only single-term polynomials can be inverted exactly
            if self.terms.len() == 1 {
                let inverted = self.invert_single()?;
                return inverted.pow(-exp);
            }
            return Err(unsupported("division by a multi-term expression"));
        }
        if self.terms.len() == 1 {
            let (mono, coef) = self.terms.iter().next().expect("one term");
            let mut atoms: BTreeMap<Atom, i64> = BTreeMap::new();
            for (a, e) in &mono.0 {
                atoms.insert(a.clone(), e * exp);
            }
            let (mono, extra) = normalize_atoms(atoms)?;
            let mut out = Poly::zero();
            out.add_term(mono, rational_pow(coef, exp)? * extra);
            return Ok(out);
        }
        if exp > 32 {
            return Err(unsupported("exponent too large to expand"));
        }
        let mut acc = Poly::constant(BigRational::one());
        for _ in 0..exp {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    fn invert_single(&self) -> Result<Poly, SimplifyError> {
        let (mono, coef) = self.terms.iter().next().expect("one term");
        if coef.is_zero() {
            return Err(SimplifyError::DivisionByZero);
        }
        let mut atoms: BTreeMap<Atom, i64> = BTreeMap::new();
        for (a, e) in &mono.0 {
            atoms.insert(a.clone(), -e);
        }
        let (mono, extra) = normalize_atoms(atoms)?;
        let mut out = Poly::zero();
        out.add_term(mono, coef.recip() * extra);
        Ok(out)
    }

    /// Rebuilds an [`Expr`] tree equal to this polynomial.
    pub(crate) fn to_expr(&self) -> Expr {
        if self.is_zero() {
            return Expr::int(0);
        }
        let mut terms = Vec::new();
        for (mono, coef) in render_order(self) {
            let mut factors = Vec::new();
            if !coef.is_one() || mono.is_unit() {
                factors.push(Expr::rational(coef.clone()));
            }
            for (atom, exp) in &mono.0 {
                let base = match atom {
                    Atom::Symbol(s) => Expr::symbol(s.clone()),
                    Atom::Surd(m) => Expr::sqrt(Expr::integer(m.clone())),
                };
                if *exp == 1 {
                    factors.push(base);
                } else {
                    factors.push(Expr::pow(base, Expr::int(*exp)));
                }
            }
            terms.push(Expr::mul(factors));
        }
        Expr::add(terms)
    }
}

/// Merges atom exponents, folding surds: even surd powers become integer
/// factors and distinct surds in one monomial combine into one radicand.
fn normalize_atoms(atoms: BTreeMap<Atom, i64>) -> Result<(Monomial, BigRational), SimplifyError> {
    let mut extra = BigRational::one();
    let mut kept: Vec<(Atom, i64)> = Vec::new();
    let mut radicand = BigInt::one();
    for (atom, exp) in atoms {
        if exp == 0 {
            continue;
        }
        match atom {
            Atom::Symbol(_) => kept.push((atom, exp)),
            Atom::Surd(m) => {
                // 1/sqrt(m) = sqrt(m)/m
                let mut e = exp;
                if e < 0 {
                    extra *= rational_pow(
                        &BigRational::from_integer(m.clone()),
                        e, // m^e with e negative
                    )?;
                    e = -e;
                }
                // sqrt(m)^e = m^(e/2) * sqrt(m)^(e%2)
                let whole = e / 2;
                if whole > 0 {
                    extra *= rational_pow(&BigRational::from_integer(m.clone()), whole)?;
                }
                if e % 2 == 1 {
                    radicand *= &m;
                }
            }
        }
    }
    if !radicand.is_one() {
        let (k, m) = extract_square(&radicand);
        extra *= BigRational::from_integer(k);
        if !m.is_one() {
            kept.push((Atom::Surd(m), 1));
        }
    }
    kept.sort();
    Ok((Monomial(kept), extra))
}

fn mul_monomials(a: &Monomial, b: &Monomial) -> Result<(Monomial, BigRational), SimplifyError> {
    let mut atoms: BTreeMap<Atom, i64> = BTreeMap::new();
    for (atom, exp) in a.0.iter().chain(b.0.iter()) {
        *atoms.entry(atom.clone()).or_insert(0) += exp;
    }
    normalize_atoms(atoms)
}

/// Normalizes an expression into polynomial form.
pub(crate) fn normalize(e: &Expr) -> Result<Poly, SimplifyError> {
    match e {
        Expr::Integer(n) => Ok(Poly::constant(BigRational::from_integer(n.clone()))),
        Expr::Rational(r) => Ok(Poly::constant(r.clone())),
        Expr::Symbol(s) => Ok(Poly::symbol(s)),
        Expr::Add(xs) => {
            let mut acc = Poly::zero();
            for x in xs {
                acc = acc.add(&normalize(x)?);
            }
            Ok(acc)
        }
        Expr::Mul(xs) => {
            let mut acc = Poly::constant(BigRational::one());
            for x in xs {
                acc = acc.mul(&normalize(x)?)?;
            }
            Ok(acc)
        }
        Expr::Neg(x) => Ok(normalize(x)?.neg()),
        Expr::Pow(base, exponent) => {
            let exp_poly = normalize(exponent)?;
            let exp_const = exp_poly
                .as_constant()
                .ok_or_else(|| unsupported("symbolic exponent"))?;
            if !exp_const.is_integer() {
                return Err(unsupported("fractional exponent"));
            }
            let exp: i64 = exp_const
                .to_integer()
                .try_into()
                .map_err(|_| unsupported("exponent too large"))?;
            normalize(base)?.pow(exp)
        }
        Expr::Mod(a, b) => {
            let pa = normalize(a)?
                .as_constant()
                .ok_or_else(|| unsupported("mod of a symbolic expression"))?;
            let pb = normalize(b)?
                .as_constant()
                .ok_or_else(|| unsupported("mod of a symbolic expression"))?;
            if pb.is_zero() {
                return Err(SimplifyError::DivisionByZero);
            }
            if !pa.is_integer() || !pb.is_integer() {
                return Err(unsupported("mod requires integer operands"));
            }
            // remainder in [0, |m|)
            let rem = pa.to_integer().mod_floor(&pb.to_integer().abs());
            Ok(Poly::constant(BigRational::from_integer(rem)))
        }
        Expr::Sqrt(x) => {
            let inner = normalize(x)?
                .as_constant()
                .ok_or_else(|| unsupported("square root of a symbolic expression"))?;
            let (coef, radicand) = sqrt_rational(&inner)?;
            let mut out = Poly::zero();
            match radicand {
                None => out.add_term(Monomial::unit(), coef),
                Some(m) => out.add_term(Monomial(vec![(Atom::Surd(m), 1)]), coef),
            }
            Ok(out)
        }
        Expr::Abs(x) => {
            let inner = normalize(x)?
                .as_constant()
                .ok_or_else(|| unsupported("absolute value of a symbolic expression"))?;
            Ok(Poly::constant(inner.abs()))
        }
    }
}

/// Terms in canonical render order: exponent vectors over the sorted atom
/// universe, descending, which puts the constant term last. A leading
/// negative term yields to positive terms when any exist.
fn render_order(p: &Poly) -> Vec<(&Monomial, &BigRational)> {
    let mut universe: Vec<&Atom> = Vec::new();
    for mono in p.terms.keys() {
        for (atom, _) in &mono.0 {
            if !universe.contains(&atom) {
                universe.push(atom);
            }
        }
    }
    universe.sort();

    let vector = |mono: &Monomial| -> Vec<i64> {
        universe
            .iter()
            .map(|atom| {
                mono.0
                    .iter()
                    .find(|(a, _)| a == *atom)
                    .map(|(_, e)| *e)
                    .unwrap_or(0)
            })
            .collect()
    };

    let mut terms: Vec<(&Monomial, &BigRational)> = p.terms.iter().collect();
    terms.sort_by(|(ma, _), (mb, _)| vector(mb).cmp(&vector(ma)));

    if let Some((_, first)) = terms.first() {
        if first.is_negative() && terms.iter().any(|(_, c)| c.is_positive()) {
            let (pos, neg): (Vec<_>, Vec<_>) = terms.into_iter().partition(|(_, c)| c.is_positive());
            terms = pos;
            terms.extend(neg);
        }
    }
    terms
}

pub(crate) fn render_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn render_atom(atom: &Atom, exp: i64) -> String {
    let base = match atom {
        Atom::Symbol(s) => s.clone(),
        Atom::Surd(m) => format!("sqrt({m})"),
    };
    let e = exp.abs();
    if e == 1 {
        base
    } else {
        format!("{base}^{e}")
    }
}

/// One term as `magnitude_string` (sign handled by the caller).
fn render_term(mono: &Monomial, coef: &BigRational) -> String {
    let c = coef.abs();
    let mut numer_factors: Vec<String> = Vec::new();
    let mut denom_factors: Vec<String> = Vec::new();

    let num_atoms: Vec<&(Atom, i64)> = mono.0.iter().filter(|(_, e)| *e > 0).collect();
    let den_atoms: Vec<&(Atom, i64)> = mono.0.iter().filter(|(_, e)| *e < 0).collect();

    if !c.numer().is_one() || num_atoms.is_empty() {
        numer_factors.push(c.numer().to_string());
    }
    for (atom, exp) in &num_atoms {
        numer_factors.push(render_atom(atom, *exp));
    }
    if !c.denom().is_one() {
        denom_factors.push(c.denom().to_string());
    }
    for (atom, exp) in &den_atoms {
        denom_factors.push(render_atom(atom, *exp));
    }

    let numer = numer_factors.join("*");
    match denom_factors.len() {
        0 => numer,
        1 => format!("{numer}/{}", denom_factors[0]),
        _ => format!("{numer}/({})", denom_factors.join("*")),
    }
}

/// Canonical rendering of a polynomial.
pub(crate) fn render_poly(p: &Poly) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, (mono, coef)) in render_order(p).into_iter().enumerate() {
        if i == 0 {
            if coef.is_negative() {
                out.push('-');
            }
        } else if coef.is_negative() {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        out.push_str(&render_term(mono, coef));
    }
    out
}

fn to_tool_result(r: Result<Poly, SimplifyError>) -> ToolResult {
    match r {
        Ok(p) => ToolResult::ok(render_poly(&p)),
        Err(SimplifyError::DivisionByZero) => {
            ToolResult::err(ToolErrorKind::DivisionByZero, "division by zero")
        }
        Err(SimplifyError::Unsupported(msg)) => ToolResult::err(ToolErrorKind::Unsupported, msg),
    }
}

/// Evaluates an expression to its exact canonical form.
///
/// Constant expressions render as integers or reduced fractions; anything
/// with free symbols (or an irrational square root) falls through to the
/// simplified symbolic form with `ok = true`.
pub fn eval_expr(e: &Expr) -> ToolResult {
    to_tool_result(normalize(e))
}

/// Simplifies an expression: flattens sums and products, combines like
/// terms, reduces fractions, and orders terms canonically.
pub fn simplify(e: &Expr) -> ToolResult {
    to_tool_result(normalize(e))
}

/// Evaluates a constant expression to an exact rational, failing on free
/// symbols and surds.
pub fn eval_to_rational(e: &Expr) -> Result<BigRational, SimplifyError> {
    normalize(e)?
        .as_constant()
        .ok_or_else(|| unsupported("not a constant expression"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse_expr;

    fn simp(src: &str) -> ToolResult {
        simplify(&parse_expr(src).unwrap())
    }

    #[test]
    fn eval_mod_appendix_case() {
        let r = simp("302875106592258 mod 6");
        assert!(r.ok);
        assert_eq!(r.content, "0");
    }

    #[test]
    fn eval_power_13_13() {
        let r = simp("13^13");
        assert_eq!(r.content, "302875106592253");
        let r = simp("13^13+5");
        assert_eq!(r.content, "302875106592258");
    }

    #[test]
    fn fraction_arithmetic() {
        assert_eq!(simp("1/2 + 1/3").content, "5/6");
        assert_eq!(simp("4/8 + 1/8").content, "5/8");
        assert_eq!(simp("\\frac{1}{2} + \\frac{1}{3}").content, "5/6");
    }

    #[test]
    fn like_terms_combine() {
        assert_eq!(simp("2x+3x").content, "5*x");
        assert_eq!(simp("(x+1)+(x+1)").content, "2*x + 2");
        assert_eq!(simp("x*x + 2*x*x").content, "3*x^2");
    }

    #[test]
    fn expansion_orders_terms() {
        assert_eq!(simp("(x+1)*(x+1)").content, "x^2 + 2*x + 1");
        assert_eq!(simp("(x+y)^2").content, "x^2 + 2*x*y + y^2");
    }

    #[test]
    fn leading_negative_yields_to_positive() {
        assert_eq!(simp("10 - 2*e").content, "10 - 2*e");
        assert_eq!(simp("-2*e + 10").content, "10 - 2*e");
        assert_eq!(simp("x - 2").content, "x - 2");
        assert_eq!(simp("-x - 2").content, "-x - 2");
    }

    #[test]
    fn surds_normalize() {
        assert_eq!(simp("sqrt(4)").content, "2");
        assert_eq!(simp("sqrt(8)").content, "2*sqrt(2)");
        assert_eq!(simp("sqrt(1/4)").content, "1/2");
        assert_eq!(simp("sqrt(2)*sqrt(2)").content, "2");
        assert_eq!(simp("sqrt(2)*sqrt(3)").content, "sqrt(6)");
        assert_eq!(simp("sqrt(18) + sqrt(2)").content, "4*sqrt(2)");
        assert_eq!(simp("1/sqrt(2)").content, "sqrt(2)/2");
    }

    #[test]
    fn mod_result_always_in_range() {
        assert_eq!(simp("-7 mod 3").content, "2");
        assert_eq!(simp("-7 mod -3").content, "2");
        assert_eq!(simp("7 mod -3").content, "1");
    }

    #[test]
    fn division_by_zero_reported() {
        let r = simp("1/0");
        assert!(!r.ok);
        assert_eq!(r.error_kind, Some(ToolErrorKind::DivisionByZero));
        let r = simp("5 mod (1-1)");
        assert_eq!(r.error_kind, Some(ToolErrorKind::DivisionByZero));
    }

    #[test]
    fn unsupported_constructs_reported() {
        let r = simp("sqrt(x)");
        assert!(!r.ok);
        assert_eq!(r.error_kind, Some(ToolErrorKind::Unsupported));
        let r = simp("x mod 3");
        assert_eq!(r.error_kind, Some(ToolErrorKind::Unsupported));
        let r = simp("2^(1/2)");
        assert_eq!(r.error_kind, Some(ToolErrorKind::Unsupported));
        let r = simp("sqrt(-1)");
        assert_eq!(r.error_kind, Some(ToolErrorKind::Unsupported));
    }

    #[test]
    fn simplify_is_a_fixpoint() {
        for src in [
            "2x+3x",
            "(x+1)*(x-1)",
            "4/8 + 1/8",
            "sqrt(8) + x/2",
            "10 - 2*e",
            "(x+y)^2 - x^2",
        ] {
            let once = simp(src);
            assert!(once.ok, "{src}");
            let twice = simp(&once.content);
            assert_eq!(once.content, twice.content, "{src}");
        }
    }

    #[test]
    fn negative_powers_render_as_quotients() {
        assert_eq!(simp("x/2").content, "x/2");
        assert_eq!(simp("2/x + 3/x").content, "5/x");
        assert_eq!(simp("3/(2*x)").content, "3/(2*x)");
    }

    #[test]
    fn zero_zero_power_is_one() {
        assert_eq!(simp("0^0").content, "1");
    }
}
