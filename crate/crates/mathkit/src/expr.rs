//! The expression AST and its smart constructors.

use std::collections::{BTreeMap, BTreeSet};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};

/// Exact-arithmetic expression tree.
///
/// `Rational` nodes are always in lowest terms with a positive denominator
/// and are never whole numbers (those normalize to `Integer`). `Add` and
/// `Mul` carry at least two operands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Integer(BigInt),
    Rational(BigRational),
    Symbol(String),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Mod(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sqrt(Box<Expr>),
    Abs(Box<Expr>),
}

/// Construction of `Mod` with a literal zero modulus is rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeroModulus;

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Integer(BigInt::from(n))
    }

    pub fn integer(n: BigInt) -> Expr {
        Expr::Integer(n)
    }

    /// Normalizes whole-number rationals down to `Integer`.
    pub fn rational(r: BigRational) -> Expr {
        if r.is_integer() {
            Expr::Integer(r.to_integer())
        } else {
            Expr::Rational(r)
        }
    }

    pub fn symbol(name: impl Into<String>) -> Expr {
        Expr::Symbol(name.into())
    }

    /// Flattening sum constructor: nested `Add`s are spliced in, a single
    /// operand is returned as-is, and an empty list is zero.
    pub fn add(terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                Expr::Add(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Expr::int(0),
            1 => flat.pop().unwrap(),
            _ => Expr::Add(flat),
        }
    }

    /// Flattening product constructor, mirroring [`Expr::add`].
    pub fn mul(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        for f in factors {
            match f {
                Expr::Mul(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Expr::int(1),
            1 => flat.pop().unwrap(),
            _ => Expr::Mul(flat),
        }
    }

    pub fn pow(base: Expr, exponent: Expr) -> Expr {
        Expr::Pow(Box::new(base), Box::new(exponent))
    }

    /// Quotient `a / b`. Integer literals fold directly into an exact
    /// rational; everything else becomes `a * b^-1`.
    pub fn div(numer: Expr, denom: Expr) -> Expr {
        if let (Expr::Integer(p), Expr::Integer(q)) = (&numer, &denom) {
            if !q.is_zero() {
                return Expr::rational(BigRational::new(p.clone(), q.clone()));
            }
        }
        Expr::mul(vec![numer, Expr::pow(denom, Expr::int(-1))])
    }

    pub fn modulo(value: Expr, modulus: Expr) -> Result<Expr, ZeroModulus> {
        let literally_zero = match &modulus {
            Expr::Integer(n) => n.is_zero(),
            Expr::Rational(r) => r.is_zero(),
            _ => false,
        };
        if literally_zero {
            return Err(ZeroModulus);
        }
        Ok(Expr::Mod(Box::new(value), Box::new(modulus)))
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn sqrt(e: Expr) -> Expr {
        Expr::Sqrt(Box::new(e))
    }

    pub fn abs(e: Expr) -> Expr {
        Expr::Abs(Box::new(e))
    }

    pub fn is_zero_literal(&self) -> bool {
        match self {
            Expr::Integer(n) => n.is_zero(),
            Expr::Rational(r) => r.is_zero(),
            _ => false,
        }
    }

    pub fn is_one_literal(&self) -> bool {
        match self {
            Expr::Integer(n) => n.is_one(),
            Expr::Rational(r) => r.is_one(),
            _ => false,
        }
    }

    /// Collects the names of all free symbols into `out`.
    pub fn free_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Integer(_) | Expr::Rational(_) => {}
            Expr::Symbol(s) => {
                out.insert(s.clone());
            }
            Expr::Add(xs) | Expr::Mul(xs) => {
                for x in xs {
                    x.free_symbols(out);
                }
            }
            Expr::Pow(a, b) | Expr::Mod(a, b) => {
                a.free_symbols(out);
                b.free_symbols(out);
            }
            Expr::Neg(a) | Expr::Sqrt(a) | Expr::Abs(a) => a.free_symbols(out),
        }
    }

    /// Replaces every symbol found in `bindings` with its expression.
    pub fn substitute(&self, bindings: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Integer(_) | Expr::Rational(_) => self.clone(),
            Expr::Symbol(s) => bindings.get(s).cloned().unwrap_or_else(|| self.clone()),
            Expr::Add(xs) => Expr::add(xs.iter().map(|x| x.substitute(bindings)).collect()),
            Expr::Mul(xs) => Expr::mul(xs.iter().map(|x| x.substitute(bindings)).collect()),
            Expr::Pow(a, b) => Expr::pow(a.substitute(bindings), b.substitute(bindings)),
            Expr::Mod(a, b) => {
                Expr::Mod(Box::new(a.substitute(bindings)), Box::new(b.substitute(bindings)))
            }
            Expr::Neg(a) => Expr::neg(a.substitute(bindings)),
            Expr::Sqrt(a) => Expr::sqrt(a.substitute(bindings)),
            Expr::Abs(a) => Expr::abs(a.substitute(bindings)),
        }
    }
}
