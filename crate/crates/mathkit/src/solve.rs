//! Equation solving: linear systems over exact rationals by Gaussian
//! elimination, and univariate quadratics via the discriminant.
//!
//! Wire argument format: `solve {eq1; eq2; ...} for {x, y, ...}`.

use std::collections::BTreeSet;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};

use crate::expr::Expr;
use crate::parse::parse_expr;
use crate::simplify::{
    extract_square, normalize, render_poly, render_rational, Atom, Poly, SimplifyError,
};
use crate::{ToolErrorKind, ToolResult};

/// A system of equations together with the variables to solve for.
#[derive(Clone, Debug)]
pub struct EquationSystem {
    pub equations: Vec<(Expr, Expr)>,
    pub unknowns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("inconsistent system: no solution")]
    Inconsistent,
    #[error("no real roots: negative discriminant")]
    NoRealRoots,
    #[error("{0}")]
    Unsupported(String),
    #[error("division by zero")]
    DivisionByZero,
}

impl From<SimplifyError> for SolveError {
    fn from(e: SimplifyError) -> Self {
        match e {
            SimplifyError::DivisionByZero => SolveError::DivisionByZero,
            SimplifyError::Unsupported(msg) => SolveError::Unsupported(msg),
        }
    }
}

impl EquationSystem {
    /// Validates the structural invariants: unknowns present, distinct, and
    /// each appearing in at least one equation.
    pub fn new(equations: Vec<(Expr, Expr)>, unknowns: Vec<String>) -> Result<Self, SolveError> {
        if equations.is_empty() {
            return Err(SolveError::InvalidSystem("no equations given".into()));
        }
        if unknowns.is_empty() {
            return Err(SolveError::InvalidSystem("no unknowns given".into()));
        }
        let mut seen = BTreeSet::new();
        for u in &unknowns {
            if !seen.insert(u.clone()) {
                return Err(SolveError::InvalidSystem(format!(
                    "duplicate unknown '{u}'"
                )));
            }
        }
        let mut appearing = BTreeSet::new();
        for (lhs, rhs) in &equations {
            lhs.free_symbols(&mut appearing);
            rhs.free_symbols(&mut appearing);
        }
        for u in &unknowns {
            if !appearing.contains(u) {
                return Err(SolveError::InvalidSystem(format!(
                    "unknown '{u}' does not appear in any equation"
                )));
            }
        }
        Ok(EquationSystem {
            equations,
            unknowns,
        })
    }
}

/// Result of a linear solve.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearSolution {
    /// Every unknown pinned; values may involve free (non-unknown) symbols.
    Unique(Vec<(String, Expr)>),
    /// Infinitely many solutions: pivot unknowns in terms of free unknowns.
    Underdetermined {
        assignments: Vec<(String, Expr)>,
        free: Vec<String>,
    },
}

/// Roots of a univariate quadratic.
#[derive(Clone, Debug, PartialEq)]
pub enum QuadRoots {
    /// One (double root) or two rational roots, ascending.
    Rational(Vec<BigRational>),
    /// `rational_part ± surd_coef * sqrt(radicand)` with `surd_coef > 0`
    /// and `radicand` squarefree.
    Surd {
        rational_part: BigRational,
        surd_coef: BigRational,
        radicand: BigInt,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Solution {
    Linear(LinearSolution),
    Quadratic { unknown: String, roots: QuadRoots },
}

/// One equation reduced against the unknowns: rational coefficients per
/// unknown plus the remaining polynomial moved to the right-hand side.
struct ReducedRow {
    coeffs: Vec<BigRational>,
    rhs: Poly,
}

enum RowShape {
    Linear(ReducedRow),
    /// Monomials that are nonlinear in the unknowns, left for the
    /// quadratic path or rejection.
    Nonlinear(Poly),
}

fn reduce_row(lhs: &Expr, rhs: &Expr, unknowns: &[String]) -> Result<RowShape, SolveError> {
    let delta = normalize(lhs)?.add(&normalize(rhs)?.neg());
    let mut coeffs = vec![BigRational::zero(); unknowns.len()];
    let mut rest = Poly::zero();
    let mut nonlinear = false;

    for (mono, coef) in &delta.terms {
        let unknown_atoms: Vec<(usize, i64)> = mono
            .0
            .iter()
            .filter_map(|(atom, exp)| match atom {
                Atom::Symbol(s) => unknowns.iter().position(|u| u == s).map(|i| (i, *exp)),
                Atom::Surd(_) => None,
            })
            .collect();
        match unknown_atoms.as_slice() {
            [] => rest.add_term(mono.clone(), coef.clone()),
            [(idx, 1)] if mono.0.len() == 1 => {
                coeffs[*idx] = &coeffs[*idx] + coef;
            }
            _ => nonlinear = true,
        }
    }

    if nonlinear {
        Ok(RowShape::Nonlinear(delta))
    } else {
        Ok(RowShape::Linear(ReducedRow {
            coeffs,
            rhs: rest.neg(),
        }))
    }
}

fn solve_linear(rows: Vec<ReducedRow>, unknowns: &[String]) -> Result<LinearSolution, SolveError> {
    let n = unknowns.len();
    let mut matrix: Vec<Vec<BigRational>> = rows.iter().map(|r| r.coeffs.clone()).collect();
    let mut rhs: Vec<Poly> = rows.into_iter().map(|r| r.rhs).collect();
    let m = matrix.len();

    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
    let mut rank = 0usize;
    for col in 0..n {
        let Some(pivot_row) = (rank..m).find(|&r| !matrix[r][col].is_zero()) else {
            continue;
        };
        matrix.swap(rank, pivot_row);
        rhs.swap(rank, pivot_row);
        let p = matrix[rank][col].clone();
        for c in col..n {
            matrix[rank][c] = &matrix[rank][c] / &p;
        }
        rhs[rank] = rhs[rank].scale(&p.recip());
        for r in 0..m {
            if r != rank && !matrix[r][col].is_zero() {
                let f = matrix[r][col].clone();
                for c in col..n {
                    let delta = &matrix[rank][c] * &f;
                    matrix[r][c] = &matrix[r][c] - &delta;
                }
                let scaled = rhs[rank].scale(&f);
                rhs[r] = rhs[r].add(&scaled.neg());
            }
        }
        pivot_of_col[col] = Some(rank);
        rank += 1;
    }

    for r in rank..m {
        if !rhs[r].is_zero() {
            return Err(SolveError::Inconsistent);
        }
    }

    let free: Vec<String> = (0..n)
        .filter(|c| pivot_of_col[*c].is_none())
        .map(|c| unknowns[c].clone())
        .collect();

    let mut assignments = Vec::new();
    for col in 0..n {
        let Some(row) = pivot_of_col[col] else {
            continue;
        };
        // x_col = rhs[row] - sum over free columns of coef * unknown
        let mut value = rhs[row].clone();
        for (fc, name) in (0..n).filter(|c| pivot_of_col[*c].is_none()).map(|c| (c, &unknowns[c])) {
            let coef = &matrix[row][fc];
            if !coef.is_zero() {
                value = value.add(&Poly::symbol(name).scale(&-coef.clone()));
            }
        }
        assignments.push((unknowns[col].clone(), value.to_expr()));
    }

    if free.is_empty() {
        Ok(LinearSolution::Unique(assignments))
    } else {
        Ok(LinearSolution::Underdetermined { assignments, free })
    }
}

fn solve_quadratic(delta: &Poly, unknown: &str) -> Result<QuadRoots, SolveError> {
    let mut a = BigRational::zero();
    let mut b = BigRational::zero();
    let mut c = BigRational::zero();
    for (mono, coef) in &delta.terms {
        match mono.0.as_slice() {
            [] => c = coef.clone(),
            [(Atom::Symbol(s), 1)] if s == unknown => b = coef.clone(),
            [(Atom::Symbol(s), 2)] if s == unknown => a = coef.clone(),
            _ => {
                return Err(SolveError::Unsupported(
                    "only linear systems and a single univariate quadratic are supported".into(),
                ))
            }
        }
    }
    if a.is_zero() {
        // degenerate: handled by the linear path before we get here
        return Err(SolveError::Unsupported(
            "not a quadratic in the unknown".into(),
        ));
    }
    let four: BigRational = BigRational::from_integer(4.into());
    let disc = &b * &b - four * &a * &c;
    if disc.is_negative() {
        return Err(SolveError::NoRealRoots);
    }
    let two_a = BigRational::from_integer(2.into()) * &a;
    let minus_b = -b;
    if disc.is_zero() {
        return Ok(QuadRoots::Rational(vec![minus_b / two_a]));
    }
    // sqrt(P/Q) = sqrt(P*Q)/Q, with the square part extracted
    let pq = disc.numer() * disc.denom();
    let (k, m) = extract_square(&pq);
    if m.is_one() {
        let root_disc = BigRational::new(k, disc.denom().clone());
        let r1 = (&minus_b - &root_disc) / &two_a;
        let r2 = (&minus_b + &root_disc) / &two_a;
        let mut roots = vec![r1, r2];
        roots.sort();
        roots.dedup();
        Ok(QuadRoots::Rational(roots))
    } else {
        let surd_coef = (BigRational::new(k, disc.denom().clone()) / &two_a).abs();
        Ok(QuadRoots::Surd {
            rational_part: minus_b / two_a,
            surd_coef,
            radicand: m,
        })
    }
}

/// Solves the system, classifying it as linear (any number of unknowns) or
/// a single univariate polynomial of degree two.
pub fn solve_system_typed(sys: &EquationSystem) -> Result<Solution, SolveError> {
    let mut linear_rows = Vec::new();
    let mut nonlinear: Vec<Poly> = Vec::new();
    for (lhs, rhs) in &sys.equations {
        match reduce_row(lhs, rhs, &sys.unknowns)? {
            RowShape::Linear(row) => linear_rows.push(row),
            RowShape::Nonlinear(delta) => nonlinear.push(delta),
        }
    }

    if nonlinear.is_empty() {
        return Ok(Solution::Linear(solve_linear(linear_rows, &sys.unknowns)?));
    }

    if nonlinear.len() == 1 && linear_rows.is_empty() && sys.unknowns.len() == 1 {
        let unknown = &sys.unknowns[0];
        let roots = solve_quadratic(&nonlinear[0], unknown)?;
        return Ok(Solution::Quadratic {
            unknown: unknown.clone(),
            roots,
        });
    }

    Err(SolveError::Unsupported(
        "nonlinear multivariate systems are not supported".into(),
    ))
}

fn render_surd_root(rational_part: &BigRational, surd_coef: &BigRational, radicand: &BigInt) -> String {
    // (P ± K*sqrt(M))/Q with a common denominator, gcd-reduced
    let q = rational_part.denom().lcm(surd_coef.denom());
    let p = rational_part.numer() * (&q / rational_part.denom());
    let k = surd_coef.numer() * (&q / surd_coef.denom());
    let g = p.gcd(&k).gcd(&q);
    let (p, k, q) = (&p / &g, &k / &g, &q / &g);

    let sqrt_part = if k.is_one() {
        format!("sqrt({radicand})")
    } else {
        format!("{k}*sqrt({radicand})")
    };
    if q.is_one() {
        if p.is_zero() {
            format!("±{sqrt_part}")
        } else {
            format!("{p} ± {sqrt_part}")
        }
    } else {
        format!("({p} ± {sqrt_part})/{q}")
    }
}

/// Renders a typed solution in the tool's wire vocabulary.
pub fn render_solution(sol: &Solution) -> String {
    match sol {
        Solution::Linear(LinearSolution::Unique(assignments)) => assignments
            .iter()
            .map(|(name, value)| match normalize(value) {
                Ok(p) => format!("{name} = {}", render_poly(&p)),
                Err(_) => format!("{name} = ?"),
            })
            .collect::<Vec<_>>()
            .join(", "),
        Solution::Linear(LinearSolution::Underdetermined { assignments, free }) => {
            let mut parts: Vec<String> = assignments
                .iter()
                .map(|(name, value)| match normalize(value) {
                    Ok(p) => format!("{name} = {}", render_poly(&p)),
                    Err(_) => format!("{name} = ?"),
                })
                .collect();
            for f in free {
                parts.push(format!("{f} is free"));
            }
            parts.join(", ")
        }
        Solution::Quadratic { unknown, roots } => match roots {
            QuadRoots::Rational(rs) => rs
                .iter()
                .map(|r| format!("{unknown} = {}", render_rational(r)))
                .collect::<Vec<_>>()
                .join(", "),
            QuadRoots::Surd {
                rational_part,
                surd_coef,
                radicand,
            } => format!(
                "{unknown} = {}",
                render_surd_root(rational_part, surd_coef, radicand)
            ),
        },
    }
}

/// Solves and renders, mapping failures onto [`ToolResult`] error kinds.
pub fn solve_system(sys: &EquationSystem) -> ToolResult {
    match solve_system_typed(sys) {
        Ok(sol) => ToolResult::ok(render_solution(&sol)),
        Err(SolveError::Inconsistent) => ToolResult::err(
            ToolErrorKind::Unsolvable,
            "inconsistent system: no solution",
        ),
        Err(SolveError::NoRealRoots) => ToolResult::err(
            ToolErrorKind::Unsolvable,
            "no real roots: negative discriminant",
        ),
        Err(SolveError::InvalidSystem(msg)) => ToolResult::err(ToolErrorKind::ParseError, msg),
        Err(SolveError::DivisionByZero) => {
            ToolResult::err(ToolErrorKind::DivisionByZero, "division by zero")
        }
        Err(SolveError::Unsupported(msg)) => ToolResult::err(ToolErrorKind::Unsupported, msg),
    }
}

/// Parses the wire argument `solve {eq1; eq2; ...} for {x, y, ...}`.
pub fn parse_solve_command(src: &str) -> Result<EquationSystem, SolveError> {
    let text = src.trim().trim_end_matches('.').trim();
    let lower = text.to_ascii_lowercase();
    if !lower.starts_with("solve") {
        return Err(SolveError::InvalidSystem(
            "expected 'solve {equations} for {unknowns}'".into(),
        ));
    }
    let rest = text["solve".len()..].trim_start();
    let (eq_block, after) = read_braced(rest).ok_or_else(|| {
        SolveError::InvalidSystem("expected '{' after 'solve'".into())
    })?;
    let after = after.trim_start();
    let after_lower = after.to_ascii_lowercase();
    if !after_lower.starts_with("for") {
        return Err(SolveError::InvalidSystem(
            "expected 'for' after the equation list".into(),
        ));
    }
    let rest = after["for".len()..].trim_start();
    let (var_block, tail) = read_braced(rest).ok_or_else(|| {
        SolveError::InvalidSystem("expected '{' after 'for'".into())
    })?;
    if !tail.trim().is_empty() {
        return Err(SolveError::InvalidSystem(
            "unexpected trailing input after the unknown list".into(),
        ));
    }

    let mut equations = Vec::new();
    for (i, part) in eq_block.split(';').enumerate() {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let Some((lhs_src, rhs_src)) = part.split_once('=') else {
            return Err(SolveError::InvalidSystem(format!(
                "equation {} has no '='",
                i + 1
            )));
        };
        let lhs = parse_expr(lhs_src)
            .map_err(|e| SolveError::InvalidSystem(format!("equation {}: {e}", i + 1)))?;
        let rhs = parse_expr(rhs_src)
            .map_err(|e| SolveError::InvalidSystem(format!("equation {}: {e}", i + 1)))?;
        equations.push((lhs, rhs));
    }

    let mut unknowns = Vec::new();
    for part in var_block.split(',') {
        let name = part.trim().trim_matches('$').trim();
        if name.is_empty() {
            continue;
        }
        if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            || !name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        {
            return Err(SolveError::InvalidSystem(format!(
                "'{name}' is not a valid unknown name"
            )));
        }
        unknowns.push(name.to_string());
    }

    EquationSystem::new(equations, unknowns)
}

/// Reads one `{...}` block (no nesting) and returns (inner, remainder).
fn read_braced(src: &str) -> Option<(&str, &str)> {
    let rest = src.trim_start();
    let inner_start = rest.strip_prefix('{')?;
    let close = inner_start.find('}')?;
    Some((&inner_start[..close], &inner_start[close + 1..]))
}

/// Equation-solver tool entry point over the wire argument format.
pub fn solve_command(src: &str) -> ToolResult {
    match parse_solve_command(src) {
        Ok(sys) => solve_system(&sys),
        Err(SolveError::InvalidSystem(msg)) => ToolResult::err(ToolErrorKind::ParseError, msg),
        Err(other) => ToolResult::err(ToolErrorKind::ParseError, other.to_string()),
    }
}
