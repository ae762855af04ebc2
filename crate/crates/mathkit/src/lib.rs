//! Exact-arithmetic math tools: a calculator (parse, evaluate, simplify)
//! and an equation solver (linear systems over the rationals, univariate
//! quadratics).
//!
//! Everything is computed with arbitrary-precision integers and rationals;
//! there is no floating-point mode. Ill-formed or unsolvable input never
//! panics: every failure is reported as a [`ToolResult`] error so callers
//! can surface it as conversation content.

pub mod expr;
pub mod parse;
pub mod simplify;
pub mod solve;

pub use expr::Expr;
pub use parse::{parse_expr, ParseError};
pub use simplify::{eval_expr, eval_to_rational, simplify, SimplifyError};
pub use solve::{
    parse_solve_command, solve_command, solve_system, solve_system_typed, EquationSystem,
    LinearSolution, QuadRoots, Solution, SolveError,
};

/// Outcome of a tool invocation: either a rendered result or a diagnostic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToolResult {
    pub ok: bool,
    pub content: String,
    pub error_kind: Option<ToolErrorKind>,
}

/// Failure classes a tool can report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToolErrorKind {
    ParseError,
    Unsolvable,
    DivisionByZero,
    Unsupported,
}

impl ToolResult {
    pub fn ok(content: impl Into<String>) -> Self {
        ToolResult {
            ok: true,
            content: content.into(),
            error_kind: None,
        }
    }

    pub fn err(kind: ToolErrorKind, diagnostic: impl Into<String>) -> Self {
        ToolResult {
            ok: false,
            content: diagnostic.into(),
            error_kind: Some(kind),
        }
    }

    /// Error result with no classified kind (used by non-math tools).
    pub fn err_unclassified(diagnostic: impl Into<String>) -> Self {
        ToolResult {
            ok: false,
            content: diagnostic.into(),
            error_kind: None,
        }
    }

    /// The single-line wire form: `Results: {content}.` or `Error: {diagnostic}.`
    pub fn wire_line(&self) -> String {
        if self.ok {
            format!("Results: {}.", self.content)
        } else {
            format!("Error: {}.", self.content)
        }
    }
}

/// Calculator entry point: parse a text expression, then evaluate or
/// simplify it, returning a canonically rendered result.
pub fn calculate(src: &str) -> ToolResult {
    match parse_expr(src) {
        Ok(e) => eval_expr(&e),
        Err(err) => ToolResult::err(ToolErrorKind::ParseError, err.to_string()),
    }
}
