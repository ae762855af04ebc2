//! Answer equivalence for accuracy scoring: surface normalization plus
//! exact math equality through the expression engine, so "1/2", "0.5",
//! and "\boxed{\frac{1}{2}}" all land in one class.

use chatcot::engine::extract_boxed;
use mathkit::{eval_to_rational, parse_expr, simplify};

#[derive(Clone, Copy, Debug)]
pub struct EquivOptions {
    /// Strip trailing degree and percent markers before comparing.
    pub strip_units: bool,
}

impl Default for EquivOptions {
    fn default() -> Self {
        EquivOptions { strip_units: true }
    }
}

/// Surface normalization: boxed wrapper, math-mode dollars, `\left`/
/// `\right`, whitespace, terminal punctuation, and (per flag) trailing
/// unit markers.
pub fn normalize_answer(raw: &str, opts: EquivOptions) -> String {
    let mut s = raw.trim().to_string();
    if let Some(inner) = extract_boxed(&s) {
        s = inner;
    }
    s = s.replace("\\left", "").replace("\\right", "");
    s = s.replace("\\!", "").replace("\\,", "");
    s = s.trim().trim_matches('$').trim().to_string();
    while let Some(stripped) = s.strip_suffix(['.', ',', ';', ':', '!', '?']) {
        s = stripped.trim_end().to_string();
    }
    if opts.strip_units {
        for suffix in ["^{\\circ}", "^\\circ", "\\%", "%", "°"] {
            if let Some(stripped) = s.strip_suffix(suffix) {
                s = stripped.trim_end().to_string();
            }
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn math_key(normalized: &str) -> Option<String> {
    let expr = parse_expr(normalized).ok()?;
    if let Ok(r) = eval_to_rational(&expr) {
        return Some(format!("rat:{r}"));
    }
    let simplified = simplify(&expr);
    simplified.ok.then(|| format!("sym:{}", simplified.content))
}

/// True when the normalized strings match, or both parse in the math
/// engine and are exactly equal as rationals or canonical simplified
/// forms. Reflexive and symmetric; unparseable inputs fall back to the
/// string comparison.
pub fn answer_equiv_with(a: &str, b: &str, opts: EquivOptions) -> bool {
    let na = normalize_answer(a, opts);
    let nb = normalize_answer(b, opts);
    if na == nb {
        return true;
    }
    let na_ci = na.to_lowercase();
    let nb_ci = nb.to_lowercase();
    if !na_ci.is_empty() && na_ci == nb_ci {
        return true;
    }
    match (math_key(&na), math_key(&nb)) {
        (Some(ka), Some(kb)) => ka == kb,
        _ => false,
    }
}

pub fn answer_equiv(a: &str, b: &str) -> bool {
    answer_equiv_with(a, b, EquivOptions::default())
}
