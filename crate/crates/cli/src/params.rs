//! Parsing of weights, contrasts, ranges and monotone restrictions.

use aggbounds::{CovariateSupport, Monotone, OutcomeRange, ShapeConstraintSet};

use crate::error::{CliError, CliResult};

/// Comma-separated list of numbers.
pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .map_err(|_| CliError::input(format!("{t:?} is not a number (in {s:?})")))
        })
        .collect()
}

/// `LO:HI`
pub fn parse_range(s: &str) -> CliResult<OutcomeRange> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| CliError::input(format!("range {s:?} should look like LO:HI")))?;
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| CliError::input(format!("range {s:?}: {t:?} is not a number")))
    };
    Ok(OutcomeRange::new(num(lo)?, num(hi)?)?)
}

/// Support point named by its label, or by its covariate values separated by
/// commas.
fn resolve_cell(support: &CovariateSupport, arg: &str) -> CliResult<usize> {
    let arg = arg.trim();
    if let Some(k) = support.labels().iter().position(|l| l == arg) {
        return Ok(k);
    }
    let values = parse_list(arg).map_err(|_| CliError::input(format!("no support point labelled {arg:?}")))?;
    support
        .flat_index(&values)
        .map_err(|_| CliError::input(format!("({arg}) is not a support point")))
}

/// Weights from an expression like `cell(a) - cell(b)` or
/// `0.5*cell(1,0) + 0.5*cell(1,1) - cell(0,0)`.
pub fn parse_contrast(expr: &str, support: &CovariateSupport) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::input(format!("contrast {expr:?}: {why}"));
    let mut lambda = vec![0.0; support.len()];
    let mut rest = expr.trim();
    let mut first = true;
    while !rest.is_empty() {
        let mut sign = 1.0;
        if let Some(r) = rest.strip_prefix('-') {
            sign = -1.0;
            rest = r.trim_start();
        } else if let Some(r) = rest.strip_prefix('+') {
            rest = r.trim_start();
        } else if !first {
            return Err(bad("expected + or - between terms"));
        }
        first = false;
        let open = rest.find("cell(").ok_or_else(|| bad("expected cell(...)"))?;
        let coef_txt = rest[..open].trim().trim_end_matches('*').trim();
        let coef = if coef_txt.is_empty() {
            1.0
        } else {
            coef_txt.parse::<f64>().map_err(|_| bad(&format!("bad coefficient {coef_txt:?}")))?
        };
        let body = &rest[open + 5..];
        let close = body.find(')').ok_or_else(|| bad("unclosed cell("))?;
        lambda[resolve_cell(support, &body[..close])?] += sign * coef;
        rest = body[close + 1..].trim_start();
    }
    if first {
        return Err(bad("empty expression"));
    }
    Ok(lambda)
}

/// `COV:inc` or `COV:dec`, the covariate given by name or index.
pub fn parse_monotone(s: &str, support: &CovariateSupport) -> CliResult<ShapeConstraintSet> {
    let (cov, dir) = s
        .rsplit_once(':')
        .ok_or_else(|| CliError::input(format!("monotone {s:?} should look like COVARIATE:inc or COVARIATE:dec")))?;
    let l = support
        .covariate_index(cov)
        .or_else(|| cov.parse::<usize>().ok().filter(|l| *l < support.num_covariates()))
        .ok_or_else(|| CliError::input(format!("monotone {s:?}: unknown covariate {cov:?}")))?;
    let dir = match dir.to_ascii_lowercase().as_str() {
        "inc" | "increasing" | "up" => Monotone::Increasing,
        "dec" | "decreasing" | "down" => Monotone::Decreasing,
        other => return Err(CliError::input(format!("monotone {s:?}: direction {other:?} is not inc or dec"))),
    };
    Ok(ShapeConstraintSet::monotone(support, l, dir)?)
}
