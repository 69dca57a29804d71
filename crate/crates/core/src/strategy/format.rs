//! Line-oriented strategy tables: `n s t`, then `s` lines of `t` pairs `p:q`.

use std::fmt::Write as _;

use super::{PStep, PStrategy, PivotPair, StrategyError, StrategyKind};

pub fn write_strategy(s: &PStrategy) -> String {
    let n = s.order();
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", n, s.steps().len(), n / 2);
    for step in s.steps() {
        let line: Vec<String> = step.pairs().iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Parses and validates a strategy table; blank lines and `#` comments are skipped.
pub fn parse_strategy(text: &str, kind: StrategyKind) -> Result<PStrategy, StrategyError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let perr = |line: usize, msg: String| StrategyError::Parse { line, msg };

    let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty input".into()))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|w| w.parse().map_err(|_| perr(hl, format!("bad number {w:?}"))))
        .collect::<Result<_, _>>()?;
    let [n, s, t] = nums[..] else {
        return Err(perr(hl, "header must be `n s t`".into()));
    };
    let mut steps = Vec::with_capacity(s);
    for (ln, line) in lines {
        let mut pairs = Vec::with_capacity(t);
        for tok in line.split_whitespace() {
            let (p, q) = tok
                .split_once(':')
                .ok_or_else(|| perr(ln, format!("expected p:q, got {tok:?}")))?;
            let p = p.parse().map_err(|_| perr(ln, format!("bad index {p:?}")))?;
            let q = q.parse().map_err(|_| perr(ln, format!("bad index {q:?}")))?;
            pairs.push(PivotPair::new(p, q));
        }
        if pairs.len() != t {
            return Err(perr(ln, format!("expected {t} pairs, got {}", pairs.len())));
        }
        steps.push(PStep(pairs));
    }
    if steps.len() != s {
        return Err(perr(0, format!("expected {s} steps, got {}", steps.len())));
    }
    PStrategy::new(n, steps, kind)
}
