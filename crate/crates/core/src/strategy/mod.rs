//! Cyclic and perfectly parallel pivot strategies.
//!
//! A p-strategy of even order `n` is a list of `n - 1` steps, each holding
//! `n / 2` disjoint pivot pairs, which together cover every pair `(i, j)`,
//! `1 <= i < j <= n`, exactly once. Index pairs are 1-based throughout this
//! module, matching how strategies are written down and serialized.

mod baselines;
mod format;
mod search;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use baselines::{brent_luk, modified_modulus};
pub use format::{parse_strategy, write_strategy};
pub use search::{closest_pstrategy, closest_pstrategy_with, generate, SearchLimits};

/// A pivot pair `(p, q)` with `1 <= p < q <= n`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PivotPair {
    pub p: usize,
    pub q: usize,
}

impl PivotPair {
    #[inline]
    pub const fn new(p: usize, q: usize) -> Self {
        Self { p, q }
    }

    #[inline]
    pub fn collides(&self, other: &PivotPair) -> bool {
        self.p == other.p || self.p == other.q || self.q == other.p || self.q == other.q
    }
}

impl fmt::Display for PivotPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.p, self.q)
    }
}

/// One parallel step: pairwise disjoint pivot pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct PStep(pub Vec<PivotPair>);

impl PStep {
    pub fn pairs(&self) -> &[PivotPair] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<(usize, usize)>> for PStep {
    fn from(v: Vec<(usize, usize)>) -> Self {
        PStep(v.into_iter().map(|(p, q)| PivotPair::new(p, q)).collect())
    }
}

/// Which sequential ordering a closest strategy is measured against.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum CyclicKind {
    Row,
    Col,
}

/// Provenance tag of a [`PStrategy`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    RowClosest,
    ColClosest,
    ReversedRow,
    ReversedCol,
    BrentLuk,
    ModifiedModulus,
    Custom,
}

impl StrategyKind {
    /// Short name used on the command line and in strategy files.
    pub fn short_name(self) -> &'static str {
        match self {
            StrategyKind::RowClosest => "row",
            StrategyKind::ColClosest => "col",
            StrategyKind::ReversedRow => "rrow",
            StrategyKind::ReversedCol => "rcol",
            StrategyKind::BrentLuk => "bl",
            StrategyKind::ModifiedModulus => "mm",
            StrategyKind::Custom => "custom",
        }
    }

    pub fn from_short_name(s: &str) -> Option<Self> {
        Some(match s {
            "row" => StrategyKind::RowClosest,
            "col" => StrategyKind::ColClosest,
            "rrow" => StrategyKind::ReversedRow,
            "rcol" => StrategyKind::ReversedCol,
            "bl" => StrategyKind::BrentLuk,
            "mm" => StrategyKind::ModifiedModulus,
            "custom" => StrategyKind::Custom,
            _ => return None,
        })
    }

    fn reversed(self) -> Self {
        match self {
            StrategyKind::RowClosest => StrategyKind::ReversedRow,
            StrategyKind::ReversedRow => StrategyKind::RowClosest,
            StrategyKind::ColClosest => StrategyKind::ReversedCol,
            StrategyKind::ReversedCol => StrategyKind::ColClosest,
            other => other,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Structural defects reported by [`validate_pstrategy`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    OddOrder { n: usize },
    WrongStepCount { expected: usize, found: usize },
    WrongStepSize { step: usize, expected: usize, found: usize },
    PairOutOfRange { step: usize, pair: PivotPair },
    Collision { step: usize, a: PivotPair, b: PivotPair },
    Duplicated { pair: PivotPair, count: usize },
    Missing { pair: PivotPair },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OddOrder { n } => write!(f, "order {n} is odd"),
            Violation::WrongStepCount { expected, found } => {
                write!(f, "expected {expected} steps, found {found}")
            }
            Violation::WrongStepSize { step, expected, found } => {
                write!(f, "step {step} has {found} pairs, expected {expected}")
            }
            Violation::PairOutOfRange { step, pair } => {
                write!(f, "step {step}: pair {pair} is not a valid pivot pair")
            }
            Violation::Collision { step, a, b } => {
                write!(f, "step {step}: pairs {a} and {b} collide")
            }
            Violation::Duplicated { pair, count } => {
                write!(f, "pair {pair} occurs {count} times")
            }
            Violation::Missing { pair } => write!(f, "pair {pair} never occurs"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StrategyError {
    #[error("order {0} is too small (need n >= 2)")]
    OrderTooSmall(usize),
    #[error("order {0} is odd; p-strategies need an even order")]
    OddOrder(usize),
    #[error("order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
    #[error("invalid p-strategy: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("closest-strategy search for n = {n} exceeded the budget of {nodes} nodes; compose a smaller order with expansion instead")]
    SearchBudgetExceeded { n: usize, nodes: u64 },
    #[error("order {n} exceeds the search cap {cap}")]
    AboveSearchCap { n: usize, cap: usize },
    #[error("strategy kind {0} cannot be expanded; only row/col closest strategies can")]
    NotExpandable(StrategyKind),
    #[error("strategy file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A perfectly parallel cyclic strategy.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PStrategy {
    n: usize,
    steps: Vec<PStep>,
    kind: StrategyKind,
}

impl PStrategy {
    /// Validating constructor.
    pub fn new(n: usize, steps: Vec<PStep>, kind: StrategyKind) -> Result<Self, StrategyError> {
        let s = Self { n, steps, kind };
        let v = validate_pstrategy(&s);
        if v.is_empty() {
            Ok(s)
        } else {
            Err(StrategyError::Invalid(v))
        }
    }

    /// Builds without checking; use [`validate_pstrategy`] to inspect the result.
    pub fn from_raw(n: usize, steps: Vec<PStep>, kind: StrategyKind) -> Self {
        Self { n, steps, kind }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn steps(&self) -> &[PStep] {
        &self.steps
    }

    #[inline]
    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: StrategyKind) -> Self {
        self.kind = kind;
        self
    }

    /// Pairs of all steps, in order.
    pub fn flatten(&self) -> Vec<PivotPair> {
        self.steps.iter().flat_map(|s| s.0.iter().copied()).collect()
    }

    /// Pairs as 0-based index tuples per step, the form the solvers consume.
    pub fn zero_based_steps(&self) -> Vec<Vec<(usize, usize)>> {
        self.steps
            .iter()
            .map(|s| s.0.iter().map(|pp| (pp.p - 1, pp.q - 1)).collect())
            .collect()
    }
}

/// A sequential cyclic ordering of all `n (n - 1) / 2` pivot pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequentialOrdering {
    n: usize,
    pairs: Vec<PivotPair>,
}

impl SequentialOrdering {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[PivotPair] {
        &self.pairs
    }

    /// Map from pair to 1-based position in this ordering.
    fn positions(&self) -> HashMap<PivotPair, usize> {
        self.pairs.iter().enumerate().map(|(k, &pp)| (pp, k + 1)).collect()
    }

    pub fn of_kind(kind: CyclicKind, n: usize) -> Result<Self, StrategyError> {
        match kind {
            CyclicKind::Row => row_cyclic(n),
            CyclicKind::Col => column_cyclic(n),
        }
    }
}

/// `(1,2), (1,3), ..., (1,n), (2,3), ..., (n-1,n)`.
pub fn row_cyclic(n: usize) -> Result<SequentialOrdering, StrategyError> {
    if n < 2 {
        return Err(StrategyError::OrderTooSmall(n));
    }
    let pairs = (1..n)
        .flat_map(|p| (p + 1..=n).map(move |q| PivotPair::new(p, q)))
        .collect();
    Ok(SequentialOrdering { n, pairs })
}

/// `(1,2), (1,3), (2,3), (1,4), ..., (n-1,n)`.
pub fn column_cyclic(n: usize) -> Result<SequentialOrdering, StrategyError> {
    if n < 2 {
        return Err(StrategyError::OrderTooSmall(n));
    }
    let pairs = (2..=n)
        .flat_map(|q| (1..q).map(move |p| PivotPair::new(p, q)))
        .collect();
    Ok(SequentialOrdering { n, pairs })
}

/// Positions `(l(1), ..., l(tau))` of the flattened strategy pairs within `reference`.
pub fn index_permutation(
    reference: &SequentialOrdering,
    strat: &PStrategy,
) -> Result<Vec<usize>, StrategyError> {
    if reference.n != strat.n {
        return Err(StrategyError::OrderMismatch {
            left: reference.n,
            right: strat.n,
        });
    }
    let v = validate_pstrategy(strat);
    if !v.is_empty() {
        return Err(StrategyError::Invalid(v));
    }
    let pos = reference.positions();
    Ok(strat.flatten().iter().map(|pp| pos[pp]).collect())
}

/// Outcome of [`closer_to`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Closeness {
    FirstCloser,
    Equal,
    SecondCloser,
}

/// Lexicographic comparison of the index permutations of `a` and `b`.
pub fn closer_to(
    reference: &SequentialOrdering,
    a: &PStrategy,
    b: &PStrategy,
) -> Result<Closeness, StrategyError> {
    let ia = index_permutation(reference, a)?;
    let ib = index_permutation(reference, b)?;
    Ok(match ia.cmp(&ib) {
        Ordering::Less => Closeness::FirstCloser,
        Ordering::Equal => Closeness::Equal,
        Ordering::Greater => Closeness::SecondCloser,
    })
}

/// Reverses the annihilation order: steps backwards, pairs inside each step backwards.
pub fn reverse_pstrategy(strat: &PStrategy) -> PStrategy {
    let steps = strat
        .steps
        .iter()
        .rev()
        .map(|s| PStep(s.0.iter().rev().copied().collect()))
        .collect();
    PStrategy {
        n: strat.n,
        steps,
        kind: strat.kind.reversed(),
    }
}

/// Doubles the order of a row- or column-closest strategy.
///
/// Every pivot pair `(p, q)` of step `i` becomes a 2x2 block of pairs spread
/// over steps `2i` (the NW/SE pairs) and `2i + 1` (the NE/SW pairs), after a
/// first step that pairs up `(2k - 1, 2k)`.
pub fn expand_pstrategy(strat: &PStrategy, kind: CyclicKind) -> Result<PStrategy, StrategyError> {
    let v = validate_pstrategy(strat);
    if !v.is_empty() {
        return Err(StrategyError::Invalid(v));
    }
    match (strat.kind, kind) {
        (StrategyKind::RowClosest, CyclicKind::Row)
        | (StrategyKind::ColClosest, CyclicKind::Col)
        | (StrategyKind::Custom, _) => {}
        (k, _) => return Err(StrategyError::NotExpandable(k)),
    }
    let n = strat.n;
    let mut steps = Vec::with_capacity(2 * n - 1);
    steps.push(PStep((1..=n).map(|k| PivotPair::new(2 * k - 1, 2 * k)).collect()));
    for i in 2..2 * n {
        let src = &strat.steps[i / 2 - 1];
        let mut step = Vec::with_capacity(n);
        for pp in &src.0 {
            let (p, q) = (pp.p, pp.q);
            if i % 2 == 0 {
                step.push(PivotPair::new(2 * p - 1, 2 * q - 1));
                step.push(PivotPair::new(2 * p, 2 * q));
            } else {
                let ne = PivotPair::new(2 * p - 1, 2 * q);
                let sw = PivotPair::new(2 * p, 2 * q - 1);
                match kind {
                    CyclicKind::Row => step.extend([ne, sw]),
                    CyclicKind::Col => step.extend([sw, ne]),
                }
            }
        }
        steps.push(PStep(step));
    }
    let out_kind = match kind {
        CyclicKind::Row => StrategyKind::RowClosest,
        CyclicKind::Col => StrategyKind::ColClosest,
    };
    let out_kind = if strat.kind == StrategyKind::Custom {
        StrategyKind::Custom
    } else {
        out_kind
    };
    PStrategy::new(2 * n, steps, out_kind)
}

/// Reports every structural defect; an empty list means a valid p-strategy.
pub fn validate_pstrategy(strat: &PStrategy) -> Vec<Violation> {
    let n = strat.n;
    let mut out = Vec::new();
    if n % 2 == 1 || n < 2 {
        out.push(Violation::OddOrder { n });
    }
    let expected_steps = n.saturating_sub(1);
    if strat.steps.len() != expected_steps {
        out.push(Violation::WrongStepCount {
            expected: expected_steps,
            found: strat.steps.len(),
        });
    }
    let t = n / 2;
    let mut counts: HashMap<PivotPair, usize> = HashMap::new();
    for (si, step) in strat.steps.iter().enumerate() {
        let step_no = si + 1;
        if step.len() != t {
            out.push(Violation::WrongStepSize {
                step: step_no,
                expected: t,
                found: step.len(),
            });
        }
        for (a_idx, a) in step.0.iter().enumerate() {
            if !(1 <= a.p && a.p < a.q && a.q <= n) {
                out.push(Violation::PairOutOfRange { step: step_no, pair: *a });
                continue;
            }
            *counts.entry(*a).or_default() += 1;
            for b in &step.0[a_idx + 1..] {
                if a.collides(b) {
                    out.push(Violation::Collision {
                        step: step_no,
                        a: *a,
                        b: *b,
                    });
                }
            }
        }
    }
    let mut dups: Vec<_> = counts.iter().filter(|(_, &c)| c > 1).collect();
    dups.sort();
    for (pair, &count) in dups {
        out.push(Violation::Duplicated { pair: *pair, count });
    }
    if n >= 2 {
        for p in 1..n {
            for q in p + 1..=n {
                let pp = PivotPair::new(p, q);
                if !counts.contains_key(&pp) {
                    out.push(Violation::Missing { pair: pp });
                }
            }
        }
    }
    out
}

/// Same order, and step `i` of both strategies equal as sets for every `i`.
pub fn step_equivalent(a: &PStrategy, b: &PStrategy) -> Result<bool, StrategyError> {
    if a.n != b.n {
        return Err(StrategyError::OrderMismatch {
            left: a.n,
            right: b.n,
        });
    }
    if a.steps.len() != b.steps.len() {
        return Ok(false);
    }
    Ok(a.steps.iter().zip(&b.steps).all(|(sa, sb)| {
        let mut x = sa.0.clone();
        let mut y = sb.0.clone();
        x.sort();
        y.sort();
        x == y
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(usize, usize)]) -> Vec<PivotPair> {
        v.iter().map(|&(p, q)| PivotPair::new(p, q)).collect()
    }

    fn strat(n: usize, steps: &[&[(usize, usize)]]) -> PStrategy {
        PStrategy::from_raw(
            n,
            steps.iter().map(|s| PStep::from(s.to_vec())).collect(),
            StrategyKind::Custom,
        )
    }

    #[test]
    fn row_cyclic_small_orders() {
        assert_eq!(row_cyclic(2).unwrap().pairs(), pairs(&[(1, 2)]));
        assert_eq!(row_cyclic(3).unwrap().pairs(), pairs(&[(1, 2), (1, 3), (2, 3)]));
        assert_eq!(
            row_cyclic(4).unwrap().pairs(),
            pairs(&[(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)])
        );
        assert_eq!(row_cyclic(1), Err(StrategyError::OrderTooSmall(1)));
    }

    #[test]
    fn column_cyclic_small_orders() {
        assert_eq!(column_cyclic(2).unwrap().pairs(), pairs(&[(1, 2)]));
        assert_eq!(column_cyclic(3).unwrap().pairs(), pairs(&[(1, 2), (1, 3), (2, 3)]));
        assert_eq!(
            column_cyclic(4).unwrap().pairs(),
            pairs(&[(1, 2), (1, 3), (2, 3), (1, 4), (2, 4), (3, 4)])
        );
        assert!(column_cyclic(0).is_err());
    }

    #[test]
    fn index_permutation_of_row_closest_four() {
        let s = strat(4, &[&[(1, 2), (3, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        let perm = index_permutation(&row_cyclic(4).unwrap(), &s).unwrap();
        assert_eq!(perm, vec![1, 6, 2, 5, 3, 4]);
    }

    #[test]
    fn index_permutation_identity_when_reference_matches() {
        let s = strat(4, &[&[(1, 2), (3, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        let reference = SequentialOrdering {
            n: 4,
            pairs: s.flatten(),
        };
        assert_eq!(index_permutation(&reference, &s).unwrap(), vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn index_permutation_rejects_mismatch() {
        let s = strat(4, &[&[(1, 2), (3, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        assert!(matches!(
            index_permutation(&row_cyclic(6).unwrap(), &s),
            Err(StrategyError::OrderMismatch { .. })
        ));
        let bad = strat(4, &[&[(1, 2), (3, 4)], &[(1, 2), (3, 4)], &[(1, 4), (2, 3)]]);
        assert!(matches!(
            index_permutation(&row_cyclic(4).unwrap(), &bad),
            Err(StrategyError::Invalid(_))
        ));
    }

    #[test]
    fn closer_to_equal_and_ordered() {
        let r = row_cyclic(4).unwrap();
        let a = strat(4, &[&[(1, 2), (3, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        let b = strat(4, &[&[(1, 2), (3, 4)], &[(1, 4), (2, 3)], &[(1, 3), (2, 4)]]);
        assert_eq!(closer_to(&r, &a, &a).unwrap(), Closeness::Equal);
        assert_eq!(closer_to(&r, &a, &b).unwrap(), Closeness::FirstCloser);
        assert_eq!(closer_to(&r, &b, &a).unwrap(), Closeness::SecondCloser);
    }

    #[test]
    fn reverse_of_row_closest_four() {
        let s = strat(4, &[&[(1, 2), (3, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        let r = reverse_pstrategy(&s);
        let expected = strat(4, &[&[(2, 3), (1, 4)], &[(2, 4), (1, 3)], &[(3, 4), (1, 2)]]);
        assert_eq!(r.steps(), expected.steps());
        assert_eq!(reverse_pstrategy(&r).steps(), s.steps());
    }

    #[test]
    fn reverse_flattened_sequence_is_reversed() {
        let s = strat(4, &[&[(1, 2), (3, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        let mut f = s.flatten();
        f.reverse();
        assert_eq!(reverse_pstrategy(&s).flatten(), f);
    }

    #[test]
    fn expand_order_two_by_hand() {
        let base = PStrategy::new(2, vec![PStep::from(vec![(1, 2)])], StrategyKind::RowClosest)
            .unwrap();
        let e = expand_pstrategy(&base, CyclicKind::Row).unwrap();
        let expected = strat(4, &[&[(1, 2), (3, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        assert_eq!(e.steps(), expected.steps());

        let base_c = base.clone().with_kind(StrategyKind::ColClosest);
        let ec = expand_pstrategy(&base_c, CyclicKind::Col).unwrap();
        assert_eq!(ec.steps()[2].pairs(), pairs(&[(2, 3), (1, 4)]));
    }

    #[test]
    fn expand_rejects_baselines() {
        let bl = brent_luk(4).unwrap();
        assert_eq!(
            expand_pstrategy(&bl, CyclicKind::Row),
            Err(StrategyError::NotExpandable(StrategyKind::BrentLuk))
        );
    }

    #[test]
    fn validate_reports_collision() {
        let s = strat(4, &[&[(1, 2), (2, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        let v = validate_pstrategy(&s);
        assert!(v.contains(&Violation::Collision {
            step: 1,
            a: PivotPair::new(1, 2),
            b: PivotPair::new(2, 4)
        }));
        assert!(v.contains(&Violation::Missing {
            pair: PivotPair::new(3, 4)
        }));
    }

    #[test]
    fn validate_reports_duplicate_and_sizes() {
        let s = strat(4, &[&[(1, 2), (3, 4)], &[(1, 2), (3, 4)], &[(1, 4), (2, 3)]]);
        let v = validate_pstrategy(&s);
        assert!(v.contains(&Violation::Duplicated {
            pair: PivotPair::new(1, 2),
            count: 2
        }));
        let short = strat(4, &[&[(1, 2)], &[(1, 3), (2, 4)]]);
        let v = validate_pstrategy(&short);
        assert!(v.contains(&Violation::WrongStepCount { expected: 3, found: 2 }));
        assert!(v.contains(&Violation::WrongStepSize {
            step: 1,
            expected: 2,
            found: 1
        }));
        let odd = strat(3, &[]);
        assert!(validate_pstrategy(&odd).contains(&Violation::OddOrder { n: 3 }));
    }

    #[test]
    fn step_equivalence() {
        let a = strat(4, &[&[(1, 2), (3, 4)], &[(1, 3), (2, 4)], &[(1, 4), (2, 3)]]);
        let b = strat(4, &[&[(3, 4), (1, 2)], &[(1, 3), (2, 4)], &[(2, 3), (1, 4)]]);
        let c = strat(4, &[&[(1, 2), (3, 4)], &[(1, 4), (2, 3)], &[(1, 3), (2, 4)]]);
        assert!(step_equivalent(&a, &b).unwrap());
        assert!(!step_equivalent(&a, &c).unwrap());
        assert!(step_equivalent(&a, &brent_luk(6).unwrap()).is_err());
    }
}
