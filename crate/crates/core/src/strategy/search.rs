//! Closest p-strategies by ordered backtracking over perfect matchings.
//!
//! Each step is a set of `n / 2` disjoint pairs, a maximal independent set in
//! the collision graph of the pairs not yet used. Steps are built by choosing
//! pairs in ascending reference-ordering index, and candidate steps are tried
//! in lexicographic order of their sorted index sequences, so the first
//! complete strategy found is the lexicographic minimum.

use std::collections::HashSet;

use petgraph::algo::maximum_matching;
use petgraph::graph::UnGraph;

use super::{
    expand_pstrategy, reverse_pstrategy, CyclicKind, PStep, PStrategy, PivotPair,
    SequentialOrdering, StrategyError, StrategyKind,
};

/// Largest order the bitset representation supports.
const HARD_MAX_ORDER: usize = 32;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SearchLimits {
    /// Orders above this are refused; compose with expansion instead.
    pub max_order: usize,
    /// Budget of search nodes (pair choices) before giving up.
    pub max_nodes: u64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            max_order: 16,
            max_nodes: 50_000_000,
        }
    }
}

type Bits = [u64; 8];

#[inline]
fn bit_get(b: &Bits, i: usize) -> bool {
    b[i >> 6] >> (i & 63) & 1 == 1
}

#[inline]
fn bit_clear(b: &mut Bits, i: usize) {
    b[i >> 6] &= !(1u64 << (i & 63));
}

#[inline]
fn bit_set(b: &mut Bits, i: usize) {
    b[i >> 6] |= 1u64 << (i & 63);
}

struct Search {
    t: usize,
    /// Endpoints (0-based) of the pair at each reference position.
    ends: Vec<(usize, usize)>,
    /// Reference positions of the pairs touching each vertex, ascending.
    incident: Vec<Vec<usize>>,
    remaining: Bits,
    dead: HashSet<Bits>,
    steps: Vec<Vec<usize>>,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl Search {
    fn new(reference: &SequentialOrdering, budget: u64) -> Self {
        let n = reference.order();
        let ends: Vec<(usize, usize)> = reference.pairs().iter().map(|pp| (pp.p - 1, pp.q - 1)).collect();
        let mut incident = vec![Vec::new(); n];
        let mut remaining = [0u64; 8];
        for (idx, &(a, b)) in ends.iter().enumerate() {
            incident[a].push(idx);
            incident[b].push(idx);
            bit_set(&mut remaining, idx);
        }
        Self {
            t: n / 2,
            ends,
            incident,
            remaining,
            dead: HashSet::new(),
            steps: Vec::new(),
            nodes: 0,
            budget,
            exhausted: false,
        }
    }

    fn is_empty(&self) -> bool {
        self.remaining.iter().all(|&w| w == 0)
    }

    fn count_remaining(&self) -> usize {
        self.remaining.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// With two steps left the remaining graph is a union of cycles, and it
    /// splits into two perfect matchings only if every cycle is even.
    fn has_odd_cycle(&self) -> bool {
        let n = self.incident.len();
        let mut next = vec![Vec::with_capacity(2); n];
        for (i, &(a, b)) in self.ends.iter().enumerate() {
            if bit_get(&self.remaining, i) {
                next[a].push(b);
                next[b].push(a);
            }
        }
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let (mut prev, mut cur, mut len) = (usize::MAX, start, 0);
            loop {
                seen[cur] = true;
                len += 1;
                let nb = if next[cur][0] != prev { next[cur][0] } else { next[cur][1] };
                prev = cur;
                cur = nb;
                if cur == start {
                    break;
                }
            }
            if len % 2 == 1 {
                return true;
            }
        }
        false
    }

    /// Fills the remaining steps; true on success.
    fn solve(&mut self) -> bool {
        if self.is_empty() {
            return true;
        }
        if self.dead.contains(&self.remaining) {
            return false;
        }
        if self.count_remaining() == 2 * self.t && self.has_odd_cycle() {
            self.dead.insert(self.remaining);
            return false;
        }
        let mut chosen = Vec::with_capacity(self.t);
        let ok = self.build_step(0, 0u32, &mut chosen);
        if !ok && !self.exhausted {
            self.dead.insert(self.remaining);
        }
        ok
    }

    /// Whether the uncovered vertices still have a perfect matching among the
    /// unused pairs at positions `>= from`.
    fn completable(&self, from: usize, covered: u32) -> bool {
        let n = self.incident.len();
        let edges = (from..self.ends.len()).filter_map(|i| {
            let (a, b) = self.ends[i];
            let free = covered >> a & 1 == 0 && covered >> b & 1 == 0;
            (free && bit_get(&self.remaining, i)).then_some((a as u32, b as u32))
        });
        let mut g = UnGraph::<(), ()>::from_edges(edges);
        // isolated uncovered vertices must exist as nodes for the count
        while g.node_count() < n {
            g.add_node(());
        }
        let free = n - covered.count_ones() as usize;
        maximum_matching(&g).len() * 2 == free
    }

    /// Extends the current step with pairs at positions `>= from`.
    fn build_step(&mut self, from: usize, covered: u32, chosen: &mut Vec<usize>) -> bool {
        if chosen.len() == self.t {
            for &i in chosen.iter() {
                bit_clear(&mut self.remaining, i);
            }
            self.steps.push(chosen.clone());
            if self.solve() {
                return true;
            }
            self.steps.pop();
            for &i in chosen.iter() {
                bit_set(&mut self.remaining, i);
            }
            return false;
        }
        // every uncovered vertex needs a later usable pair; the next choice
        // cannot lie beyond the smallest such last option
        let n = self.incident.len();
        let mut limit = usize::MAX;
        for v in 0..n {
            if covered >> v & 1 == 1 {
                continue;
            }
            let last = self.incident[v]
                .iter()
                .rev()
                .copied()
                .take_while(|&i| i >= from)
                .find(|&i| {
                    let (a, b) = self.ends[i];
                    let other = if a == v { b } else { a };
                    bit_get(&self.remaining, i) && covered >> other & 1 == 0
                });
            match last {
                Some(i) => limit = limit.min(i),
                None => return false,
            }
        }
        if !self.completable(from, covered) {
            return false;
        }
        let mut i = from;
        while i <= limit && i < self.ends.len() {
            if bit_get(&self.remaining, i) {
                let (a, b) = self.ends[i];
                if covered >> a & 1 == 0 && covered >> b & 1 == 0 {
                    self.nodes += 1;
                    if self.nodes > self.budget {
                        self.exhausted = true;
                        return false;
                    }
                    chosen.push(i);
                    if self.build_step(i + 1, covered | 1 << a | 1 << b, chosen) {
                        return true;
                    }
                    chosen.pop();
                    if self.exhausted {
                        return false;
                    }
                }
            }
            i += 1;
        }
        false
    }
}

/// The p-strategy closest to the row- or column-cyclic ordering, with default limits.
pub fn closest_pstrategy(kind: CyclicKind, n: usize) -> Result<PStrategy, StrategyError> {
    closest_pstrategy_with(kind, n, &SearchLimits::default())
}

pub fn closest_pstrategy_with(
    kind: CyclicKind,
    n: usize,
    limits: &SearchLimits,
) -> Result<PStrategy, StrategyError> {
    if n < 2 {
        return Err(StrategyError::OrderTooSmall(n));
    }
    if n % 2 == 1 {
        return Err(StrategyError::OddOrder(n));
    }
    let cap = limits.max_order.min(HARD_MAX_ORDER);
    if n > cap {
        return Err(StrategyError::AboveSearchCap { n, cap });
    }
    let reference = SequentialOrdering::of_kind(kind, n)?;
    let mut search = Search::new(&reference, limits.max_nodes);
    if !search.solve() {
        return Err(StrategyError::SearchBudgetExceeded {
            n,
            nodes: limits.max_nodes,
        });
    }
    let pairs = reference.pairs();
    let steps = search
        .steps
        .iter()
        .map(|s| PStep(s.iter().map(|&i| pairs[i]).collect::<Vec<PivotPair>>()))
        .collect();
    let tag = match kind {
        CyclicKind::Row => StrategyKind::RowClosest,
        CyclicKind::Col => StrategyKind::ColClosest,
    };
    PStrategy::new(n, steps, tag)
}

/// Any supported strategy of order `n`.
///
/// Closest strategies of order up to `limits.max_order` are searched directly.
/// Larger orders `n = 2^k o` (`o` odd) start from the closest strategy of
/// order `2o`, searched with the order cap lifted to 32, and are expanded
/// `k - 1` times.
pub fn generate(
    kind: StrategyKind,
    n: usize,
    limits: &SearchLimits,
) -> Result<PStrategy, StrategyError> {
    let cyclic = match kind {
        StrategyKind::BrentLuk => return super::brent_luk(n),
        StrategyKind::ModifiedModulus => return super::modified_modulus(n),
        StrategyKind::Custom => return Err(StrategyError::NotExpandable(kind)),
        StrategyKind::RowClosest | StrategyKind::ReversedRow => CyclicKind::Row,
        StrategyKind::ColClosest | StrategyKind::ReversedCol => CyclicKind::Col,
    };
    if n < 2 {
        return Err(StrategyError::OrderTooSmall(n));
    }
    if n % 2 == 1 {
        return Err(StrategyError::OddOrder(n));
    }
    let base = if n <= limits.max_order {
        closest_pstrategy_with(cyclic, n, limits)?
    } else {
        let shift = n.trailing_zeros();
        let base_order = n >> (shift - 1);
        // bases are the pretabulated small orders, searched up to the hard cap
        let base_limits = SearchLimits {
            max_order: HARD_MAX_ORDER,
            ..*limits
        };
        let mut s = closest_pstrategy_with(cyclic, base_order, &base_limits)?;
        while s.order() < n {
            s = expand_pstrategy(&s, cyclic)?;
        }
        s
    };
    Ok(match kind {
        StrategyKind::ReversedRow | StrategyKind::ReversedCol => reverse_pstrategy(&base),
        _ => base,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{step_equivalent, validate_pstrategy};
    use super::*;

    fn pairs(v: &[(usize, usize)]) -> Vec<PivotPair> {
        v.iter().map(|&(p, q)| PivotPair::new(p, q)).collect()
    }

    #[test]
    fn row_closest_four() {
        let s = closest_pstrategy(CyclicKind::Row, 4).unwrap();
        assert_eq!(s.steps()[0].pairs(), pairs(&[(1, 2), (3, 4)]));
        assert_eq!(s.steps()[1].pairs(), pairs(&[(1, 3), (2, 4)]));
        assert_eq!(s.steps()[2].pairs(), pairs(&[(1, 4), (2, 3)]));
    }

    #[test]
    fn col_closest_four() {
        let s = closest_pstrategy(CyclicKind::Col, 4).unwrap();
        assert_eq!(s.steps()[0].pairs(), pairs(&[(1, 2), (3, 4)]));
        assert_eq!(s.steps()[2].pairs(), pairs(&[(2, 3), (1, 4)]));
    }

    #[test]
    fn trivial_and_rejected_orders() {
        let s = closest_pstrategy(CyclicKind::Row, 2).unwrap();
        assert_eq!(s.steps().len(), 1);
        assert_eq!(closest_pstrategy(CyclicKind::Row, 5), Err(StrategyError::OddOrder(5)));
        assert!(matches!(
            closest_pstrategy(CyclicKind::Row, 18),
            Err(StrategyError::AboveSearchCap { n: 18, cap: 16 })
        ));
    }

    #[test]
    fn tiny_budget_is_reported() {
        let limits = SearchLimits {
            max_order: 16,
            max_nodes: 5,
        };
        assert!(matches!(
            closest_pstrategy_with(CyclicKind::Row, 10, &limits),
            Err(StrategyError::SearchBudgetExceeded { n: 10, .. })
        ));
    }

    #[test]
    fn generated_strategies_are_valid() {
        let limits = SearchLimits::default();
        for kind in [
            StrategyKind::RowClosest,
            StrategyKind::ColClosest,
            StrategyKind::ReversedRow,
            StrategyKind::ReversedCol,
            StrategyKind::BrentLuk,
            StrategyKind::ModifiedModulus,
        ] {
            for n in [2, 4, 6, 8, 10, 12, 32, 64] {
                let s = generate(kind, n, &limits).unwrap();
                assert!(validate_pstrategy(&s).is_empty(), "{kind} {n}");
                assert_eq!(s.kind(), kind);
            }
        }
    }

    #[test]
    fn generate_large_order_uses_expansion() {
        let limits = SearchLimits::default();
        let s = generate(StrategyKind::RowClosest, 24, &limits).unwrap();
        let base = closest_pstrategy(CyclicKind::Row, 6).unwrap();
        let e = expand_pstrategy(&expand_pstrategy(&base, CyclicKind::Row).unwrap(), CyclicKind::Row)
            .unwrap();
        assert_eq!(s, e);
    }

    #[test]
    fn row_and_col_step_equivalent_at_eight() {
        let r = closest_pstrategy(CyclicKind::Row, 8).unwrap();
        let c = closest_pstrategy(CyclicKind::Col, 8).unwrap();
        assert!(step_equivalent(&r, &c).unwrap());
    }
}
