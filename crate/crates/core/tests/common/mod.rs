//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use hjsvd::dd::DoubleDouble;
use hjsvd::strategy::{PStep, PStrategy, PivotPair, SequentialOrdering, StrategyKind};
use hjsvd::ColumnMatrix;

pub const EPS: f64 = f64::EPSILON / 2.0;

/// `sum x_i^2` as `(value, k)` meaning `value * 2^k`, in double-double after an exact power-of-two prescale.
pub fn dd_sum_squares(x: &[f64]) -> (f64, i32) {
    let amax = x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if amax == 0.0 {
        return (0.0, 0);
    }
    let e = amax.log2().floor() as i32;
    let mut acc = DoubleDouble::from(0.0);
    for &xi in x {
        let s = scale(xi, -e);
        acc = acc + DoubleDouble::from_prod(s, s);
    }
    (acc.to_f64(), 2 * e)
}

/// `x * 2^e` without intermediate overflow or double rounding for moderate `e`.
pub fn scale(x: f64, e: i32) -> f64 {
    let mut y = x;
    let mut k = e;
    while k > 1000 {
        y *= 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        y *= 2f64.powi(-1000);
        k += 1000;
    }
    y * 2f64.powi(k)
}

/// `a * b` with double-double accumulation, rounded once.
pub fn dd_matmul(a: &ColumnMatrix, b: &ColumnMatrix) -> ColumnMatrix {
    assert_eq!(a.cols(), b.rows());
    ColumnMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        let mut acc = DoubleDouble::from(0.0);
        for k in 0..a.cols() {
            acc = acc + DoubleDouble::from_prod(a.get(i, k), b.get(k, j));
        }
        acc.to_f64()
    })
}

/// `a^T a` in double-double, rounded once.
pub fn dd_gram(a: &ColumnMatrix) -> ColumnMatrix {
    dd_matmul(&a.transpose(), a)
}

pub fn max_abs_diff(a: &ColumnMatrix, b: &ColumnMatrix) -> f64 {
    a.sub(b).max_abs()
}

/// `M^T J M - J`, entrywise maximum.
pub fn j_orthogonality_defect(m: &ColumnMatrix, j: &[f64]) -> f64 {
    let n = m.cols();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let mut acc = DoubleDouble::from(0.0);
            for k in 0..m.rows() {
                acc = acc + DoubleDouble::from_prod(m.get(k, a) * j[k], m.get(k, b));
            }
            let want = if a == b { j[a] } else { 0.0 };
            worst = worst.max((acc.to_f64() - want).abs());
        }
    }
    worst
}

fn perfect_matchings(verts: &[usize], out: &mut Vec<Vec<(usize, usize)>>, acc: &mut Vec<(usize, usize)>) {
    if verts.is_empty() {
        out.push(acc.clone());
        return;
    }
    let a = verts[0];
    for k in 1..verts.len() {
        let b = verts[k];
        let rest: Vec<usize> = verts[1..].iter().copied().filter(|&v| v != b).collect();
        acc.push((a, b));
        perfect_matchings(&rest, out, acc);
        acc.pop();
    }
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x.clone());
            out.push(p);
        }
    }
    out
}

/// Calls `f` with every p-strategy of order `n`: ordered sequences of
/// edge-disjoint perfect matchings covering all pairs, with every ordering of
/// pairs inside each step.
pub fn visit_pstrategies(n: usize, f: &mut dyn FnMut(&[&[(usize, usize)]])) {
    let verts: Vec<usize> = (1..=n).collect();
    let mut matchings = Vec::new();
    perfect_matchings(&verts, &mut matchings, &mut Vec::new());
    let mut factorizations = Vec::new();
    fn extend(
        matchings: &[Vec<(usize, usize)>],
        used: &mut Vec<(usize, usize)>,
        chosen: &mut Vec<usize>,
        steps: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        if chosen.len() == steps {
            out.push(chosen.clone());
            return;
        }
        for (i, m) in matchings.iter().enumerate() {
            if m.iter().any(|e| used.contains(e)) {
                continue;
            }
            used.extend_from_slice(m);
            chosen.push(i);
            extend(matchings, used, chosen, steps, out);
            chosen.pop();
            used.truncate(used.len() - m.len());
        }
    }
    extend(&matchings, &mut Vec::new(), &mut Vec::new(), n - 1, &mut factorizations);
    let orders: Vec<Vec<Vec<(usize, usize)>>> = matchings.iter().map(|m| permutations(m)).collect();
    for fac in factorizations {
        let mut idx = vec![0usize; fac.len()];
        loop {
            let steps: Vec<&[(usize, usize)]> = fac.iter().zip(&idx).map(|(&m, &k)| orders[m][k].as_slice()).collect();
            f(&steps);
            let mut d = 0;
            while d < idx.len() {
                idx[d] += 1;
                if idx[d] < orders[fac[d]].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == idx.len() {
                break;
            }
        }
    }
}

pub fn to_pstrategy(n: usize, steps: &[&[(usize, usize)]]) -> PStrategy {
    let steps = steps
        .iter()
        .map(|st| PStep(st.iter().map(|&(p, q)| PivotPair::new(p, q)).collect()))
        .collect();
    PStrategy::new(n, steps, StrategyKind::Custom).expect("valid by construction")
}

pub fn all_pstrategies(n: usize) -> Vec<PStrategy> {
    let mut out = Vec::new();
    visit_pstrategies(n, &mut |steps| out.push(to_pstrategy(n, steps)));
    out
}

/// The strategy with the lexicographically least sequence of reference
/// positions, by exhaustive enumeration.
pub fn brute_force_closest(reference: &SequentialOrdering) -> PStrategy {
    let n = reference.order();
    let mut pos = vec![vec![0usize; n + 1]; n + 1];
    for (k, pp) in reference.pairs().iter().enumerate() {
        pos[pp.p][pp.q] = k + 1;
    }
    let mut best: Option<(Vec<usize>, Vec<Vec<(usize, usize)>>)> = None;
    let mut key = Vec::with_capacity(n * n / 2);
    visit_pstrategies(n, &mut |steps| {
        key.clear();
        key.extend(steps.iter().flat_map(|st| st.iter().map(|&(p, q)| pos[p][q])));
        if best.as_ref().is_none_or(|(b, _)| key < *b) {
            best = Some((key.clone(), steps.iter().map(|st| st.to_vec()).collect()));
        }
    });
    let (_, steps) = best.expect("at least one strategy");
    let refs: Vec<&[(usize, usize)]> = steps.iter().map(|s| s.as_slice()).collect();
    to_pstrategy(n, &refs)
}
