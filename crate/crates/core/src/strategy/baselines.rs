//! Round-robin baselines.

use super::{PStep, PStrategy, PivotPair, StrategyError, StrategyKind};

fn check_order(n: usize) -> Result<(), StrategyError> {
    if n < 2 {
        Err(StrategyError::OrderTooSmall(n))
    } else if n % 2 == 1 {
        Err(StrategyError::OddOrder(n))
    } else {
        Ok(())
    }
}

/// Round-robin tournament with the first slot fixed, starting from `(2k-1, 2k)`.
pub fn brent_luk(n: usize) -> Result<PStrategy, StrategyError> {
    check_order(n)?;
    let m = n / 2;
    let mut top: Vec<usize> = (0..m).map(|k| 2 * k + 1).collect();
    let mut bot: Vec<usize> = (0..m).map(|k| 2 * k + 2).collect();
    let mut steps = Vec::with_capacity(n - 1);
    for _ in 0..n - 1 {
        steps.push(PStep(
            top.iter()
                .zip(&bot)
                .map(|(&a, &b)| PivotPair::new(a.min(b), a.max(b)))
                .collect(),
        ));
        let mut nt = top.clone();
        let mut nb = bot.clone();
        if m > 1 {
            nt[1] = bot[0];
            nt[2..m].copy_from_slice(&top[1..m - 1]);
            nb[m - 1] = top[m - 1];
            nb[..m - 1].copy_from_slice(&bot[1..m]);
        }
        top = nt;
        bot = nb;
    }
    PStrategy::new(n, steps, StrategyKind::BrentLuk)
}

/// Modulus-style ordering: step `k` pairs `i` and `j` with `i + j = k (mod n - 1)`,
/// and the index left over with `n`.
pub fn modified_modulus(n: usize) -> Result<PStrategy, StrategyError> {
    check_order(n)?;
    let big = n - 1;
    let mut steps = Vec::with_capacity(big);
    for k in 0..big {
        let x = (0..big).find(|&x| (2 * x) % big == k).expect("n - 1 is odd");
        let mut pairs = vec![PivotPair::new(x + 1, n)];
        for i in 0..big {
            let j = (k + big - i) % big;
            if i < j && i != x && j != x {
                pairs.push(PivotPair::new(i + 1, j + 1));
            }
        }
        pairs.sort();
        steps.push(PStep(pairs));
    }
    PStrategy::new(n, steps, StrategyKind::ModifiedModulus)
}
