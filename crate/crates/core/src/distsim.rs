//! Multi-worker simulation of the outer blocking level.
//!
//! `g` workers each hold two of the `2g` outer block-columns. Per outer
//! step a worker shortens its pair, runs the single-node blocked solver on
//! the square factor, updates its block-columns, and then sends one of them
//! to the worker that needs it next. Workers are threads; block-columns move
//! through channels, and two barriers per step separate computation from
//! exchange, so the outcome does not depend on message arrival order.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Barrier, Mutex};

use thiserror::Error;

use crate::driver::{self, DriverError, HsvdResult, SolverConfig, SweepStats};
use crate::kernel::{self, Shortening};
use crate::matrix::{ColumnMatrix, Signature};
use crate::strategy::{self, PStrategy, SearchLimits, StrategyError};

#[derive(Debug, Error)]
pub enum DistError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("strategy: {0}")]
    Strategy(#[from] StrategyError),
    #[error("no exchange plan realizes the strategy")]
    Infeasible,
    #[error("mapping search exceeded {0} nodes")]
    MappingBudget(u64),
    #[error("worker {worker} holds {held:?} at step {step}, expected {expected:?}")]
    ExchangeViolation {
        worker: usize,
        step: usize,
        held: (usize, usize),
        expected: (usize, usize),
    },
    #[error(transparent)]
    Driver(#[from] DriverError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum LinkClass {
    Fast,
    Slow,
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkClass::Fast => "fast",
            LinkClass::Slow => "slow",
        })
    }
}

/// Worker interconnect; `i` and `i xor 1` share a fast link.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub workers: usize,
}

impl Topology {
    pub fn new(workers: usize) -> Self {
        Self { workers }
    }

    pub fn link_class(&self, i: usize, j: usize) -> LinkClass {
        if j == i ^ 1 {
            LinkClass::Fast
        } else {
            LinkClass::Slow
        }
    }
}

/// One block-column moving between workers after a step.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Exchange {
    pub from: usize,
    pub to: usize,
    pub column: usize,
    pub link: LinkClass,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnMapping {
    /// `held[s][w]`: block-columns `(p, q)`, `p < q`, of worker `w` at step `s`.
    pub held: Vec<Vec<(usize, usize)>>,
    /// `exchanges[s]`: sends from step `s` to step `s + 1`, the last wrapping to step 0.
    pub exchanges: Vec<Vec<Exchange>>,
    /// Transitions of a sweep in which every send uses a fast link.
    pub fast_exchange_count: usize,
    /// Individual sends over fast links in a sweep.
    pub fast_sends: usize,
}

fn shares(a: (usize, usize), b: (usize, usize)) -> usize {
    [a.0, a.1].iter().filter(|&&c| c == b.0 || c == b.1).count()
}

/// Sends needed to move from assignment `cur` to `next`; `None` if some worker keeps nothing.
fn transition(cur: &[(usize, usize)], next: &[(usize, usize)], topo: &Topology) -> Option<Vec<Exchange>> {
    let mut out = Vec::new();
    for (w, &held) in cur.iter().enumerate() {
        match shares(held, next[w]) {
            0 => return None,
            2 => continue,
            _ => {}
        }
        let column = if held.0 == next[w].0 || held.0 == next[w].1 {
            held.1
        } else {
            held.0
        };
        let to = next.iter().position(|&(p, q)| p == column || q == column)?;
        out.push(Exchange {
            from: w,
            to,
            column,
            link: topo.link_class(w, to),
        });
    }
    Some(out)
}

fn all_fast(ex: &[Exchange]) -> bool {
    ex.iter().all(|e| e.link == LinkClass::Fast)
}

struct MapSearch<'a> {
    steps: Vec<Vec<(usize, usize)>>,
    topo: &'a Topology,
    cur: Vec<Vec<(usize, usize)>>,
    fast: usize,
    best: Option<(usize, Vec<Vec<(usize, usize)>>)>,
    nodes: u64,
    budget: u64,
}

impl MapSearch<'_> {
    /// Candidate assignments for step `k` in lexicographic order of pair indices.
    fn assignments(&self, k: usize) -> Vec<Vec<(usize, usize)>> {
        let pairs = &self.steps[k];
        let g = pairs.len();
        let mut out = Vec::new();
        let mut taken = vec![false; g];
        let mut acc = Vec::with_capacity(g);
        self.assign_rec(k, 0, &mut taken, &mut acc, &mut out);
        debug_assert!(out.iter().all(|a| a.len() == g));
        out
    }

    fn assign_rec(
        &self,
        k: usize,
        w: usize,
        taken: &mut [bool],
        acc: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        let pairs = &self.steps[k];
        if w == pairs.len() {
            out.push(acc.clone());
            return;
        }
        for (i, &pair) in pairs.iter().enumerate() {
            if taken[i] || (k > 0 && shares(self.cur[k - 1][w], pair) == 0) {
                continue;
            }
            taken[i] = true;
            acc.push(pair);
            self.assign_rec(k, w + 1, taken, acc, out);
            acc.pop();
            taken[i] = false;
        }
    }

    fn run(&mut self, k: usize) -> Result<(), DistError> {
        let s = self.steps.len();
        if k == s {
            let Some(wrap) = transition(&self.cur[s - 1], &self.cur[0], self.topo) else {
                return Ok(());
            };
            let total = self.fast + usize::from(all_fast(&wrap));
            if self.best.as_ref().is_none_or(|(b, _)| total > *b) {
                self.best = Some((total, self.cur.clone()));
            }
            return Ok(());
        }
        // every remaining transition, including the wrap, could still be fast
        if let Some((b, _)) = &self.best {
            if self.fast + s + 1 - k.max(1) <= *b {
                return Ok(());
            }
        }
        for a in self.assignments(k) {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(DistError::MappingBudget(self.budget));
            }
            let gained = if k > 0 {
                match transition(&self.cur[k - 1], &a, self.topo) {
                    Some(ex) => usize::from(all_fast(&ex)),
                    None => continue,
                }
            } else {
                0
            };
            self.fast += gained;
            self.cur.push(a);
            self.run(k + 1)?;
            self.cur.pop();
            self.fast -= gained;
        }
        Ok(())
    }
}

/// Node budget of [`optimize_mapping`].
pub const MAPPING_BUDGET: u64 = 20_000_000;

/// Assigns block pairs to workers so that the most transitions per sweep use only fast links.
///
/// The search is exhaustive with bound pruning; among optimal mappings the
/// lexicographically smallest sequence of assignments wins.
pub fn optimize_mapping(strategy: &PStrategy, topo: &Topology) -> Result<ColumnMapping, DistError> {
    let g = topo.workers;
    if strategy.order() != 2 * g {
        return Err(DistError::Config(format!(
            "{} workers need a strategy of order {}, got {}",
            g,
            2 * g,
            strategy.order()
        )));
    }
    let steps = strategy.zero_based_steps();
    if g == 1 {
        return Ok(ColumnMapping {
            held: steps,
            exchanges: vec![Vec::new()],
            fast_exchange_count: 0,
            fast_sends: 0,
        });
    }
    let mut search = MapSearch {
        steps,
        topo,
        cur: Vec::new(),
        fast: 0,
        best: None,
        nodes: 0,
        budget: MAPPING_BUDGET,
    };
    search.run(0)?;
    let (fast_exchange_count, held) = search.best.ok_or(DistError::Infeasible)?;
    let s = held.len();
    let exchanges: Vec<Vec<Exchange>> = (0..s)
        .map(|k| transition(&held[k], &held[(k + 1) % s], topo).expect("feasible mapping"))
        .collect();
    let fast_sends = exchanges
        .iter()
        .flatten()
        .filter(|e| e.link == LinkClass::Fast)
        .count();
    Ok(ColumnMapping {
        held,
        exchanges,
        fast_exchange_count,
        fast_sends,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistConfig {
    pub workers: usize,
    /// Single-node settings; `variant` selects full-block or block-oriented workers.
    pub solver: SolverConfig,
    /// The first worker to finish its inner solve ends the others' loops after their running iteration.
    pub hybrid_early_stop: bool,
}

/// One block-column send.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub sweep: usize,
    pub step: usize,
    pub worker: usize,
    pub column: usize,
    pub dest: usize,
    pub link: LinkClass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistResult {
    pub result: HsvdResult,
    pub mapping: ColumnMapping,
    pub trace: Vec<TraceRecord>,
    /// Block-columns of `G` sent.
    pub g_messages: u64,
    /// Block-columns of `V` sent.
    pub v_messages: u64,
}

/// CSV with header `sweep,step,worker,column,dest,link`.
pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::from("sweep,step,worker,column,dest,link\n");
    for r in trace {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.sweep, r.step, r.worker, r.column, r.dest, r.link
        ));
    }
    s
}

struct Slot {
    id: usize,
    g: ColumnMatrix,
    v: Option<ColumnMatrix>,
}

struct Message {
    id: usize,
    g: Vec<f64>,
    v: Option<Vec<f64>>,
}

struct Shared<'a> {
    sig: Signature,
    cfg: &'a DistConfig,
    inner_cfg: SolverConfig,
    outer: PStrategy,
    inner: PStrategy,
    mapping: &'a ColumnMapping,
    topo: Topology,
    bw: usize,
    rows: usize,
    barrier: Barrier,
    failed: AtomicBool,
    /// `counters[sweep][worker]`.
    counters: Mutex<Vec<Vec<SweepStats>>>,
    early: Vec<AtomicBool>,
}

struct WorkerOut {
    slots: Vec<Slot>,
    trace: Vec<TraceRecord>,
    sweeps: usize,
    converged: bool,
    g_sent: u64,
    v_sent: u64,
}

/// Phases (0) to (3) on one worker's pair; returns `(rotations, proper)`.
fn local_update(sh: &Shared<'_>, slots: &mut [Slot], stop: Option<&AtomicBool>) -> Result<(u64, u64), DistError> {
    let bw = sh.bw;
    let ga = ColumnMatrix::hcat(&slots[0].g, &slots[1].g);
    let colmap: Vec<usize> = (slots[0].id * bw..(slots[0].id + 1) * bw)
        .chain(slots[1].id * bw..(slots[1].id + 1) * bw)
        .collect();
    let r = match sh.cfg.solver.shortening {
        Shortening::Cholesky => {
            let mut h = kernel::gram(&ga).map_err(DriverError::from)?;
            kernel::cholesky_in_place(&mut h).map_err(DriverError::from)?;
            h
        }
        Shortening::Qr => kernel::qr_peeloff(&ga).map_err(DriverError::from)?,
    };
    let out = driver::iterate(r.clone(), &colmap, sh.sig, &sh.inner_cfg, &sh.outer, &sh.inner, stop)?;
    let rotations: u64 = out.stats.iter().map(|s| s.rotations).sum();
    let proper: u64 = out.stats.iter().map(|s| s.proper_rotations).sum();
    if rotations == 0 {
        return Ok((0, 0));
    }
    let vhat = match out.v {
        Some(v) => v,
        None => driver::solve_for_v(&r, &out.g)?,
    };
    let gn = kernel::postmultiply(&ga, &vhat).map_err(DriverError::from)?;
    slots[0].g = gn.column_block(0, bw);
    slots[1].g = gn.column_block(bw, bw);
    if let (Some(v0), Some(v1)) = (&slots[0].v, &slots[1].v) {
        let va = ColumnMatrix::hcat(v0, v1);
        let vn = kernel::postmultiply(&va, &vhat).map_err(DriverError::from)?;
        slots[0].v = Some(vn.column_block(0, bw));
        slots[1].v = Some(vn.column_block(bw, bw));
    }
    Ok((rotations, proper))
}

fn worker(
    sh: &Shared<'_>,
    w: usize,
    mut slots: Vec<Slot>,
    rx: Receiver<Message>,
    tx: Vec<Sender<Message>>,
) -> Result<WorkerOut, DistError> {
    let steps = sh.mapping.held.len();
    let n = 2 * sh.topo.workers * sh.bw;
    let mut trace = Vec::new();
    let (mut g_sent, mut v_sent) = (0u64, 0u64);
    let mut sweeps = 0;
    let mut converged = false;
    let mut acc = SweepStats::default();
    'outer: for sweep in 0..sh.cfg.solver.max_block_sweeps {
        for step in 0..steps {
            let expected = sh.mapping.held[step][w];
            let held = (slots[0].id, slots[1].id);
            let res = if held != expected {
                Err(DistError::ExchangeViolation {
                    worker: w,
                    step,
                    held,
                    expected,
                })
            } else {
                let early = sh.cfg.hybrid_early_stop.then(|| &sh.early[sweep * steps + step]);
                let r = local_update(sh, &mut slots, early);
                if let Some(flag) = early {
                    flag.store(true, Ordering::Relaxed);
                }
                r
            };
            if let Ok((rot, proper)) = res {
                acc.rotations += rot;
                acc.proper_rotations += proper;
                if step + 1 == steps {
                    sh.counters.lock().expect("counter lock")[sweep][w] = acc;
                    acc = SweepStats::default();
                }
            }
            if res.is_err() {
                sh.failed.store(true, Ordering::SeqCst);
            }
            // (4) all local updates done
            sh.barrier.wait();
            if sh.failed.load(Ordering::SeqCst) {
                res?;
                return Err(DistError::Config("another worker failed".into()));
            }
            if step + 1 == steps {
                sweeps = sweep + 1;
                let proper: u64 = sh.counters.lock().expect("counter lock")[sweep]
                    .iter()
                    .map(|s| s.proper_rotations)
                    .sum();
                if proper == 0 {
                    converged = true;
                    break 'outer;
                }
                if sweeps == sh.cfg.solver.max_block_sweeps {
                    break 'outer;
                }
            }
            // (5) send one block-column, receive its replacement
            let mut expect = 0;
            for e in &sh.mapping.exchanges[step] {
                if e.to == w {
                    expect += 1;
                }
                if e.from != w {
                    continue;
                }
                let k = slots.iter().position(|s| s.id == e.column).expect("held column");
                let s = slots.remove(k);
                trace.push(TraceRecord {
                    sweep,
                    step,
                    worker: w,
                    column: s.id,
                    dest: e.to,
                    link: e.link,
                });
                g_sent += 1;
                v_sent += u64::from(s.v.is_some());
                let msg = Message {
                    id: s.id,
                    g: s.g.into_vec(),
                    v: s.v.map(ColumnMatrix::into_vec),
                };
                tx[e.to].send(msg).expect("receiver alive");
            }
            for _ in 0..expect {
                let m = rx.recv().expect("sender alive");
                slots.push(Slot {
                    id: m.id,
                    g: ColumnMatrix::from_col_major(sh.rows, sh.bw, m.g),
                    v: m.v.map(|v| ColumnMatrix::from_col_major(n, sh.bw, v)),
                });
            }
            slots.sort_by_key(|s| s.id);
            // (6) exchange complete
            sh.barrier.wait();
        }
    }
    Ok(WorkerOut {
        slots,
        trace,
        sweeps,
        converged,
        g_sent,
        v_sent,
    })
}

/// Blocked (H)SVD of `g` on `cfg.workers` simulated workers.
///
/// One worker runs the single-node driver directly.
pub fn run_distributed(g: &ColumnMatrix, sig: Signature, cfg: &DistConfig) -> Result<DistResult, DistError> {
    let workers = cfg.workers;
    let n = g.cols();
    let solver = &cfg.solver;
    if workers == 0 {
        return Err(DistError::Config("at least one worker is needed".into()));
    }
    let limits = SearchLimits::default();
    let topo = Topology::new(workers);
    if workers == 1 {
        let result = driver::block_jacobi(g, sig, solver)?;
        let outer = strategy::generate(solver.outer_strategy, 2, &limits)?;
        let mapping = optimize_mapping(&outer, &topo)?;
        return Ok(DistResult {
            result,
            mapping,
            trace: Vec::new(),
            g_messages: 0,
            v_messages: 0,
        });
    }
    if sig.order() != n {
        return Err(DistError::Config(format!("signature of order {} for {} columns", sig.order(), n)));
    }
    if g.rows() < n {
        return Err(DistError::Config(format!("{}x{} input has fewer rows than columns", g.rows(), n)));
    }
    let w = solver.block_width;
    if w == 0 || !n.is_multiple_of(2 * workers) || !(n / workers).is_multiple_of(2 * w) {
        return Err(DistError::Config(format!(
            "order {n} must split into {} block-columns whose pairs are multiples of twice the block width {w}",
            2 * workers
        )));
    }
    if solver.max_block_sweeps == 0 {
        return Err(DistError::Config("max_block_sweeps must be at least 1".into()));
    }
    if solver.shortening == Shortening::Qr && !g.rows().is_multiple_of(2 * w) {
        return Err(DistError::Config("QR shortening needs rows divisible by twice the block width".into()));
    }
    driver::check_scaling(g)?;
    let bw = n / (2 * workers);
    let outer_strategy = strategy::generate(solver.outer_strategy, 2 * workers, &limits)?;
    let mapping = optimize_mapping(&outer_strategy, &topo)?;
    let inner_cfg = SolverConfig {
        max_block_sweeps: solver.variant.inner_sweeps(),
        accumulate_v: !solver.solve_for_v,
        solve_for_v: false,
        threads: 0,
        ..solver.clone()
    };
    let (outer, inner) = driver::strategies_for(2 * bw, &inner_cfg)?;
    let steps = mapping.held.len();
    let shared = Shared {
        sig,
        cfg,
        inner_cfg,
        outer,
        inner,
        mapping: &mapping,
        topo,
        bw,
        rows: g.rows(),
        barrier: Barrier::new(workers),
        failed: AtomicBool::new(false),
        counters: Mutex::new(vec![vec![SweepStats::default(); workers]; solver.max_block_sweeps]),
        early: (0..solver.max_block_sweeps * steps).map(|_| AtomicBool::new(false)).collect(),
    };
    let (txs, rxs): (Vec<Sender<Message>>, Vec<Receiver<Message>>) = (0..workers).map(|_| mpsc::channel()).unzip();
    let v0 = solver.accumulate_v.then(|| ColumnMatrix::identity(n));
    let outs: Vec<Result<WorkerOut, DistError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = rxs
            .into_iter()
            .enumerate()
            .map(|(wk, rx)| {
                let (p, q) = mapping.held[0][wk];
                let slots = [p, q]
                    .iter()
                    .map(|&id| Slot {
                        id,
                        g: g.column_block(id * bw, bw),
                        v: v0.as_ref().map(|v| v.column_block(id * bw, bw)),
                    })
                    .collect();
                let tx = txs.clone();
                let sh = &shared;
                scope.spawn(move || worker(sh, wk, slots, rx, tx))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let outs = outs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut gf = ColumnMatrix::zeros(g.rows(), n);
    let mut vf = v0.map(|_| ColumnMatrix::zeros(n, n));
    let mut trace = Vec::new();
    let (mut g_messages, mut v_messages) = (0, 0);
    for out in &outs {
        for s in &out.slots {
            gf.set_column_block(s.id * bw, &s.g);
            if let (Some(vm), Some(sv)) = (vf.as_mut(), &s.v) {
                vm.set_column_block(s.id * bw, sv);
            }
        }
        trace.extend_from_slice(&out.trace);
        g_messages += out.g_sent;
        v_messages += out.v_sent;
    }
    trace.sort_by_key(|r| (r.sweep, r.step, r.worker));
    let sweeps = outs[0].sweeps;
    let converged = outs[0].converged;
    let counters = shared.counters.into_inner().expect("counter lock");
    let stats: Vec<SweepStats> = counters[..sweeps]
        .iter()
        .map(|per| SweepStats {
            rotations: per.iter().map(|s| s.rotations).sum(),
            proper_rotations: per.iter().map(|s| s.proper_rotations).sum(),
        })
        .collect();
    let result = driver::finish(gf, vf, sig, stats, converged)?;
    Ok(DistResult {
        result,
        mapping,
        trace,
        g_messages,
        v_messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::StrategyKind;

    fn rrow(n: usize) -> PStrategy {
        strategy::generate(StrategyKind::ReversedRow, n, &SearchLimits::default()).unwrap()
    }

    #[test]
    fn topology_links() {
        let t = Topology::new(4);
        assert_eq!(t.link_class(0, 1), LinkClass::Fast);
        assert_eq!(t.link_class(3, 2), LinkClass::Fast);
        assert_eq!(t.link_class(1, 2), LinkClass::Slow);
    }

    #[test]
    fn single_worker_mapping_is_trivial() {
        let m = optimize_mapping(&rrow(2), &Topology::new(1)).unwrap();
        assert_eq!(m.fast_exchange_count, 0);
        assert!(m.exchanges.iter().all(|e| e.is_empty()));
    }

    #[test]
    fn four_workers_reach_three_fast_exchanges() {
        let m = optimize_mapping(&rrow(8), &Topology::new(4)).unwrap();
        assert_eq!(m.fast_exchange_count, 3);
        for (k, ex) in m.exchanges.iter().enumerate() {
            assert_eq!(ex.len(), 4, "step {k}");
        }
    }

    #[test]
    fn mapping_realizes_strategy() {
        let s = rrow(4);
        let m = optimize_mapping(&s, &Topology::new(2)).unwrap();
        for (k, step) in s.zero_based_steps().iter().enumerate() {
            let mut held = m.held[k].clone();
            held.sort();
            let mut want = step.clone();
            want.sort();
            assert_eq!(held, want);
        }
        assert_eq!(m, optimize_mapping(&s, &Topology::new(2)).unwrap());
    }

    #[test]
    fn workers_agree_on_small_fixture() {
        use crate::testgen::{gen_fixture, relative_error, SpectrumSpec};
        let f = gen_fixture(SpectrumSpec { kind: 3, n: 32, seed: 7 }).unwrap();
        let mut sigmas = Vec::new();
        for workers in [1, 2, 4] {
            let cfg = DistConfig {
                workers,
                solver: SolverConfig {
                    block_width: 4,
                    ..SolverConfig::default()
                },
                hybrid_early_stop: false,
            };
            let out = run_distributed(&f.g, f.signature, &cfg).unwrap();
            assert!(out.result.converged);
            assert!(relative_error(&out.result.sigma, f.signature, &f.lambda).unwrap() < 1e-12);
            let steps = out.mapping.held.len() as u64;
            let sends = (out.result.block_sweeps as u64 - 1) * steps + steps - 1;
            if workers > 1 {
                assert_eq!(out.g_messages, sends * workers as u64);
                assert_eq!(out.v_messages, out.g_messages);
            }
            sigmas.push(out.result.sigma);
        }
        for s in &sigmas[1..] {
            for (a, b) in s.iter().zip(&sigmas[0]) {
                assert!(((a - b) / b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn order_mismatch_is_rejected() {
        assert!(matches!(
            optimize_mapping(&rrow(6), &Topology::new(2)),
            Err(DistError::Config(_))
        ));
    }
}
