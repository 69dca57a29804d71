//! Single-node two-level blocked Jacobi (H)SVD.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{self, InnerConfig, KernelError, Shortening};
use crate::matrix::{ColumnMatrix, Signature};
use crate::norm::{self, NormError};
use crate::strategy::{self, PStrategy, SearchLimits, StrategyError, StrategyKind};

/// Inner iteration policy per block task.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Inner Jacobi runs to convergence, up to 30 sweeps.
    FullBlock,
    /// Exactly one inner sweep per task.
    BlockOriented,
}

impl Variant {
    pub fn inner_sweeps(self) -> usize {
        match self {
            Variant::FullBlock => 30,
            Variant::BlockOriented => 1,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::FullBlock => "fb",
            Variant::BlockOriented => "bo",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Columns per block-column; tasks work on `2 * block_width` columns.
    pub block_width: usize,
    pub variant: Variant,
    pub max_block_sweeps: usize,
    pub outer_strategy: StrategyKind,
    pub inner_strategy: StrategyKind,
    pub accumulate_v: bool,
    /// Recover `V` from `G_in V = G_final` instead of accumulating it; `G_in` must be upper triangular.
    pub solve_for_v: bool,
    pub shortening: Shortening,
    /// Worker threads for the block tasks; 0 uses the ambient rayon pool.
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            block_width: 32,
            variant: Variant::BlockOriented,
            max_block_sweeps: 30,
            outer_strategy: StrategyKind::ReversedRow,
            inner_strategy: StrategyKind::ReversedRow,
            accumulate_v: true,
            solve_for_v: false,
            shortening: Shortening::Cholesky,
            threads: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("column {column} has norm {norm:e} outside the safe range [{lo:e}, {hi:e}]; rescale the input")]
    UnsafeScaling { column: usize, norm: f64, lo: f64, hi: f64 },
    #[error("column {index} of the result is zero")]
    ZeroColumn { index: usize },
    #[error("triangular solve hit a zero diagonal entry at {index}")]
    SingularTriangle { index: usize },
    #[error("solving for V needs an upper-triangular input factor")]
    NotTriangular,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Rotation counts of one block sweep.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub rotations: u64,
    pub proper_rotations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HsvdResult {
    /// Sorted non-increasingly within each sign class, positives first.
    pub sigma: Vec<f64>,
    pub u: ColumnMatrix,
    pub v: Option<ColumnMatrix>,
    pub signature: Signature,
    pub stats: Vec<SweepStats>,
    pub block_sweeps: usize,
    pub converged: bool,
}

impl HsvdResult {
    pub fn total_rotations(&self) -> u64 {
        self.stats.iter().map(|s| s.rotations).sum()
    }

    pub fn total_proper_rotations(&self) -> u64 {
        self.stats.iter().map(|s| s.proper_rotations).sum()
    }
}

/// State after the iteration, before extraction.
#[derive(Clone, Debug)]
pub struct IterationOutcome {
    pub g: ColumnMatrix,
    pub v: Option<ColumnMatrix>,
    pub stats: Vec<SweepStats>,
    pub converged: bool,
}

/// The strategies a configuration needs for `n` columns.
pub fn strategies_for(n: usize, cfg: &SolverConfig) -> Result<(PStrategy, PStrategy), DriverError> {
    check_shape(n, cfg)?;
    let limits = SearchLimits::default();
    let outer = strategy::generate(cfg.outer_strategy, n / cfg.block_width, &limits)?;
    let inner = strategy::generate(cfg.inner_strategy, 2 * cfg.block_width, &limits)?;
    Ok((outer, inner))
}

fn check_shape(n: usize, cfg: &SolverConfig) -> Result<(), DriverError> {
    let w = cfg.block_width;
    if w == 0 {
        return Err(DriverError::Config("block width must be positive".into()));
    }
    if n == 0 || !n.is_multiple_of(2 * w) {
        return Err(DriverError::Config(format!(
            "order {n} must be a positive multiple of twice the block width {w}"
        )));
    }
    if cfg.max_block_sweeps == 0 {
        return Err(DriverError::Config("max_block_sweeps must be at least 1".into()));
    }
    Ok(())
}

/// Rejects inputs whose column norms could overflow or underflow the Gram matrix.
pub fn check_scaling(g: &ColumnMatrix) -> Result<(), DriverError> {
    let (lo, nh) = norm::safe_bounds(g.rows());
    let hi = nh.sqrt();
    for j in 0..g.cols() {
        let nrm = norm::norm(g.col(j))?;
        if !(nrm >= lo && nrm <= hi) {
            return Err(DriverError::UnsafeScaling {
                column: j,
                norm: nrm,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

fn with_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R, DriverError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DriverError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

struct TaskOutput {
    p: usize,
    q: usize,
    g: Option<ColumnMatrix>,
    v: Option<ColumnMatrix>,
    rotations: u64,
    proper: u64,
}

/// Runs block sweeps on `g` in place of a full driver call.
///
/// `colmap[i]` is the global column index of column `i`, which decides the
/// rotation kind together with `sig`. `stop` is polled by every task after
/// each inner sweep and after each block sweep; once set, both loops end
/// after their running iteration.
pub fn iterate(
    g: ColumnMatrix,
    colmap: &[usize],
    sig: Signature,
    cfg: &SolverConfig,
    outer: &PStrategy,
    inner: &PStrategy,
    stop: Option<&AtomicBool>,
) -> Result<IterationOutcome, DriverError> {
    let n = g.cols();
    check_shape(n, cfg)?;
    let w = cfg.block_width;
    if outer.order() != n / w || inner.order() != 2 * w || colmap.len() != n {
        return Err(DriverError::Config("strategy orders do not match the blocking".into()));
    }
    let inner_cfg = InnerConfig {
        max_sweeps: cfg.variant.inner_sweeps(),
        tolerance: None,
    };
    let accumulate = cfg.accumulate_v && !cfg.solve_for_v;
    let mut g = g;
    let mut v = accumulate.then(|| ColumnMatrix::identity(n));
    let steps = outer.zero_based_steps();
    let mut stats = Vec::new();
    let mut converged = false;
    let never = AtomicBool::new(false);
    let stop = stop.unwrap_or(&never);
    let poll = || stop.load(Ordering::Relaxed);

    with_pool(cfg.threads, || -> Result<(), DriverError> {
        for _ in 0..cfg.max_block_sweeps {
            let mut sweep = SweepStats::default();
            for step in &steps {
                let outputs: Vec<Result<TaskOutput, DriverError>> = step
                    .par_iter()
                    .map(|&(p, q)| {
                        let gpq = ColumnMatrix::hcat(
                            &g.column_block(p * w, w),
                            &g.column_block(q * w, w),
                        );
                        let cm: Vec<usize> = (p * w..(p + 1) * w)
                            .chain(q * w..(q + 1) * w)
                            .map(|i| colmap[i])
                            .collect();
                        let r = match cfg.shortening {
                            Shortening::Cholesky => {
                                let mut h = kernel::gram(&gpq)?;
                                kernel::cholesky_in_place(&mut h)?;
                                h
                            }
                            Shortening::Qr => kernel::qr_peeloff(&gpq)?,
                        };
                        let res = kernel::inner_jacobi_until(&r, &cm, sig, inner, &inner_cfg, &poll)?;
                        let (gn, vn) = if res.rotations > 0 {
                            let gn = kernel::postmultiply(&gpq, &res.v_acc)?;
                            let vn = match &v {
                                Some(vm) => {
                                    let vpq = ColumnMatrix::hcat(
                                        &vm.column_block(p * w, w),
                                        &vm.column_block(q * w, w),
                                    );
                                    Some(kernel::postmultiply(&vpq, &res.v_acc)?)
                                }
                                None => None,
                            };
                            (Some(gn), vn)
                        } else {
                            (None, None)
                        };
                        Ok(TaskOutput {
                            p,
                            q,
                            g: gn,
                            v: vn,
                            rotations: res.rotations,
                            proper: res.proper_rotations,
                        })
                    })
                    .collect();
                for out in outputs {
                    let out = out?;
                    sweep.rotations += out.rotations;
                    sweep.proper_rotations += out.proper;
                    if let Some(gn) = out.g {
                        g.set_column_block(out.p * w, &gn.column_block(0, w));
                        g.set_column_block(out.q * w, &gn.column_block(w, w));
                    }
                    if let (Some(vn), Some(vm)) = (out.v, v.as_mut()) {
                        vm.set_column_block(out.p * w, &vn.column_block(0, w));
                        vm.set_column_block(out.q * w, &vn.column_block(w, w));
                    }
                }
            }
            stats.push(sweep);
            if sweep.proper_rotations == 0 {
                converged = true;
                break;
            }
            if poll() {
                break;
            }
        }
        Ok(())
    })??;
    Ok(IterationOutcome {
        g,
        v,
        stats,
        converged,
    })
}

/// Blocked one-sided Jacobi (H)SVD of `g` with signature `sig`.
pub fn block_jacobi(g: &ColumnMatrix, sig: Signature, cfg: &SolverConfig) -> Result<HsvdResult, DriverError> {
    let n = g.cols();
    if sig.order() != n {
        return Err(DriverError::Config(format!(
            "signature of order {} for {} columns",
            sig.order(),
            n
        )));
    }
    if g.rows() < n {
        return Err(DriverError::Config(format!("{}x{} input has fewer rows than columns", g.rows(), n)));
    }
    if cfg.shortening == Shortening::Qr && !g.rows().is_multiple_of(2 * cfg.block_width) {
        return Err(DriverError::Config("QR shortening needs rows divisible by twice the block width".into()));
    }
    if cfg.solve_for_v && (g.rows() != n || !g.is_upper_triangular()) {
        return Err(DriverError::NotTriangular);
    }
    check_scaling(g)?;
    let (outer, inner) = strategies_for(n, cfg)?;
    let colmap: Vec<usize> = (0..n).collect();
    let out = iterate(g.clone(), &colmap, sig, cfg, &outer, &inner, None)?;
    let v = if cfg.solve_for_v && cfg.accumulate_v {
        Some(solve_for_v(g, &out.g)?)
    } else {
        out.v
    };
    finish(out.g, v, sig, out.stats, out.converged)
}

/// Extraction and final ordering shared by the drivers.
pub fn finish(
    g: ColumnMatrix,
    v: Option<ColumnMatrix>,
    sig: Signature,
    stats: Vec<SweepStats>,
    converged: bool,
) -> Result<HsvdResult, DriverError> {
    let n = g.cols();
    let norms = column_norms(&g)?;
    let mut u = ColumnMatrix::zeros(g.rows(), n);
    for (j, nm) in norms.iter().enumerate() {
        let dst = u.col_mut(j);
        for (d, &x) in dst.iter_mut().zip(g.col(j)) {
            *d = norm::ldexp(x, -nm.exp) / nm.sigma;
        }
    }
    let sigma: Vec<f64> = norms.iter().map(|nm| nm.to_f64()).collect();
    let order = sorted_order(&sigma, sig);
    let sigma_sorted = order.iter().map(|&i| sigma[i]).collect();
    let permute = |m: &ColumnMatrix| {
        let mut out = ColumnMatrix::zeros(m.rows(), n);
        for (dst, &src) in order.iter().enumerate() {
            out.col_mut(dst).copy_from_slice(m.col(src));
        }
        out
    };
    Ok(HsvdResult {
        sigma: sigma_sorted,
        u: permute(&u),
        v: v.as_ref().map(permute),
        signature: sig,
        block_sweeps: stats.len(),
        stats,
        converged,
    })
}

/// Non-increasing within each sign class; ties keep the column order.
fn sorted_order(sigma: &[f64], sig: Signature) -> Vec<usize> {
    let np = sig.n_plus();
    let mut pos: Vec<usize> = (0..np).collect();
    let mut neg: Vec<usize> = (np..sigma.len()).collect();
    let by = |a: &usize, b: &usize| sigma[*b].total_cmp(&sigma[*a]).then(a.cmp(b));
    pos.sort_by(by);
    neg.sort_by(by);
    pos.extend(neg);
    pos
}

fn column_norms(g: &ColumnMatrix) -> Result<Vec<norm::Norm2>, DriverError> {
    (0..g.cols())
        .map(|j| {
            let nm = norm::norm2(g.col(j))?;
            if nm.sigma == 0.0 {
                Err(DriverError::ZeroColumn { index: j })
            } else {
                Ok(nm)
            }
        })
        .collect()
}

/// `sigma_i = ||g_i||_2`, robustly.
pub fn extract_sigma(g: &ColumnMatrix) -> Result<Vec<f64>, DriverError> {
    Ok(column_norms(g)?.iter().map(|nm| nm.to_f64()).collect())
}

/// Back substitution for `R V = W` with `R` upper triangular.
pub fn solve_for_v(r: &ColumnMatrix, w: &ColumnMatrix) -> Result<ColumnMatrix, DriverError> {
    let n = r.cols();
    if r.rows() != n || w.rows() != n {
        return Err(DriverError::Config(format!(
            "triangular solve with {}x{} factor and {}x{} right-hand side",
            r.rows(),
            n,
            w.rows(),
            w.cols()
        )));
    }
    if let Some(index) = (0..n).find(|&i| r.get(i, i) == 0.0) {
        return Err(DriverError::SingularTriangle { index });
    }
    let mut x = w.clone();
    for j in 0..w.cols() {
        let col = x.col_mut(j);
        for i in (0..n).rev() {
            let xi = col[i] / r.get(i, i);
            col[i] = xi;
            let rc = r.col(i);
            for k in 0..i {
                col[k] = (-rc[k]).mul_add(xi, col[k]);
            }
        }
    }
    Ok(x)
}
