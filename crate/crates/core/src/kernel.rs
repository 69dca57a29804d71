//! One block-pair task.
//!
//! Two block-columns `[G_p, G_q]` (`m x c`, `c = 2w`) are shortened to a
//! `c x c` triangular factor `R` with the same Gram matrix, `R` is
//! orthogonalized by pointwise Jacobi under a p-strategy of order `c`, and the
//! accumulated transformation is returned for the caller to apply.

use thiserror::Error;

use crate::matrix::{ColumnMatrix, Signature};
use crate::norm::{self, NormError, EPS};
use crate::rotation::{compute_rotation, PivotGram, RotationError, RotationKind};
use crate::strategy::PStrategy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Cholesky pivot {index} is not positive ({value}); the block-columns are numerically rank deficient")]
    NonPositivePivot { index: usize, value: f64 },
    #[error("column {index} has zero norm; the input lost full rank")]
    ZeroColumn { index: usize },
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// How a pair of block-columns is reduced to a square factor.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Shortening {
    Cholesky,
    Qr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockTaskResult {
    /// The orthogonalized factor `R V`.
    pub r_out: ColumnMatrix,
    /// Accumulated (J-)orthogonal transformation.
    pub v_acc: ColumnMatrix,
    /// All rotations over all inner sweeps.
    pub rotations: u64,
    /// Rotations with `cs != 1`.
    pub proper_rotations: u64,
    pub inner_sweeps: usize,
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |acc, (&a, &b)| a.mul_add(b, acc))
}

/// `G^T G` with fma accumulation, mirrored from the lower triangle.
pub fn gram(gpq: &ColumnMatrix) -> Result<ColumnMatrix, KernelError> {
    let c = gpq.cols();
    if gpq.rows() < c {
        return Err(KernelError::Dimension(format!(
            "Gram of a {}x{} block needs rows >= cols",
            gpq.rows(),
            c
        )));
    }
    let mut h = ColumnMatrix::zeros(c, c);
    for j in 0..c {
        let gj = gpq.col(j);
        for i in j..c {
            let v = dot(gpq.col(i), gj);
            h.set(i, j, v);
            h.set(j, i, v);
        }
    }
    Ok(h)
}

/// Forward-looking Cholesky `H = L L^T`; `h` is overwritten by `R = L^T`.
pub fn cholesky_in_place(h: &mut ColumnMatrix) -> Result<(), KernelError> {
    let n = h.cols();
    if h.rows() != n {
        return Err(KernelError::Dimension(format!("Cholesky of a {}x{} matrix", h.rows(), n)));
    }
    // L is built in the lower triangle, column by column
    for k in 0..n {
        let piv = h.get(k, k);
        if !(piv > 0.0) || !piv.is_finite() {
            return Err(KernelError::NonPositivePivot { index: k, value: piv });
        }
        let d = piv.sqrt();
        h.set(k, k, d);
        for x in k + 1..n {
            let v = h.get(x, k) / d;
            h.set(x, k, v);
        }
        for j in k + 1..n {
            let ljk = h.get(j, k);
            for x in j..n {
                let v = (-h.get(x, k)).mul_add(ljk, h.get(x, j));
                h.set(x, j, v);
            }
        }
    }
    for j in 0..n {
        for i in 0..j {
            let v = h.get(j, i);
            h.set(i, j, v);
            h.set(j, i, 0.0);
        }
    }
    Ok(())
}

pub fn cholesky(h: &ColumnMatrix) -> Result<ColumnMatrix, KernelError> {
    let mut r = h.clone();
    cholesky_in_place(&mut r)?;
    Ok(r)
}

/// Householder triangularization of a square chunk, in place.
fn householder_square(a: &mut ColumnMatrix) -> Result<(), KernelError> {
    let n = a.cols();
    for k in 0..n {
        let alpha = a.get(k, k);
        let xnorm = norm::norm(&a.col(k)[k + 1..])?;
        if xnorm == 0.0 {
            continue;
        }
        let beta = -norm::norm(&[alpha, xnorm])?.copysign(alpha);
        let tau = (beta - alpha) / beta;
        let scale = 1.0 / (alpha - beta);
        {
            let col = a.col_mut(k);
            col[k] = beta;
            for v in &mut col[k + 1..] {
                *v *= scale;
            }
        }
        for j in k + 1..n {
            let (vk, aj) = a.col_pair_mut(k, j);
            let v = &vk[k + 1..];
            let w = aj[k] + dot(v, &aj[k + 1..]);
            let tw = tau * w;
            aj[k] -= tw;
            for (x, &vi) in aj[k + 1..].iter_mut().zip(v) {
                *x = (-tw).mul_add(vi, *x);
            }
        }
        for v in &mut a.col_mut(k)[k + 1..] {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Rotates row `i` of `r0` and row `i1` of `r1` over columns `from..` to zero `r1[i1, from]`.
fn givens_rows(
    r0: &mut ColumnMatrix,
    i: usize,
    r1: &mut ColumnMatrix,
    i1: usize,
    from: usize,
) -> Result<(), KernelError> {
    let a = r0.get(i, from);
    let b = r1.get(i1, from);
    if b == 0.0 {
        return Ok(());
    }
    let r = norm::norm(&[a, b])?;
    let (c, s) = (a / r, b / r);
    for j in from + 1..r0.cols() {
        let x = r0.get(i, j);
        let y = r1.get(i1, j);
        r0.set(i, j, c.mul_add(x, s * y));
        r1.set(i1, j, c.mul_add(y, -(s * x)));
    }
    r0.set(i, from, r);
    r1.set(i1, from, 0.0);
    Ok(())
}

/// Triangular factor of a tall matrix: Householder per square chunk, then
/// merging of each further chunk's factor into the first one, one diagonal
/// per stage. The diagonal of the result is nonnegative.
pub fn qr_peeloff(g: &ColumnMatrix) -> Result<ColumnMatrix, KernelError> {
    let (m, c) = (g.rows(), g.cols());
    if c == 0 || m < c || m % c != 0 {
        return Err(KernelError::Dimension(format!(
            "peel-off QR needs rows to be a positive multiple of cols, got {m}x{c}"
        )));
    }
    let chunk = |k: usize| ColumnMatrix::from_fn(c, c, |i, j| g.get(k * c + i, j));
    let mut r0 = chunk(0);
    householder_square(&mut r0)?;
    for k in 1..m / c {
        let mut r1 = chunk(k);
        householder_square(&mut r1)?;
        for stage in 0..c {
            for x in stage..c {
                givens_rows(&mut r0, x, &mut r1, x - stage, x)?;
            }
        }
    }
    for i in 0..c {
        if r0.get(i, i) < 0.0 {
            for j in i..c {
                let v = r0.get(i, j);
                r0.set(i, j, -v);
            }
        }
    }
    Ok(r0)
}

/// Settings of the inner pointwise Jacobi process.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct InnerConfig {
    pub max_sweeps: usize,
    /// Relative orthogonality threshold; `None` means `eps * sqrt(order)`.
    pub tolerance: Option<f64>,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 30,
            tolerance: None,
        }
    }
}

/// `eps * sqrt(order)`.
pub fn default_tolerance(order: usize) -> f64 {
    EPS * (order as f64).sqrt()
}

/// Pointwise one-sided Jacobi on a square factor.
///
/// `colmap[i]` is the global column index of local column `i` and decides,
/// together with `sig`, whether a pair is rotated hyperbolically. Sweeps stop
/// after one without rotations or after `cfg.max_sweeps`.
pub fn inner_jacobi(
    r: &ColumnMatrix,
    colmap: &[usize],
    sig: Signature,
    strategy: &PStrategy,
    cfg: &InnerConfig,
) -> Result<BlockTaskResult, KernelError> {
    inner_jacobi_until(r, colmap, sig, strategy, cfg, &|| false)
}

/// Like [`inner_jacobi`], additionally ending after the running sweep once `stop` returns true.
pub fn inner_jacobi_until(
    r: &ColumnMatrix,
    colmap: &[usize],
    sig: Signature,
    strategy: &PStrategy,
    cfg: &InnerConfig,
    stop: &dyn Fn() -> bool,
) -> Result<BlockTaskResult, KernelError> {
    let c = r.cols();
    if r.rows() != c || colmap.len() != c || strategy.order() != c {
        return Err(KernelError::Dimension(format!(
            "inner Jacobi on {}x{} with {} column ids and a strategy of order {}",
            r.rows(),
            c,
            colmap.len(),
            strategy.order()
        )));
    }
    if cfg.max_sweeps == 0 {
        return Err(KernelError::Dimension("max_sweeps must be at least 1".into()));
    }
    let tol = cfg.tolerance.unwrap_or_else(|| default_tolerance(c));
    let steps = strategy.zero_based_steps();
    let mut g = r.clone();
    let mut v = ColumnMatrix::identity(c);
    let (mut total, mut proper, mut sweeps) = (0u64, 0u64, 0usize);
    loop {
        let mut a_r = 0u64;
        for step in &steps {
            for &(p, q) in step {
                let h_pp = dot(g.col(p), g.col(p));
                let h_qq = dot(g.col(q), g.col(q));
                if !(h_pp > 0.0) {
                    return Err(KernelError::ZeroColumn { index: colmap[p] });
                }
                if !(h_qq > 0.0) {
                    return Err(KernelError::ZeroColumn { index: colmap[q] });
                }
                let h_pq = dot(g.col(p), g.col(q));
                if h_pq.abs() < tol * h_pp.sqrt() * h_qq.sqrt() {
                    continue;
                }
                let (k, l) = (colmap[p], colmap[q]);
                let (pos_k, pos_l) = (sig.sign(k) > 0.0, sig.sign(l) > 0.0);
                let kind = if pos_k != pos_l {
                    RotationKind::Hyperbolic
                } else {
                    RotationKind::Trig
                };
                let rot = compute_rotation(PivotGram { h_pp, h_qq, h_pq }, kind)?;
                a_r += 1;
                if rot.proper {
                    proper += 1;
                }
                let swap = kind == RotationKind::Trig && {
                    let hp = (-rot.tn).mul_add(h_pq, h_pp);
                    let hq = rot.tn.mul_add(h_pq, h_qq);
                    if pos_k {
                        hp < hq
                    } else {
                        hp > hq
                    }
                };
                {
                    let (x, y) = g.col_pair_mut(p, q);
                    rot.apply(x, y);
                }
                {
                    let (x, y) = v.col_pair_mut(p, q);
                    rot.apply(x, y);
                }
                if swap {
                    g.swap_cols(p, q);
                    v.swap_cols(p, q);
                }
            }
        }
        total += a_r;
        sweeps += 1;
        if a_r == 0 || sweeps >= cfg.max_sweeps || stop() {
            break;
        }
    }
    Ok(BlockTaskResult {
        r_out: g,
        v_acc: v,
        rotations: total,
        proper_rotations: proper,
        inner_sweeps: sweeps,
    })
}

/// `A V` with fma accumulation, one output column at a time.
pub fn postmultiply(a: &ColumnMatrix, v: &ColumnMatrix) -> Result<ColumnMatrix, KernelError> {
    if a.cols() != v.rows() || v.rows() != v.cols() {
        return Err(KernelError::Dimension(format!(
            "postmultiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let m = a.rows();
    let mut out = ColumnMatrix::zeros(m, v.cols());
    for j in 0..v.cols() {
        let vj = v.col(j);
        let dst = out.col_mut(j);
        for (k, &w) in vj.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (d, &x) in dst.iter_mut().zip(a.col(k)) {
                *d = x.mul_add(w, *d);
            }
        }
    }
    Ok(out)
}

/// A complete task: shorten, orthogonalize, and report the transformation.
pub fn block_task(
    gpq: &ColumnMatrix,
    colmap: &[usize],
    sig: Signature,
    strategy: &PStrategy,
    shortening: Shortening,
    cfg: &InnerConfig,
) -> Result<BlockTaskResult, KernelError> {
    let r = match shortening {
        Shortening::Cholesky => {
            let mut h = gram(gpq)?;
            cholesky_in_place(&mut h)?;
            h
        }
        Shortening::Qr => qr_peeloff(gpq)?,
    };
    inner_jacobi(&r, colmap, sig, strategy, cfg)
}
