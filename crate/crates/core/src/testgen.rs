//! Test factors with prescribed spectra, and the eigenvalue error metric.
//!
//! A factor is built directly as `G = Q diag(sqrt|lambda|) K`, where `Q` is a
//! product of random Householder reflectors and `K` is J-orthogonal
//! (`K^T J K = J`). Then `G J G^T = Q diag(lambda) Q^T` and the hyperbolic
//! singular values of `G` are `sqrt|lambda|`. `K` mixes the columns so that
//! the solver has real work to do: it is a block-diagonal orthogonal matrix,
//! times disjoint hyperbolic rotations pairing positive with negative columns,
//! times another block-diagonal orthogonal matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use thiserror::Error;

use crate::matrix::{ColumnMatrix, Signature};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestgenError {
    #[error("unknown spectrum type {0} (expected 1 to 4)")]
    UnknownType(u8),
    #[error("spectrum type 1 and 2 need n >= 16, got {0}")]
    TooSmall(usize),
    #[error("lambda[{0}] is zero")]
    ZeroEigenvalue(usize),
    #[error("length mismatch: {sigma} singular values for {lambda} eigenvalues")]
    LengthMismatch { sigma: usize, lambda: usize },
    #[error("signature order {sig} does not match {n}")]
    SignatureMismatch { sig: usize, n: usize },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpectrumSpec {
    /// 1: sixteen entries 0.5, the rest normal(0, 0.1);
    /// 2: one plus a type-1 draw;
    /// 3: uniform(1e-7, 10k) with random signs;
    /// 4: uniform(1e-7, 10k), with `k = max(n / 1024, 1)`.
    pub kind: u8,
    pub n: usize,
    pub seed: u64,
}

/// A generated test factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub g: ColumnMatrix,
    pub signature: Signature,
    /// Positives descending, then negatives ascending.
    pub lambda: Vec<f64>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gen_spectrum(spec: SpectrumSpec) -> Result<Vec<f64>, TestgenError> {
    let n = spec.n;
    let mut rng = rng_for(spec.seed, 0);
    let k = (n / 1024).max(1) as f64;
    match spec.kind {
        1 | 2 => {
            if n < 16 {
                return Err(TestgenError::TooSmall(n));
            }
            let normal = Normal::new(0.0, 0.1).expect("valid normal");
            let shift = if spec.kind == 2 { 1.0 } else { 0.0 };
            let mut out = vec![0.5 + shift; 16];
            while out.len() < n {
                let x: f64 = normal.sample(&mut rng) + shift;
                if x != 0.0 && (spec.kind == 1 || x > 0.0) {
                    out.push(x);
                }
            }
            Ok(out)
        }
        3 | 4 => {
            let uni = Uniform::new(1e-7, 10.0 * k).expect("valid range");
            Ok((0..n)
                .map(|_| {
                    let x = uni.sample(&mut rng);
                    if spec.kind == 3 && rng.random::<bool>() {
                        -x
                    } else {
                        x
                    }
                })
                .collect())
        }
        t => Err(TestgenError::UnknownType(t)),
    }
}

/// Positives descending, then negatives ascending.
pub fn sort_spectrum(lambda: &[f64]) -> Vec<f64> {
    let mut pos: Vec<f64> = lambda.iter().copied().filter(|&x| x > 0.0).collect();
    let mut neg: Vec<f64> = lambda.iter().copied().filter(|&x| x < 0.0).collect();
    pos.sort_by(|a, b| b.total_cmp(a));
    neg.sort_by(|a, b| a.total_cmp(b));
    pos.extend(neg);
    pos
}

fn random_unit(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 0.0 {
            return v.into_iter().map(|x| x / nrm).collect();
        }
    }
}

/// Applies `I - 2 u u^T` from the left to rows `off..off + u.len()` of `m`.
fn reflect_rows(m: &mut ColumnMatrix, off: usize, u: &[f64]) {
    for j in 0..m.cols() {
        let col = &mut m.col_mut(j)[off..off + u.len()];
        let d = col.iter().zip(u).fold(0.0, |acc, (&x, &y)| x.mul_add(y, acc));
        let d2 = 2.0 * d;
        for (x, &y) in col.iter_mut().zip(u) {
            *x = (-d2).mul_add(y, *x);
        }
    }
}

/// Applies `I - 2 u u^T` from the right to columns `off..off + u.len()` of `m`.
fn reflect_cols(m: &mut ColumnMatrix, off: usize, u: &[f64]) {
    let rows = m.rows();
    let mut acc = vec![0.0; rows];
    for (k, &uk) in u.iter().enumerate() {
        for (a, &x) in acc.iter_mut().zip(m.col(off + k)) {
            *a = x.mul_add(uk, *a);
        }
    }
    for (k, &uk) in u.iter().enumerate() {
        let s = -2.0 * uk;
        for (x, &a) in m.col_mut(off + k).iter_mut().zip(&acc) {
            *x = a.mul_add(s, *x);
        }
    }
}

/// Multiplies `m` from the right by a random orthogonal matrix acting on columns `off..off + len`.
fn mix_block(m: &mut ColumnMatrix, off: usize, len: usize, rng: &mut ChaCha8Rng) {
    if len < 2 {
        return;
    }
    for _ in 0..len {
        let u = random_unit(rng, len);
        reflect_cols(m, off, &u);
    }
}

/// Builds `(G, J)` with hyperbolic singular values `sqrt|lambda|`.
pub fn gen_factor(lambda: &[f64], seed: u64) -> Result<Fixture, TestgenError> {
    gen_factor_with_mixing(lambda, seed).map(|(f, _)| f)
}

/// [`gen_factor`] together with its mixing factor `K`; `G K^{-1}` has orthogonal columns of norms `sqrt|lambda|`.
pub fn gen_factor_with_mixing(lambda: &[f64], seed: u64) -> Result<(Fixture, ColumnMatrix), TestgenError> {
    if let Some(i) = lambda.iter().position(|&x| x == 0.0) {
        return Err(TestgenError::ZeroEigenvalue(i));
    }
    let lambda = sort_spectrum(lambda);
    let n = lambda.len();
    let np = lambda.iter().filter(|&&x| x > 0.0).count();
    let sig = Signature::new(n, np).expect("n_plus <= n");
    let mut rng = rng_for(seed, 1);

    // K = O1 H O2, built by right multiplications of the identity
    let mut k = ColumnMatrix::identity(n);
    mix_block(&mut k, 0, np, &mut rng);
    mix_block(&mut k, np, n - np, &mut rng);
    let tanh = Uniform::new_inclusive(-0.5, 0.5).expect("valid range");
    for i in 0..np.min(n - np) {
        let t: f64 = tanh.sample(&mut rng);
        let c = 1.0 / (1.0 - t * t).sqrt();
        let (p, q) = (i, np + i);
        let (x, y) = k.col_pair_mut(p, q);
        for (a, b) in x.iter_mut().zip(y.iter_mut()) {
            let (u, v) = (*a, *b);
            *a = c * t.mul_add(v, u);
            *b = c * t.mul_add(u, v);
        }
    }
    mix_block(&mut k, 0, np, &mut rng);
    mix_block(&mut k, np, n - np, &mut rng);

    // G = Q D K
    let mut g = k.clone();
    for (i, &l) in lambda.iter().enumerate() {
        let d = l.abs().sqrt();
        for j in 0..n {
            let v = g.get(i, j) * d;
            g.set(i, j, v);
        }
    }
    for _ in 0..n {
        let u = random_unit(&mut rng, n);
        reflect_rows(&mut g, 0, &u);
    }
    Ok((
        Fixture {
            g,
            signature: sig,
            lambda,
        },
        k,
    ))
}

/// Spectrum and factor from one seed.
pub fn gen_fixture(spec: SpectrumSpec) -> Result<Fixture, TestgenError> {
    let lambda = gen_spectrum(spec)?;
    gen_factor(&lambda, spec.seed)
}

/// `max_i |sigma_i^2 j_i - lambda_i| / |lambda_i|`, both sides sorted non-increasingly.
pub fn relative_error(sigma: &[f64], sig: Signature, lambda: &[f64]) -> Result<f64, TestgenError> {
    if sigma.len() != lambda.len() {
        return Err(TestgenError::LengthMismatch {
            sigma: sigma.len(),
            lambda: lambda.len(),
        });
    }
    if sig.order() != sigma.len() {
        return Err(TestgenError::SignatureMismatch {
            sig: sig.order(),
            n: sigma.len(),
        });
    }
    if let Some(i) = lambda.iter().position(|&x| x == 0.0) {
        return Err(TestgenError::ZeroEigenvalue(i));
    }
    let mut computed: Vec<f64> = sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| s * s * sig.sign(i))
        .collect();
    let mut exact = lambda.to_vec();
    computed.sort_by(|a, b| b.total_cmp(a));
    exact.sort_by(|a, b| b.total_cmp(a));
    Ok(computed
        .iter()
        .zip(&exact)
        .map(|(c, e)| ((c - e) / e).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_one_pins_first_sixteen() {
        let l = gen_spectrum(SpectrumSpec { kind: 1, n: 32, seed: 1 }).unwrap();
        assert_eq!(l.len(), 32);
        assert!(l[..16].iter().all(|&x| x == 0.5));
        assert!(l.iter().all(|&x| x != 0.0));
    }

    #[test]
    fn type_two_is_positive() {
        let l = gen_spectrum(SpectrumSpec { kind: 2, n: 300, seed: 5 }).unwrap();
        assert!(l.iter().all(|&x| x > 0.0));
        assert!(l[..16].iter().all(|&x| x == 1.5));
    }

    #[test]
    fn uniform_types() {
        let l3 = gen_spectrum(SpectrumSpec { kind: 3, n: 200, seed: 2 }).unwrap();
        assert!(l3.iter().all(|&x| (1e-7..=10.0).contains(&x.abs())));
        assert!(l3.iter().any(|&x| x < 0.0) && l3.iter().any(|&x| x > 0.0));
        let l4 = gen_spectrum(SpectrumSpec { kind: 4, n: 200, seed: 2 }).unwrap();
        assert!(l4.iter().all(|&x| (1e-7..=10.0).contains(&x)));
        let big = gen_spectrum(SpectrumSpec { kind: 4, n: 2048, seed: 2 }).unwrap();
        assert!(big.iter().any(|&x| x > 10.0));
    }

    #[test]
    fn spectrum_errors_and_determinism() {
        assert_eq!(
            gen_spectrum(SpectrumSpec { kind: 5, n: 32, seed: 0 }),
            Err(TestgenError::UnknownType(5))
        );
        assert_eq!(
            gen_spectrum(SpectrumSpec { kind: 1, n: 8, seed: 0 }),
            Err(TestgenError::TooSmall(8))
        );
        let s = SpectrumSpec { kind: 3, n: 64, seed: 9 };
        assert_eq!(gen_spectrum(s).unwrap(), gen_spectrum(s).unwrap());
    }

    #[test]
    fn unit_spectrum_gives_orthogonal_factor() {
        let f = gen_factor(&[1.0; 8], 3).unwrap();
        assert!(f.signature.is_definite());
        let gtg = f.g.transpose().matmul(&f.g);
        assert!(gtg.sub(&ColumnMatrix::identity(8)).max_abs() < 1e-14);
    }

    #[test]
    fn factor_is_j_consistent() {
        let f = gen_factor(&[4.0, -9.0, 2.0, -1.0], 11).unwrap();
        assert_eq!(f.lambda, vec![4.0, 2.0, -9.0, -1.0]);
        assert_eq!(f.signature.n_plus(), 2);
        // G J G^T has trace sum(lambda)
        let j = f.signature.diagonal();
        let mut tr = 0.0;
        for i in 0..4 {
            for k in 0..4 {
                tr += f.g.get(i, k) * f.g.get(i, k) * j[k];
            }
        }
        assert!((tr - (-4.0)).abs() < 1e-13);
        assert!(gen_factor(&[1.0, 0.0], 1).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let sig = Signature::new(3, 2).unwrap();
        let lambda = [4.0, 1.0, -9.0];
        assert_eq!(relative_error(&[2.0, 1.0, 3.0], sig, &lambda).unwrap(), 0.0);
        let d = 1e-8;
        let e = relative_error(&[2.0 * (1.0 + d), 1.0, 3.0], sig, &lambda).unwrap();
        assert!((e / (2.0 * d) - 1.0).abs() < 0.1);
        assert!(relative_error(&[1.0], sig, &lambda).is_err());
    }
}
