mod common;

use common::{dd_gram, dd_matmul, j_orthogonality_defect, EPS};
use hjsvd::kernel::*;
use hjsvd::strategy::{generate, PStrategy, SearchLimits, StrategyKind};
use hjsvd::{ColumnMatrix, Signature};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rrow(n: usize) -> PStrategy {
    generate(StrategyKind::ReversedRow, n, &SearchLimits::default()).unwrap()
}

fn random(rows: usize, cols: usize, seed: u64) -> ColumnMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ColumnMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn col_norm(m: &ColumnMatrix, j: usize) -> f64 {
    m.col(j).iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn clg(n: usize) -> i32 {
    (n as f64).log2().ceil() as i32
}

#[test]
fn gram_matches_oracle() {
    let g = random(64, 8, 1);
    let h = gram(&g).unwrap();
    let want = dd_gram(&g);
    let tol = 2f64.powi(1 + clg(64)) * EPS;
    for i in 0..8 {
        for j in 0..8 {
            assert!((h.get(i, j) - want.get(i, j)).abs() <= tol * col_norm(&g, i) * col_norm(&g, j));
        }
    }
    let mut e = ColumnMatrix::zeros(4, 2);
    e.set(0, 0, 1.0);
    e.set(0, 1, 1.0);
    assert_eq!(gram(&e).unwrap(), ColumnMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]));
}

#[test]
fn cholesky_examples() {
    assert_eq!(cholesky(&ColumnMatrix::identity(4)).unwrap(), ColumnMatrix::identity(4));
    let r = cholesky(&ColumnMatrix::from_rows(&[&[4.0, 2.0], &[2.0, 5.0]])).unwrap();
    assert_eq!(r, ColumnMatrix::from_rows(&[&[2.0, 1.0], &[0.0, 2.0]]));
    let n = 32;
    let a = random(n, n, 2);
    let mut h = dd_gram(&a);
    for i in 0..n {
        h.set(i, i, h.get(i, i) + n as f64);
    }
    let r = cholesky(&h).unwrap();
    assert!(r.is_upper_triangular());
    let res = dd_gram(&r).sub(&h).frobenius_norm();
    assert!(res <= 10.0 * n as f64 * EPS * h.frobenius_norm());
    let bad = ColumnMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
    assert!(matches!(cholesky(&bad), Err(KernelError::NonPositivePivot { .. })));
}

#[test]
fn peeloff_examples() {
    let w = 4;
    let stacked = ColumnMatrix::from_fn(2 * w, w, |i, j| if i % w == j { 1.0 } else { 0.0 });
    let r = qr_peeloff(&stacked).unwrap();
    let want = ColumnMatrix::from_fn(w, w, |i, j| if i == j { 2f64.sqrt() } else { 0.0 });
    assert!(r.sub(&want).max_abs() <= 2.0 * EPS);
    let tri = ColumnMatrix::from_rows(&[&[2.0, 1.0, -1.0], &[0.0, 3.0, 0.5], &[0.0, 0.0, 1.0]]);
    assert_eq!(qr_peeloff(&tri).unwrap(), tri);
    assert!(qr_peeloff(&random(10, 4, 0)).is_err());
}

#[test]
fn peeloff_gram_residual() {
    let g = random(128, 16, 3);
    let r = qr_peeloff(&g).unwrap();
    assert!(r.is_upper_triangular());
    assert!((0..16).all(|i| r.get(i, i) >= 0.0));
    let gg = dd_gram(&g);
    let res = dd_gram(&r).sub(&gg).frobenius_norm();
    assert!(res <= 20.0 * 128.0 * EPS * gg.frobenius_norm());
}

#[test]
fn shortening_paths_agree() {
    let g = random(96, 8, 4);
    let rc = cholesky(&gram(&g).unwrap()).unwrap();
    let rq = qr_peeloff(&g).unwrap();
    let gg = dd_gram(&g);
    let d = dd_gram(&rc).sub(&dd_gram(&rq)).frobenius_norm();
    assert!(d <= 40.0 * 96.0 * EPS * gg.frobenius_norm());
}

#[test]
fn diagonal_factor_needs_no_rotations() {
    let r = ColumnMatrix::from_fn(4, 4, |i, j| if i == j { (4 - i) as f64 } else { 0.0 });
    let res = inner_jacobi(&r, &[0, 1, 2, 3], Signature::definite(4), &rrow(4), &InnerConfig::default()).unwrap();
    assert_eq!(res.rotations, 0);
    assert_eq!(res.inner_sweeps, 1);
    assert_eq!(res.v_acc, ColumnMatrix::identity(4));
    assert_eq!(res.r_out, r);
}

#[test]
fn golden_ratio_example() {
    let r = ColumnMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
    let res = inner_jacobi(&r, &[0, 1], Signature::definite(2), &rrow(2), &InnerConfig::default()).unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut s = [col_norm(&res.r_out, 0), col_norm(&res.r_out, 1)];
    s.sort_by(|a, b| b.total_cmp(a));
    assert!((s[0] / phi - 1.0).abs() <= 4.0 * EPS);
    assert!((s[1] * phi - 1.0).abs() <= 4.0 * EPS);
    assert!(((s[0] * s[0]) / ((3.0 + 5f64.sqrt()) / 2.0) - 1.0).abs() <= 8.0 * EPS);
}

#[test]
fn single_sweep_limit_is_respected() {
    let r = cholesky(&gram(&random(16, 8, 5)).unwrap()).unwrap();
    let cfg = InnerConfig {
        max_sweeps: 1,
        tolerance: None,
    };
    let res = inner_jacobi(&r, &(0..8).collect::<Vec<_>>(), Signature::definite(8), &rrow(8), &cfg).unwrap();
    assert_eq!(res.inner_sweeps, 1);
    assert!(res.rotations > 0);
}

#[test]
fn converged_trig_block_is_orthogonal_and_sorted() {
    let w = 8;
    let r = cholesky(&gram(&random(32, w, 6)).unwrap()).unwrap();
    let res = inner_jacobi(&r, &(0..w).collect::<Vec<_>>(), Signature::definite(w), &rrow(w), &InnerConfig::default())
        .unwrap();
    let out = &res.r_out;
    let tol = default_tolerance(w);
    for i in 0..w {
        for j in i + 1..w {
            let h = out.col(i).iter().zip(out.col(j)).map(|(a, b)| a * b).sum::<f64>();
            assert!(h.abs() <= 2.0 * tol * col_norm(out, i) * col_norm(out, j), "{i} {j}");
        }
    }
    assert!(j_orthogonality_defect(&res.v_acc, &vec![1.0; w]) <= 50.0 * w as f64 * EPS);
    let norms: Vec<f64> = (0..w).map(|j| col_norm(out, j)).collect();
    let mut sorted = norms.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    assert_eq!(norms, sorted);
    // R V = R_out
    assert!(dd_matmul(&r, &res.v_acc).sub(out).max_abs() <= 50.0 * w as f64 * EPS * r.max_abs());
}

#[test]
fn hyperbolic_block_keeps_j_orthogonality() {
    let w = 8;
    let sig = Signature::new(w, 3).unwrap();
    let r = cholesky(&gram(&random(32, w, 7)).unwrap()).unwrap();
    let res = inner_jacobi(&r, &(0..w).collect::<Vec<_>>(), sig, &rrow(w), &InnerConfig::default()).unwrap();
    assert!(res.rotations > 0);
    assert!(j_orthogonality_defect(&res.v_acc, &sig.diagonal()) <= 50.0 * w as f64 * EPS * 100.0);
    assert!(dd_matmul(&r, &res.v_acc).sub(&res.r_out).max_abs() <= 1e-12 * r.max_abs());
}

#[test]
fn postmultiply_examples() {
    let a = random(6, 2, 8);
    assert_eq!(postmultiply(&a, &ColumnMatrix::identity(2)).unwrap(), a);
    let swap = ColumnMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let b = postmultiply(&a, &swap).unwrap();
    assert_eq!(b.col(0), a.col(1));
    assert_eq!(b.col(1), a.col(0));
    assert!(postmultiply(&a, &ColumnMatrix::identity(3)).is_err());
}

#[test]
fn block_task_reports_the_transformation() {
    let g = random(64, 8, 9);
    let cm: Vec<usize> = (0..8).collect();
    let res = block_task(&g, &cm, Signature::definite(8), &rrow(8), Shortening::Qr, &InnerConfig::default()).unwrap();
    let gv = postmultiply(&g, &res.v_acc).unwrap();
    let gram_out = dd_gram(&gv);
    for i in 0..8 {
        for j in i + 1..8 {
            let bound = 2.0 * default_tolerance(8) * gram_out.get(i, i).sqrt() * gram_out.get(j, j).sqrt();
            assert!(gram_out.get(i, j).abs() <= 4.0 * bound, "{i} {j}");
        }
    }
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = ColumnMatrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| ColumnMatrix::from_col_major(rows, cols, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn postmultiply_matches_oracle(a in matrix(24, 8), v in matrix(8, 8)) {
        let got = postmultiply(&a, &v).unwrap();
        let want = dd_matmul(&a, &v);
        let tol = 2f64.powi(1 + clg(8)) * EPS;
        for i in 0..24 {
            let rn = (0..8).map(|k| a.get(i, k).powi(2)).sum::<f64>().sqrt();
            for j in 0..8 {
                prop_assert!((got.get(i, j) - want.get(i, j)).abs() <= tol * rn * col_norm(&v, j));
            }
        }
    }

    #[test]
    fn gram_is_symmetric_and_exact_on_diagonal_scale(g in matrix(16, 4)) {
        let h = gram(&g).unwrap();
        prop_assert_eq!(h.clone(), h.transpose());
        let want = dd_gram(&g);
        for i in 0..4 {
            prop_assert!((h.get(i, i) - want.get(i, i)).abs() <= 2f64.powi(1 + clg(16)) * EPS * want.get(i, i));
        }
    }

    #[test]
    fn both_shortenings_reproduce_the_gram(g in matrix(32, 4)) {
        let gg = dd_gram(&g);
        prop_assume!((0..4).all(|i| gg.get(i, i) > 1e-3));
        let rq = qr_peeloff(&g).unwrap();
        prop_assert!(dd_gram(&rq).sub(&gg).frobenius_norm() <= 20.0 * 32.0 * EPS * gg.frobenius_norm());
        if let Ok(rc) = cholesky(&gram(&g).unwrap()) {
            prop_assert!(dd_gram(&rc).sub(&gg).frobenius_norm() <= 10.0 * 4.0 * EPS * gg.frobenius_norm() * 32.0);
        }
    }

    #[test]
    fn trig_inner_solve_is_orthogonal(g in matrix(16, 4)) {
        let gg = dd_gram(&g);
        prop_assume!((0..4).all(|i| gg.get(i, i) > 1e-2));
        let Ok(r) = cholesky(&gram(&g).unwrap()) else { return Ok(()); };
        let res = inner_jacobi(&r, &[0, 1, 2, 3], Signature::definite(4), &rrow(4), &InnerConfig::default()).unwrap();
        prop_assert!(j_orthogonality_defect(&res.v_acc, &[1.0; 4]) <= 50.0 * 4.0 * EPS);
    }
}
