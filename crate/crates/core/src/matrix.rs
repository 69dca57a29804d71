//! Dense column-major matrices and the diagonal sign matrix `J`.

use std::fmt;

/// Dense real matrix stored column by column, leading dimension = `rows`.
#[derive(Clone, PartialEq)]
pub struct ColumnMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColumnMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "column-major buffer has wrong length");
        Self { rows, cols, data }
    }

    /// Builds from nested rows, convenient for small literal fixtures.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    /// Two distinct columns borrowed mutably at once.
    pub fn col_pair_mut(&mut self, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        assert!(a != b, "column pair must be distinct");
        let r = self.rows;
        if a < b {
            let (lo, hi) = self.data.split_at_mut(b * r);
            (&mut lo[a * r..(a + 1) * r], &mut hi[..r])
        } else {
            let (lo, hi) = self.data.split_at_mut(a * r);
            (&mut hi[..r], &mut lo[b * r..(b + 1) * r])
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            let (x, y) = self.col_pair_mut(a, b);
            x.swap_with_slice(y);
        }
    }

    /// Contiguous copy of columns `start..start + count`.
    pub fn column_block(&self, start: usize, count: usize) -> ColumnMatrix {
        let r = self.rows;
        Self::from_col_major(r, count, self.data[start * r..(start + count) * r].to_vec())
    }

    pub fn set_column_block(&mut self, start: usize, block: &ColumnMatrix) {
        assert_eq!(block.rows, self.rows);
        let r = self.rows;
        self.data[start * r..(start + block.cols) * r].copy_from_slice(&block.data);
    }

    /// Concatenates two matrices with equal row counts side by side.
    pub fn hcat(a: &ColumnMatrix, b: &ColumnMatrix) -> ColumnMatrix {
        assert_eq!(a.rows, b.rows);
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Self::from_col_major(a.rows, a.cols + b.cols, data)
    }

    pub fn transpose(&self) -> ColumnMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Plain product, used for residuals and fixture construction.
    pub fn matmul(&self, other: &ColumnMatrix) -> ColumnMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = ColumnMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in oc.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let ac = &self.data[k * self.rows..(k + 1) * self.rows];
                for (d, &a) in dst.iter_mut().zip(ac) {
                    *d = a.mul_add(b, *d);
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &ColumnMatrix) -> ColumnMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self::from_col_major(self.rows, self.cols, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// True when every entry strictly below the diagonal is zero.
    pub fn is_upper_triangular(&self) -> bool {
        (0..self.cols).all(|j| self.col(j)[(j + 1).min(self.rows)..].iter().all(|&v| v == 0.0))
    }
}

impl fmt::Debug for ColumnMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ColumnMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(12) {
            write!(f, " ")?;
            for j in 0..self.cols.min(12) {
                write!(f, " {:>12.5e}", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// `J = diag(I_{n_plus}, -I_{n - n_plus})`, kept partitioned.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    n: usize,
    n_plus: usize,
}

impl Signature {
    /// Returns `None` when `n_plus > n`.
    pub fn new(n: usize, n_plus: usize) -> Option<Self> {
        (n_plus <= n).then_some(Self { n, n_plus })
    }

    pub fn definite(n: usize) -> Self {
        Self { n, n_plus: n }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    #[inline]
    pub fn is_definite(&self) -> bool {
        self.n_plus == self.n
    }

    /// Sign of the 0-based index `i`.
    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        if i < self.n_plus {
            1.0
        } else {
            -1.0
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.sign(i)).collect()
    }
}
