//! Small dense and block-diagonal linear algebra.
//!
//! Everything here is sized for the regression setting: `p` columns (tens at
//! most), deletion sets of a few dozen rows, and correlation blocks of one
//! subject's observations. `n`-length objects are only ever touched through
//! block-diagonal products, so no `n × n` matrix is formed outside of tests.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Matrix<T>) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = rhs.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without forming the transpose.
    pub fn tr_matmul(&self, rhs: &Matrix<T>) -> Self {
        assert_eq!(self.rows, rhs.rows, "tr_matmul dimension mismatch");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = rhs.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out.row_mut(i).iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        out
    }

    /// Rows `idx` as a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Principal submatrix on `idx × idx`.
    pub fn principal(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |a, b| self[(idx[a], idx[b])])
    }

    pub fn sub(&self, rhs: &Matrix<T>) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `vᵀ · self · v` for square `self`.
    pub fn quad_form(&self, v: &[T]) -> T {
        dot(v, &self.mul_vec(v))
    }

    pub fn max_abs_diff(&self, rhs: &Matrix<T>) -> T {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Failure of a positive-definite factorization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotPositiveDefinite {
    /// First column whose pivot fell below the floor.
    pub column: usize,
    /// Reciprocal condition estimate at the point of failure.
    pub rcond: f64,
}

/// Cholesky factor of a symmetric positive-definite matrix, computed on the
/// unit-diagonal rescaling `D⁻¹ A D⁻¹` with `D = diag(A)^{1/2}` so that pivot
/// checks are invariant to column scaling.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    scale: Vec<T>,
    lower: Matrix<T>,
    rcond: T,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self, NotPositiveDefinite> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky of non-square matrix");
        let floor = T::rcond_floor();
        let mut scale = Vec::with_capacity(n);
        for i in 0..n {
            let d = a[(i, i)];
            if !(d > T::zero()) || !d.is_finite() {
                return Err(NotPositiveDefinite {
                    column: i,
                    rcond: 0.0,
                });
            }
            scale.push(d.sqrt());
        }
        let mut l = Matrix::zeros(n, n);
        let mut min_piv = T::one();
        let mut max_piv = T::zero();
        for j in 0..n {
            let mut d = a[(j, j)] / (scale[j] * scale[j]);
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            // Unit diagonal means the pivot itself is the fraction of column j
            // not explained by earlier columns.
            if !(d > floor) {
                let rc = if d > T::zero() { d.to_f64_lossy() } else { 0.0 };
                return Err(NotPositiveDefinite {
                    column: j,
                    rcond: rc,
                });
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            min_piv = min_piv.min(ljj);
            max_piv = max_piv.max(ljj);
            for i in j + 1..n {
                let mut s = a[(i, j)] / (scale[i] * scale[j]);
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        let rcond = if n == 0 {
            T::one()
        } else {
            (min_piv / max_piv).powi(2)
        };
        Ok(Cholesky {
            scale,
            lower: l,
            rcond,
        })
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Reciprocal condition estimate of the rescaled matrix.
    pub fn rcond(&self) -> T {
        self.rcond
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut y: Vec<T> = b.iter().zip(&self.scale).map(|(&bi, &s)| bi / s).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for (yi, &s) in y.iter_mut().zip(&self.scale) {
            *yi /= s;
        }
        y
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // Symmetrize away rounding asymmetry.
        for i in 0..n {
            for j in 0..i {
                let v = (inv[(i, j)] + inv[(j, i)]) / T::lit(2.0);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        let from_scale: T = self.scale.iter().map(|s| s.ln()).sum();
        let from_l: T = (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum();
        two * (from_scale + from_l)
    }
}

/// Block-diagonal symmetric matrix with contiguous blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiag<T> {
    blocks: Vec<Matrix<T>>,
    offsets: Vec<usize>,
    block_of: Vec<usize>,
}

impl<T: Real> BlockDiag<T> {
    pub fn new(blocks: Vec<Matrix<T>>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        let mut block_of = Vec::new();
        let mut acc = 0;
        for (b, m) in blocks.iter().enumerate() {
            assert_eq!(m.nrows(), m.ncols(), "non-square diagonal block");
            offsets.push(acc);
            acc += m.nrows();
            block_of.extend(std::iter::repeat_n(b, m.nrows()));
        }
        offsets.push(acc);
        BlockDiag {
            blocks,
            offsets,
            block_of,
        }
    }

    pub fn identity(sizes: impl IntoIterator<Item = usize>) -> Self {
        Self::new(sizes.into_iter().map(Matrix::identity).collect())
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn blocks(&self) -> &[Matrix<T>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &Matrix<T> {
        &self.blocks[b]
    }

    pub fn offset(&self, b: usize) -> usize {
        self.offsets[b]
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let b = self.block_of[i];
        if b != self.block_of[j] {
            return T::zero();
        }
        let o = self.offsets[b];
        self.blocks[b][(i - o, j - o)]
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.dim());
        let mut out = Vec::with_capacity(v.len());
        for (b, m) in self.blocks.iter().enumerate() {
            let o = self.offsets[b];
            out.extend(m.mul_vec(&v[o..o + m.nrows()]));
        }
        out
    }

    /// `self · x` for an `n × c` dense matrix.
    pub fn mul_mat(&self, x: &Matrix<T>) -> Matrix<T> {
        assert_eq!(x.nrows(), self.dim());
        let c = x.ncols();
        let mut out = Matrix::zeros(x.nrows(), c);
        for (b, m) in self.blocks.iter().enumerate() {
            let o = self.offsets[b];
            for i in 0..m.nrows() {
                for k in 0..m.ncols() {
                    let a = m[(i, k)];
                    if a == T::zero() {
                        continue;
                    }
                    axpy(a, x.row(o + k), out.row_mut(o + i));
                }
            }
        }
        out
    }

    /// Dense `idx × idx` principal submatrix; `idx` need not be sorted.
    pub fn principal(&self, idx: &[usize]) -> Matrix<T> {
        Matrix::from_fn(idx.len(), idx.len(), |a, b| self.get(idx[a], idx[b]))
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Blockwise product `self · rhs`; both must share the block layout.
    pub fn mul_block(&self, rhs: &BlockDiag<T>) -> BlockDiag<T> {
        assert_eq!(self.offsets, rhs.offsets, "block layouts differ");
        BlockDiag::new(
            self.blocks
                .iter()
                .zip(&rhs.blocks)
                .map(|(a, b)| a.matmul(b))
                .collect(),
        )
    }
}
