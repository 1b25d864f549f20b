//! Dense row-major matrices and rank-revealing least squares.
//!
//! [`LeastSquares`] factors a design matrix with Householder QR and column
//! pivoting. When the numerical rank is smaller than the column count, the
//! basic solution is projected onto the orthogonal complement of the null
//! space, which yields the minimum-norm least-squares solution.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::scalar::{dot, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows. `cols` is needed for the empty case.
    pub fn from_rows(rows: &[Vec<T>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
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

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ * y`
    pub fn tr_mul_vec(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    /// Horizontal concatenation; all blocks must share the row count.
    pub fn hstack(blocks: &[&Self]) -> Self {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for b in blocks {
                assert_eq!(b.rows, rows, "hstack row mismatch");
                data.extend_from_slice(b.row(i));
            }
        }
        Self { rows, cols, data }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Householder QR with column pivoting, `A P = Q R`.
#[derive(Debug, Clone)]
struct PivotedQr<T> {
    m: usize,
    n: usize,
    /// Column-major working copy: R in the upper triangle, reflectors below.
    work: Vec<T>,
    betas: Vec<T>,
    perm: Vec<usize>,
    rank: usize,
}

impl<T: Real> PivotedQr<T> {
    fn new(a: &Matrix<T>) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut work = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                work[j * m + i] = a[(i, j)];
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut betas = Vec::with_capacity(steps);
        let col_norm2 = |w: &[T], j: usize, from: usize| -> T { w[j * m + from..(j + 1) * m].iter().map(|&x| x * x).sum() };

        for k in 0..steps {
            // Largest remaining column norm; first index wins ties.
            let mut best = k;
            let mut best_norm = col_norm2(&work, k, k);
            for j in k + 1..n {
                let nj = col_norm2(&work, j, k);
                if nj > best_norm {
                    best = j;
                    best_norm = nj;
                }
            }
            if best != k {
                for i in 0..m {
                    work.swap(k * m + i, best * m + i);
                }
                perm.swap(k, best);
            }

            let norm = best_norm.sqrt();
            if norm == T::zero() {
                betas.push(T::zero());
                continue;
            }
            let x0 = work[k * m + k];
            let alpha = if x0 >= T::zero() { -norm } else { norm };
            // v = x - alpha e1, scaled so v[0] = 1.
            let v0 = x0 - alpha;
            for i in k + 1..m {
                work[k * m + i] /= v0;
            }
            let vnorm2: T = T::one() + work[k * m + k + 1..(k + 1) * m].iter().map(|&x| x * x).sum::<T>();
            let beta = T::two() / vnorm2;
            work[k * m + k] = alpha;
            for j in k + 1..n {
                let mut w = work[j * m + k];
                for i in k + 1..m {
                    w += work[k * m + i] * work[j * m + i];
                }
                w *= beta;
                work[j * m + k] -= w;
                for i in k + 1..m {
                    let vi = work[k * m + i];
                    work[j * m + i] -= w * vi;
                }
            }
            betas.push(beta);
        }

        let r00 = if steps > 0 { work[0].abs() } else { T::zero() };
        let tol = T::epsilon() * T::from_count(m.max(n)) * r00;
        let rank = (0..steps).take_while(|&k| work[k * m + k].abs() > tol && r00 > T::zero()).count();
        Self { m, n, work, betas, perm, rank }
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> T {
        self.work[j * self.m + i]
    }

    /// Overwrites `b` with `Qᵀ b`.
    fn apply_qt(&self, b: &mut [T]) {
        let m = self.m;
        for (k, &beta) in self.betas.iter().enumerate() {
            if beta == T::zero() {
                continue;
            }
            let mut w = b[k];
            for i in k + 1..m {
                w += self.work[k * m + i] * b[i];
            }
            w *= beta;
            b[k] -= w;
            for i in k + 1..m {
                b[i] -= w * self.work[k * m + i];
            }
        }
    }

    fn apply_q(&self, b: &mut [T]) {
        let m = self.m;
        for (k, &beta) in self.betas.iter().enumerate().rev() {
            if beta == T::zero() {
                continue;
            }
            let mut w = b[k];
            for i in k + 1..m {
                w += self.work[k * m + i] * b[i];
            }
            w *= beta;
            b[k] -= w;
            for i in k + 1..m {
                b[i] -= w * self.work[k * m + i];
            }
        }
    }

    /// Solves `R11 x = y` for the leading `rank` block.
    fn back_substitute(&self, y: &[T]) -> Vec<T> {
        let r = self.rank;
        let mut x = vec![T::zero(); r];
        for i in (0..r).rev() {
            let mut s = y[i];
            for j in i + 1..r {
                s -= self.r(i, j) * x[j];
            }
            x[i] = s / self.r(i, i);
        }
        x
    }
}

/// Minimum-norm least-squares solver for a fixed design.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    qr: PivotedQr<T>,
    /// Null-space basis in pivoted coordinates, `n × (n - rank)`, when rank deficient.
    null_basis: Option<Matrix<T>>,
    /// Cholesky factor of `NᵀN`.
    null_chol: Option<Matrix<T>>,
}

impl<T: Real> LeastSquares<T> {
    pub fn new(design: &Matrix<T>) -> Self {
        let qr = PivotedQr::new(design);
        let (n, r) = (qr.n, qr.rank);
        let (null_basis, null_chol) = if r < n {
            // N = [-R11⁻¹ R12; I]
            let d = n - r;
            let mut basis = Matrix::zeros(n, d);
            for c in 0..d {
                let col = r + c;
                let rhs: Vec<T> = (0..r).map(|i| qr.r(i, col)).collect();
                let sol = qr.back_substitute(&rhs);
                for i in 0..r {
                    basis[(i, c)] = -sol[i];
                }
                basis[(col, c)] = T::one();
            }
            let gram = basis.transpose().matmul(&basis);
            let chol = cholesky(&gram).expect("null-space Gram matrix is positive definite");
            (Some(basis), Some(chol))
        } else {
            (None, None)
        };
        Self { qr, null_basis, null_chol }
    }

    pub fn rank(&self) -> usize {
        self.qr.rank
    }

    pub fn nrows(&self) -> usize {
        self.qr.m
    }

    pub fn ncols(&self) -> usize {
        self.qr.n
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        assert_eq!(rhs.len(), self.qr.m, "rhs length mismatch");
        let (n, r) = (self.qr.n, self.qr.rank);
        let mut y = rhs.to_vec();
        self.qr.apply_qt(&mut y);
        let mut xp = self.qr.back_substitute(&y[..r.min(y.len())]);
        xp.resize(n, T::zero());
        if let (Some(basis), Some(chol)) = (&self.null_basis, &self.null_chol) {
            let nt_x = basis.tr_mul_vec(&xp);
            let coef = cholesky_solve(chol, &nt_x);
            let corr = basis.mul_vec(&coef);
            for (x, c) in xp.iter_mut().zip(corr) {
                *x -= c;
            }
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.qr.perm.iter().enumerate() {
            x[p] = xp[k];
        }
        x
    }

    /// `b` minus its projection on the column space, formed as `Q₂Q₂ᵀb` so the
    /// result is orthogonal to the design to working precision.
    pub fn residual(&self, rhs: &[T]) -> Vec<T> {
        assert_eq!(rhs.len(), self.qr.m, "rhs length mismatch");
        let mut y = rhs.to_vec();
        self.qr.apply_qt(&mut y);
        for v in y.iter_mut().take(self.qr.rank) {
            *v = T::zero();
        }
        self.qr.apply_q(&mut y);
        y
    }

    /// Solves for every column of `rhs`; returns an `ncols × rhs.cols()` matrix.
    pub fn solve_many(&self, rhs: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(self.qr.n, rhs.cols());
        for j in 0..rhs.cols() {
            let x = self.solve(&rhs.column(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

pub fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Weighted least squares: minimizes `Σ w_i (y_i - x_iᵀβ)²` with minimum-norm `β`.
pub fn weighted_least_squares<T: Real>(design: &Matrix<T>, y: &[T], weights: &[T]) -> (Vec<T>, usize) {
    let sw: Vec<T> = weights.iter().map(|w| w.sqrt()).collect();
    let scaled = Matrix::from_fn(design.rows(), design.cols(), |i, j| design[(i, j)] * sw[i]);
    let ys: Vec<T> = y.iter().zip(&sw).map(|(&a, &b)| a * b).collect();
    let ls = LeastSquares::new(&scaled);
    (ls.solve(&ys), ls.rank())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn full_rank_matches_normal_equations() {
        // y = 1 + 2x exactly
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]], 2);
        let ls = LeastSquares::new(&x);
        assert_eq!(ls.rank(), 2);
        assert_close(&ls.solve(&[1.0, 3.0, 5.0, 7.0]), &[1.0, 2.0], 1e-12);
    }

    #[test]
    fn three_point_fit() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]], 2);
        let beta = LeastSquares::new(&x).solve(&[0.0, 1.0, 3.0]);
        // normal equations: slope Sxy/Sxx = 3/2, intercept 4/3 - 3/2
        assert_close(&beta, &[-1.0 / 6.0, 1.5], 1e-12);
    }

    #[test]
    fn duplicated_column_gives_minimum_norm() {
        // columns 2 and 3 identical: any split b+c = 2 fits, min-norm splits evenly
        let x = Matrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 2.0], vec![1.0, 3.0, 3.0]], 3);
        let ls = LeastSquares::new(&x);
        assert_eq!(ls.rank(), 2);
        let beta = ls.solve(&[2.0, 4.0, 6.0]);
        assert_close(&beta, &[0.0, 1.0, 1.0], 1e-10);
    }

    #[test]
    fn underdetermined_minimum_norm() {
        // one equation x1 + x2 = 2 -> (1, 1)
        let x = Matrix::from_rows(&[vec![1.0, 1.0]], 2);
        let ls = LeastSquares::new(&x);
        assert_eq!(ls.rank(), 1);
        assert_close(&ls.solve(&[2.0]), &[1.0, 1.0], 1e-12);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let x: Matrix<f64> = Matrix::zeros(3, 2);
        let ls = LeastSquares::new(&x);
        assert_eq!(ls.rank(), 0);
        assert_close(&ls.solve(&[1.0, 2.0, 3.0]), &[0.0, 0.0], 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let x: Matrix<f32> = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]], 2);
        let beta = LeastSquares::new(&x).solve(&[0.0, 1.0, 3.0]);
        assert!((beta[0] + 1.0 / 6.0).abs() < 1e-5 && (beta[1] - 1.5).abs() < 1e-5);
    }

    #[test]
    fn weighted_fit_ignores_zero_weight_rows() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]], 1);
        let (beta, rank) = weighted_least_squares(&x, &[1.0, 3.0, 100.0], &[1.0, 1.0, 0.0]);
        assert_eq!(rank, 1);
        assert_close(&beta, &[2.0], 1e-12);
    }
}
