//! Small dense row-major matrices.
//!
//! Everything in this crate works on matrices of dimension at most a few
//! tens, so a plain `Vec`-backed type with naive kernels is all we need.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::scalar::Real;

#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
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
        Self { rows, cols, data }
    }

    /// Builds a matrix from row vectors. Returns `None` on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return None;
        }
        Some(Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(
            T::zero(),
            |acc, &x| if x.abs() > acc { x.abs() } else { acc },
        )
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).fold(T::zero(), |acc, i| acc + self[(i, j)].abs()))
            .fold(T::zero(), T::max)
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).fold(T::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "dimension mismatch in mul_vec");
        (0..self.rows)
            .map(|i| {
                dot2(
                    self.data[i * self.cols..(i + 1) * self.cols]
                        .iter()
                        .copied()
                        .zip(v.iter().copied()),
                )
            })
            .collect()
    }

    /// Product with compensated dot products, so entries that cancel to
    /// near zero come out accurate relative to themselves rather than to
    /// the size of the terms.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in matmul");
        let n = self.cols;
        Self::from_fn(self.rows, rhs.cols, |i, j| {
            dot2((0..n).map(|k| (self.data[i * n + k], rhs.data[k * rhs.cols + j])))
        })
    }

    /// Max-norm distance to another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T: Real> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: Self) -> Mat<T> {
        self.matmul(rhs)
    }
}

impl<T: Real> Add for &Mat<T> {
    type Output = Mat<T>;
    fn add(self, rhs: Self) -> Mat<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }
}

impl<T: Real> Sub for &Mat<T> {
    type Output = Mat<T>;
    fn sub(self, rhs: Self) -> Mat<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }
}

impl<T: Real> Neg for &Mat<T> {
    type Output = Mat<T>;
    fn neg(self) -> Mat<T> {
        self.map(|x| -x)
    }
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:?} ", self.data[i * self.cols + j])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
///
/// The argument is scaled until its 1-norm is at most 1/2, the series is
/// summed until terms drop below machine precision, and the result is
/// squared back up.
pub fn expm<T: Real>(a: &Mat<T>) -> Mat<T> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = a.norm_1();
    let mut squarings = 0u32;
    let mut scaled = a.clone();
    let half = T::half();
    let mut s = norm;
    while s > half {
        s = s * half;
        squarings += 1;
    }
    if squarings > 0 {
        scaled = a.scale(T::powi(half, squarings as i32));
    }

    let mut result = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..64 {
        term = (&term * &scaled).scale(T::one() / T::lit(k as f64));
        result = &result + &term;
        if term.max_abs() <= T::epsilon() * result.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns of the second matrix.
pub fn symmetric_eigen<T: Real>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    assert!(a.is_square());
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + m[(i, j)] * m[(i, j)];
            }
        }
        let scale = m.max_abs().max(T::min_positive_value());
        if off.sqrt() <= T::epsilon() * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::two() * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(i, i)]
            .partial_cmp(&m[(j, j)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Least-squares friendly solve of a small symmetric positive semidefinite
/// system. Directions whose pivot is negligible are left at zero.
/// Dot product in twice the working precision (error-free transformations
/// for each product and sum), rounded once at the end.
pub(crate) fn dot2<T: Real>(pairs: impl Iterator<Item = (T, T)>) -> T {
    let mut p = T::zero();
    let mut s = T::zero();
    for (a, b) in pairs {
        let h = a * b;
        let r = a.mul_add(b, -h);
        let t = p + h;
        let z = t - p;
        let q = (p - (t - z)) + (h - z);
        p = t;
        s = s + (q + r);
    }
    p + s
}

pub(crate) fn solve_psd<T: Real>(g: &Mat<T>, h: &[T]) -> Vec<T> {
    let n = h.len();
    let mut a = g.clone();
    let mut b = h.to_vec();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(T::zero(), T::max);
    let cut = scale * T::lit(1e-13);
    let mut x = vec![T::zero(); n];
    let mut used = vec![false; n];
    for k in 0..n {
        if !(a[(k, k)] > cut) {
            continue;
        }
        used[k] = true;
        for i in (k + 1)..n {
            let f = a[(i, k)] / a[(k, k)];
            for c in k..n {
                let v = a[(k, c)];
                a[(i, c)] = a[(i, c)] - f * v;
            }
            b[i] = b[i] - f * b[k];
        }
    }
    for k in (0..n).rev() {
        if !used[k] {
            continue;
        }
        let mut acc = b[k];
        for c in (k + 1)..n {
            acc = acc - a[(k, c)] * x[c];
        }
        x[k] = acc / a[(k, k)];
    }
    x
}

pub(crate) fn det2<T: Real>(m: &Mat<T>) -> T {
    debug_assert!(m.nrows() == 2 && m.ncols() == 2);
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Inverse of a 2x2 matrix, `None` when singular.
pub(crate) fn inv2<T: Real>(m: &Mat<T>) -> Option<Mat<T>> {
    let d = det2(m);
    if d == T::zero() || !d.is_finite() {
        return None;
    }
    Some(
        Mat::from_rows(&[
            vec![m[(1, 1)] / d, -m[(0, 1)] / d],
            vec![-m[(1, 0)] / d, m[(0, 0)] / d],
        ])
        .unwrap(),
    )
}

/// Singular values of a 2x2 matrix, largest first.
pub(crate) fn singular_values2<T: Real>(m: &Mat<T>) -> (T, T) {
    let e = (m[(0, 0)] + m[(1, 1)]) * T::half();
    let f = (m[(0, 0)] - m[(1, 1)]) * T::half();
    let g = (m[(1, 0)] + m[(0, 1)]) * T::half();
    let h = (m[(1, 0)] - m[(0, 1)]) * T::half();
    let q = e.hypot(h);
    let r = f.hypot(g);
    (q + r, (q - r).abs())
}
