//! Small fixed-capacity vectors and matrices.
//!
//! Everything the lab manipulates is at most 4×4 (the doubled 2n×2n block for
//! n ≤ 2), so storage is inline and `Copy`; no allocation happens in the hot
//! evaluation paths of the scheme and the scans.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::scalar::Scalar;

pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, PartialEq)]
pub struct Vector<S> {
    dim: usize,
    data: [S; MAX_DIM],
}

impl<S: Scalar> Vector<S> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "dimension {dim} exceeds {MAX_DIM}");
        Self {
            dim,
            data: [S::zero(); MAX_DIM],
        }
    }

    pub fn from_slice(v: &[S]) -> Self {
        let mut out = Self::zeros(v.len());
        out.data[..v.len()].copy_from_slice(v);
        out
    }

    pub fn filled(dim: usize, value: S) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.data[i] = value;
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.data[..self.dim]
    }

    pub fn dot(&self, other: &Self) -> S {
        debug_assert_eq!(self.dim, other.dim);
        (0..self.dim).map(|i| self.data[i] * other.data[i]).sum()
    }

    pub fn norm_sq(&self) -> S {
        self.dot(self)
    }

    pub fn norm(&self) -> S {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: S) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            out.data[i] *= s;
        }
        out
    }

    pub fn max_abs(&self) -> S {
        self.as_slice()
            .iter()
            .fold(S::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.as_slice().iter().map(|v| v.as_f64()).collect()
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.dim + other.dim);
        out.data[..self.dim].copy_from_slice(self.as_slice());
        out.data[self.dim..self.dim + other.dim].copy_from_slice(other.as_slice());
        out
    }
}

impl<S: Scalar> Index<usize> for Vector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        debug_assert!(i < self.dim);
        &self.data[i]
    }
}

impl<S: Scalar> IndexMut<usize> for Vector<S> {
    fn index_mut(&mut self, i: usize) -> &mut S {
        debug_assert!(i < self.dim);
        &mut self.data[i]
    }
}

impl<S: Scalar> Add for Vector<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for i in 0..self.dim {
            out.data[i] += rhs.data[i];
        }
        out
    }
}

impl<S: Scalar> Sub for Vector<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for i in 0..self.dim {
            out.data[i] -= rhs.data[i];
        }
        out
    }
}

impl<S: Scalar> Neg for Vector<S> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-S::one())
    }
}

impl<S: fmt::Debug> fmt::Debug for Vector<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.data[..self.dim]).finish()
    }
}

impl<S: Serialize> Serialize for Vector<S> {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> Result<Z::Ok, Z::Error> {
        let mut seq = serializer.serialize_seq(Some(self.dim))?;
        for v in &self.data[..self.dim] {
            seq.serialize_element(v)?;
        }
        seq.end()
    }
}

/// Square matrix of dimension ≤ 4, row-major.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat<S> {
    dim: usize,
    data: [[S; MAX_DIM]; MAX_DIM],
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "dimension {dim} exceeds {MAX_DIM}");
        Self {
            dim,
            data: [[S::zero(); MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, S::one())
    }

    pub fn scalar(dim: usize, s: S) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i][i] = s;
        }
        m
    }

    pub fn from_rows(rows: &[&[S]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i][..n].copy_from_slice(row);
        }
        m
    }

    pub fn diag(values: &[S]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i][i] = *v;
        }
        m
    }

    pub fn outer(a: &Vector<S>, b: &Vector<S>) -> Self {
        let mut m = Self::zeros(a.dim());
        for i in 0..a.dim() {
            for j in 0..b.dim() {
                m.data[i][j] = a[i] * b[j];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i][j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[i][j] = self.data[j][i];
            }
        }
        m
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetrize(&self) -> Self {
        let mut m = *self;
        let h = S::half();
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[i][j] = (self.data[i][j] + self.data[j][i]) * h;
            }
        }
        m
    }

    pub fn asymmetry(&self) -> S {
        let mut worst = S::zero();
        for i in 0..self.dim {
            for j in 0..i {
                let d = (self.data[i][j] - self.data[j][i]).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn trace(&self) -> S {
        (0..self.dim).map(|i| self.data[i][i]).sum()
    }

    pub fn scale(&self, s: S) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[i][j] *= s;
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &Vector<S>) -> Vector<S> {
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out[i] = (0..self.dim).map(|j| self.data[i][j] * v[j]).sum();
        }
        out
    }

    /// `⟨A v, v⟩`.
    pub fn quad_form(&self, v: &Vector<S>) -> S {
        self.mul_vec(v).dot(v)
    }

    pub fn frobenius(&self) -> S {
        let mut s = S::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.data[i][j] * self.data[i][j];
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> S {
        let mut worst = S::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if self.data[i][j].abs() > worst {
                    worst = self.data[i][j].abs();
                }
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.data[i][j].is_finite()))
    }

    /// `[[A, 0], [0, B]]`.
    pub fn block_diag(a: &Self, b: &Self) -> Self {
        let n = a.dim;
        let m = b.dim;
        let mut out = Self::zeros(n + m);
        for i in 0..n {
            for j in 0..n {
                out.data[i][j] = a.data[i][j];
            }
        }
        for i in 0..m {
            for j in 0..m {
                out.data[n + i][n + j] = b.data[i][j];
            }
        }
        out
    }

    /// `[[A, B], [C, D]]` for equally sized square blocks.
    pub fn blocks(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let n = a.dim;
        let mut out = Self::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                out.data[i][j] = a.data[i][j];
                out.data[i][n + j] = b.data[i][j];
                out.data[n + i][j] = c.data[i][j];
                out.data[n + i][n + j] = d.data[i][j];
            }
        }
        out
    }

    /// Eigenvalues of the symmetric part, ascending (cyclic Jacobi).
    pub fn sym_eigenvalues(&self) -> Vector<S> {
        let (vals, _) = self.sym_eigen();
        vals
    }

    /// Eigen-decomposition of the symmetric part: ascending eigenvalues and
    /// the matrix whose columns are the matching eigenvectors.
    pub fn sym_eigen(&self) -> (Vector<S>, Self) {
        let n = self.dim;
        let mut a = self.symmetrize();
        let mut v = Self::identity(n);
        let scale = a.max_abs();
        if scale == S::zero() || n == 1 {
            let vals = Vector::from_slice(&(0..n).map(|i| a.data[i][i]).collect::<Vec<_>>());
            return (vals, v);
        }
        let eps = S::epsilon();
        for _sweep in 0..64 {
            let mut off = S::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.data[i][j] * a.data[i][j];
                }
            }
            if off.sqrt() <= eps * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.data[p][q];
                    if apq.abs() <= S::min_positive_value() {
                        continue;
                    }
                    let theta = (a.data[q][q] - a.data[p][p]) / (S::two() * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                    let c = S::one() / (t * t + S::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.data[k][p];
                        let akq = a.data[k][q];
                        a.data[k][p] = c * akp - s * akq;
                        a.data[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a.data[p][k];
                        let aqk = a.data[q][k];
                        a.data[p][k] = c * apk - s * aqk;
                        a.data[q][k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v.data[k][p];
                        let vkq = v.data[k][q];
                        v.data[k][p] = c * vkp - s * vkq;
                        v.data[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            a.data[i][i]
                .partial_cmp(&a.data[j][j])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut vals = Vector::zeros(n);
        let mut vecs = Self::zeros(n);
        for (dst, &src) in order.iter().enumerate() {
            vals[dst] = a.data[src][src];
            for k in 0..n {
                vecs.data[k][dst] = v.data[k][src];
            }
        }
        (vals, vecs)
    }

    pub fn min_eigenvalue(&self) -> S {
        self.sym_eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> S {
        let e = self.sym_eigenvalues();
        e[e.dim() - 1]
    }

    /// Spectral norm of the symmetric part.
    pub fn spectral_norm(&self) -> S {
        self.sym_eigenvalues().max_abs()
    }

    /// Rebuild `V diag(f(λ)) Vᵀ` from the symmetric eigen-decomposition.
    pub fn map_eigenvalues(&self, f: impl Fn(S) -> S) -> Self {
        let (vals, vecs) = self.sym_eigen();
        let n = self.dim;
        let mut out = Self::zeros(n);
        for k in 0..n {
            let lam = f(vals[k]);
            for i in 0..n {
                for j in 0..n {
                    out.data[i][j] += lam * vecs.data[i][k] * vecs.data[j][k];
                }
            }
        }
        out
    }
}

impl<S: Scalar> Add for Mat<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut m = self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[i][j] += rhs.data[i][j];
            }
        }
        m
    }
}

impl<S: Scalar> Sub for Mat<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut m = self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.data[i][j] -= rhs.data[i][j];
            }
        }
        m
    }
}

impl<S: Scalar> Mul for Mat<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i][j] = (0..n).map(|k| self.data[i][k] * rhs.data[k][j]).sum();
            }
        }
        m
    }
}

impl<S: Scalar> Neg for Mat<S> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-S::one())
    }
}

impl<S: fmt::Debug> fmt::Debug for Mat<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[S]> = (0..self.dim).map(|i| &self.data[i][..self.dim]).collect();
        f.debug_list().entries(rows).finish()
    }
}

impl<S: Serialize> Serialize for Mat<S> {
    fn serialize<Z: Serializer>(&self, serializer: Z) -> Result<Z::Ok, Z::Error> {
        let mut seq = serializer.serialize_seq(Some(self.dim))?;
        for i in 0..self.dim {
            seq.serialize_element(&self.data[i][..self.dim])?;
        }
        seq.end()
    }
}

/// Solves the small dense system `A x = b` by Gaussian elimination with
/// partial pivoting. Returns `None` when the system is numerically singular.
pub fn solve_dense<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(S::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
    if scale == S::zero() {
        return None;
    }
    let tiny = scale * S::epsilon() * S::lit(64.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= tiny {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            if factor == S::zero() {
                continue;
            }
            let pivot = a[col].clone();
            for (dst, &v) in a[row].iter_mut().zip(&pivot).take(n).skip(col) {
                *dst -= factor * v;
            }
            let bc = b[col];
            b[row] -= factor * bc;
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let s: S = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Least squares via the normal equations; rows are feature vectors.
pub fn least_squares<S: Scalar>(rows: &[Vec<S>], rhs: &[S]) -> Option<Vec<S>> {
    let m = rows.first()?.len();
    let mut ata = vec![vec![S::zero(); m]; m];
    let mut atb = vec![S::zero(); m];
    for (row, &y) in rows.iter().zip(rhs) {
        for i in 0..m {
            atb[i] += row[i] * y;
            for j in 0..m {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    solve_dense(ata, atb)
}
