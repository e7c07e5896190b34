//! Small dense linear algebra: row-major matrices, LU with partial pivoting,
//! a cyclic Jacobi eigensolver for symmetric matrices, and the norm pairs
//! used to measure update vectors.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
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
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            crate::error::check_dim("matrix row", n_cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data,
        })
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
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| crate::scalar::dot(self.row(r), x))
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Convert element type, e.g. to evaluate an `f32` result in `f64`.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}

impl<T> AsRef<Matrix<T>> for Matrix<T> {
    fn as_ref(&self) -> &Matrix<T> {
        self
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// LU factorization with partial pivoting, `P A = L U` packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        crate::error::check_dim("lu factor (square)", a.rows(), a.cols())?;
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a
            .as_slice()
            .iter()
            .fold(T::zero(), |m, x| m.max(x.abs()))
            .max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|r| (r, lu[(r, k)].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= tiny {
                return Err(Error::Singular {
                    context: "lu factor",
                    rank: k,
                    dim: n,
                });
            }
            if p != k {
                for c in 0..n {
                    let tmp = lu[(k, c)];
                    lu[(k, c)] = lu[(p, c)];
                    lu[(p, c)] = tmp;
                }
                perm.swap(k, p);
            }
            let d = lu[(k, k)];
            for r in (k + 1)..n {
                let f = lu[(r, k)] / d;
                lu[(r, k)] = f;
                if f != T::zero() {
                    for c in (k + 1)..n {
                        lu[(r, c)] = lu[(r, c)] - f * lu[(k, c)];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s = s - self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.lu.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for c in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[c] = T::one();
            let col = self.solve(&e);
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        inv
    }

    pub fn determinant(&self) -> T {
        let n = self.lu.rows();
        let mut det = T::one();
        for i in 0..n {
            det = det * self.lu[(i, i)];
        }
        // parity of the permutation
        let mut seen = vec![false; n];
        let mut swaps = 0usize;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0usize;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            swaps += len - 1;
        }
        if swaps % 2 == 1 {
            -det
        } else {
            det
        }
    }
}

pub fn solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    crate::error::check_dim("solve rhs", a.rows(), b.len())?;
    Ok(Lu::factor(a)?.solve(b))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (ascending) and eigenvectors as matrix columns.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= T::epsilon() * T::epsilon() * diag.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
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
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Numerical rank and Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn symmetric_pinv<T: Scalar>(a: &Matrix<T>) -> (usize, Matrix<T>) {
    let n = a.rows();
    let (vals, vecs) = symmetric_eigen(a);
    let top = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let cut = top * T::lit(1e-12) * T::from_usize_lossy(n.max(1));
    let mut rank = 0;
    let mut pinv = Matrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() > cut && lam.abs() > T::zero() {
            rank += 1;
            let inv = T::one() / lam;
            for i in 0..n {
                for j in 0..n {
                    pinv[(i, j)] = pinv[(i, j)] + inv * vecs[(i, k)] * vecs[(j, k)];
                }
            }
        }
    }
    (rank, pinv)
}

/// Norm on the parameter space and its dual, used for the update budget
/// `||v|| <= V_max` and for the steepest-ascent direction in mean matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPair {
    /// Euclidean primal and dual.
    #[default]
    L2,
    /// Primal `L1`, dual `L∞`.
    L1Linf,
    /// Primal `L∞`, dual `L1`.
    LinfL1,
}

impl NormPair {
    pub fn norm<T: Scalar>(self, v: &[T]) -> T {
        match self {
            NormPair::L2 => l2(v),
            NormPair::L1Linf => l1(v),
            NormPair::LinfL1 => linf(v),
        }
    }

    pub fn dual_norm<T: Scalar>(self, v: &[T]) -> T {
        match self {
            NormPair::L2 => l2(v),
            NormPair::L1Linf => linf(v),
            NormPair::LinfL1 => l1(v),
        }
    }

    /// `argmax_{||u|| <= 1} <u, g>`. Ties are broken towards the
    /// lexicographically smallest choice: the lowest index for the `L1`
    /// ball and `+1` for zero coordinates of the `L∞` ball.
    pub fn steepest_unit<T: Scalar>(self, g: &[T]) -> Vec<T> {
        let d = g.len();
        match self {
            NormPair::L2 => {
                let n = l2(g);
                if n == T::zero() {
                    let mut u = vec![T::zero(); d];
                    if d > 0 {
                        u[0] = T::one();
                    }
                    u
                } else {
                    g.iter().map(|&x| x / n).collect()
                }
            }
            NormPair::L1Linf => {
                let mut best = 0;
                for i in 1..d {
                    if g[i].abs() > g[best].abs() {
                        best = i;
                    }
                }
                let mut u = vec![T::zero(); d];
                if d > 0 {
                    u[best] = if g[best] < T::zero() { -T::one() } else { T::one() };
                }
                u
            }
            NormPair::LinfL1 => g
                .iter()
                .map(|&x| if x < T::zero() { -T::one() } else { T::one() })
                .collect(),
        }
    }

    /// Euclidean projection onto `{v : ||v|| <= radius}`.
    pub fn project<T: Scalar>(self, v: &[T], radius: T) -> Vec<T> {
        match self {
            NormPair::L2 => {
                let n = l2(v);
                if n <= radius {
                    v.to_vec()
                } else {
                    v.iter().map(|&x| x * radius / n).collect()
                }
            }
            NormPair::LinfL1 => v.iter().map(|&x| x.max(-radius).min(radius)).collect(),
            NormPair::L1Linf => project_l1(v, radius),
        }
    }

    /// Radial rescaling onto the ball (not a Euclidean projection for L1/L∞).
    pub fn rescale_into<T: Scalar>(self, v: &[T], radius: T) -> Vec<T> {
        let n = self.norm(v);
        if n <= radius || n == T::zero() {
            v.to_vec()
        } else {
            v.iter().map(|&x| x * radius / n).collect()
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NormPair::L2 => "l2",
            NormPair::L1Linf => "l1linf",
            NormPair::LinfL1 => "linfl1",
        }
    }
}

impl std::str::FromStr for NormPair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(NormPair::L2),
            "l1linf" => Ok(NormPair::L1Linf),
            "linfl1" => Ok(NormPair::LinfL1),
            other => Err(crate::error::invalid("norm pair", other.to_string())),
        }
    }
}

pub fn l2<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub fn l1<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| x.abs()).sum()
}

pub fn linf<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Euclidean projection onto the L1 ball (sort-and-threshold).
fn project_l1<T: Scalar>(v: &[T], radius: T) -> Vec<T> {
    if l1(v) <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<T> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (i, &m) in mags.iter().enumerate() {
        cum = cum + m;
        let t = (cum - radius) / T::from_usize_lossy(i + 1);
        if m > t {
            theta = t;
        }
    }
    v.iter()
        .map(|&x| {
            let m = (x.abs() - theta).max(T::zero());
            if x < T::zero() {
                -m
            } else {
                m
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_and_inverts() {
        let a = Matrix::from_rows(&[vec![4.0f64, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 2.0, 5.0]])
            .unwrap();
        let x = solve(&a, &[1.0, 2.0, 3.0]).unwrap();
        let back = a.matvec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - e).abs() < 1e-14);
        }
        let inv = Lu::factor(&a).unwrap().inverse();
        assert!(a.matmul(&inv).max_abs_diff(&Matrix::identity(3)) < 1e-14);
        assert!((Lu::factor(&a).unwrap().determinant() - 47.0).abs() < 1e-12);
    }

    #[test]
    fn lu_reports_rank_of_singular_matrix() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            Lu::factor(&a),
            Err(Error::Singular { rank: 1, dim: 2, .. })
        ));
    }

    #[test]
    fn jacobi_eigen_reconstructs() {
        let a = Matrix::from_rows(&[vec![2.0, -1.0, 0.5], vec![-1.0, 3.0, 0.0], vec![0.5, 0.0, 1.0]])
            .unwrap();
        let (vals, vecs) = symmetric_eigen(&a);
        let diag = Matrix::from_fn(3, 3, |i, j| if i == j { vals[i] } else { 0.0 });
        let rebuilt = vecs.matmul(&diag).matmul(&vecs.transpose());
        assert!(rebuilt.max_abs_diff(&a) < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pinv_of_rank_one() {
        let a = Matrix::from_rows(&[vec![1.0f64, 1.0], vec![1.0, 1.0]]).unwrap();
        let (rank, p) = symmetric_pinv(&a);
        assert_eq!(rank, 1);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn norm_pairs_are_dual() {
        let g = [3.0f64, -4.0, 0.0];
        for pair in [NormPair::L2, NormPair::L1Linf, NormPair::LinfL1] {
            let u = pair.steepest_unit(&g);
            assert!((pair.norm(&u) - 1.0).abs() < 1e-15);
            let achieved: f64 = u.iter().zip(&g).map(|(a, b)| a * b).sum();
            assert!((achieved - pair.dual_norm(&g)).abs() < 1e-14);
        }
        assert_eq!(NormPair::LinfL1.steepest_unit(&g), vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn projections_land_in_ball() {
        let v = [3.0, -1.0, 0.5];
        for pair in [NormPair::L2, NormPair::L1Linf, NormPair::LinfL1] {
            let p = pair.project(&v, 1.0);
            assert!(pair.norm(&p) <= 1.0 + 1e-12);
        }
        assert_eq!(NormPair::L1Linf.project(&[3.0, -1.0], 1.0), vec![1.0, 0.0]);
    }
}
