//! Small dense linear algebra: LU with partial pivoting and a 1-norm
//! condition estimate, implicit-shift QL for symmetric tridiagonal
//! matrices, and cyclic Jacobi for dense symmetric and Hermitian matrices.
//!
//! Everything here is sized for desk-scale problems (dimension in the
//! hundreds at most for tridiagonal problems, a few dozen for dense ones).

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.concat() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matmul");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// LU factorization `P A = L U` with partial (row) pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    // unit-lower L below the diagonal, U on and above
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
    norm1: f64,
}

impl Lu {
    /// Factor a square matrix. Fails only on an exactly zero pivot;
    /// near-singularity is reported through [`Lu::condition_estimate`].
    pub fn factor(a: &Matrix, context: &'static str) -> Result<Self> {
        assert!(a.is_square(), "LU of a non-square matrix");
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { context });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, sign, norm1: a.norm1() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn det(&self) -> f64 {
        (0..self.n).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solve `A^t x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        // A^t = U^t L^t P, so solve U^t z = b, L^t y = z, x = P^t y.
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * z[j];
            }
            z[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)] * z[j];
            }
            z[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    /// 1-norm condition number estimate `||A||_1 * est(||A^-1||_1)` using
    /// Hager's power iteration on the sign vector.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0), |(bj, bv), (j, v)| if v.abs() > bv { (j, v.abs()) } else { (bj, bv) });
            if zmax <= dot(&z, &x) {
                break;
            }
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        if !estimate.is_finite() {
            return f64::INFINITY;
        }
        self.norm1 * estimate
    }
}

/// Determinant of a square matrix (zero if a pivot vanishes exactly).
pub fn det(a: &Matrix) -> f64 {
    Lu::factor(a, "determinant").map_or(0.0, |lu| lu.det())
}

/// Eigenvalues and first eigenvector components of a symmetric tridiagonal
/// matrix with diagonal `diag` and off-diagonal `off` (`off[i]` couples rows
/// `i` and `i + 1`), by QL iteration with implicit Wilkinson-type shifts.
///
/// Returns `(eigenvalues, first_components)` sorted by eigenvalue.
pub fn tridiagonal_ql(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    const TOL: f64 = 1e-14;
    const MAX_ITER: usize = 60;

    let n = diag.len();
    assert!(off.len() + 1 >= n, "off-diagonal too short");
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z = vec![0.0; n];
    if n > 0 {
        z[0] = 1.0;
    }

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= TOL * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_ITER {
                return Err(Error::EigenUnconverged { iterations: MAX_ITER });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok((order.iter().map(|&i| d[i]).collect(), order.iter().map(|&i| z[i]).collect()))
}

/// Cyclic Jacobi eigen-decomposition of a dense symmetric matrix.
///
/// Returns eigenvalues (unsorted, matching columns) and the orthogonal
/// matrix whose columns are the eigenvectors.
pub fn symmetric_jacobi(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    const MAX_SWEEPS: usize = 100;
    assert!(a.is_square());
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            let values = (0..n).map(|i| m[(i, i)]).collect();
            return Ok((values, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
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
    Err(Error::EigenUnconverged { iterations: MAX_SWEEPS })
}

/// Eigen-decomposition of a Hermitian matrix `re + i im`.
///
/// The matrix is embedded as the real symmetric `[[re, -im], [im, re]]`,
/// whose spectrum is that of the Hermitian matrix with every eigenvalue
/// doubled. Eigenvalues come back ascending; eigenvector `k` is returned as
/// `(re_k, im_k)` columns of the two output matrices.
pub fn hermitian_eigen(re: &Matrix, im: &Matrix) -> Result<(Vec<f64>, Matrix, Matrix)> {
    let n = re.rows();
    let big = Matrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => re[(i, j)],
        (true, false) => -im[(i, j - n)],
        (false, true) => im[(i - n, j)],
        (false, false) => re[(i - n, j - n)],
    });
    let (vals, vecs) = symmetric_jacobi(&big)?;
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));

    // Each Hermitian eigenvalue appears twice; walk the sorted pairs and keep
    // one complex vector per eigenvalue, Gram-Schmidt against those kept.
    let mut values = Vec::with_capacity(n);
    let mut kept: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(n);
    for pair in order.chunks(2) {
        values.push(0.5 * pair.iter().map(|&k| vals[k]).sum::<f64>());
        let mut accepted = false;
        for &k in pair {
            let mut u: Vec<f64> = (0..n).map(|i| vecs[(i, k)]).collect();
            let mut w: Vec<f64> = (0..n).map(|i| vecs[(i + n, k)]).collect();
            for (ur, ui) in &kept {
                // <kept, z> with z = u + i w
                let pr: f64 = (0..n).map(|i| ur[i] * u[i] + ui[i] * w[i]).sum();
                let pi: f64 = (0..n).map(|i| ur[i] * w[i] - ui[i] * u[i]).sum();
                for i in 0..n {
                    u[i] -= pr * ur[i] - pi * ui[i];
                    w[i] -= pr * ui[i] + pi * ur[i];
                }
            }
            let norm = (dot(&u, &u) + dot(&w, &w)).sqrt();
            if norm > 0.5 {
                u.iter_mut().for_each(|v| *v /= norm);
                w.iter_mut().for_each(|v| *v /= norm);
                kept.push((u, w));
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::EigenUnconverged { iterations: 0 });
        }
    }
    let vr = Matrix::from_fn(n, n, |i, k| kept[k].0[i]);
    let vi = Matrix::from_fn(n, n, |i, k| kept[k].1[i]);
    Ok((values, vr, vi))
}

/// Eigenvalues only of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(re: &Matrix, im: &Matrix) -> Result<Vec<f64>> {
    let n = re.rows();
    let big = Matrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => re[(i, j)],
        (true, false) => -im[(i, j - n)],
        (false, true) => im[(i - n, j)],
        (false, false) => re[(i - n, j - n)],
    });
    let (mut vals, _) = symmetric_jacobi(&big)?;
    vals.sort_by(f64::total_cmp);
    Ok(vals.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn lu_solves_and_transposes() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 4.0]]);
        let lu = Lu::factor(&a, "test").unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        let ax = a.matvec(&x);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-14);
        }
        let y = lu.solve_transpose(&b);
        let aty = a.transpose().matvec(&y);
        for i in 0..3 {
            assert!((aty[i] - b[i]).abs() < 1e-14);
        }
        // det by cofactor expansion: 0*(4) - 2*(4) + 1*(-3) = -11
        assert!((lu.det() + 11.0).abs() < 1e-13);
    }

    #[test]
    fn lu_rejects_zero_pivot() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(Lu::factor(&a, "test").is_err());
    }

    #[test]
    fn condition_estimate_matches_exact_for_diagonal() {
        let a = Matrix::from_rows(&[vec![1e-6, 0.0], vec![0.0, 1.0]]);
        let lu = Lu::factor(&a, "test").unwrap();
        assert!((lu.condition_estimate() - 1e6).abs() < 1e-3);
    }

    #[test]
    fn tridiagonal_ql_two_by_two() {
        // [[0, a], [a, 0]] has eigenvalues +-a, eigenvector first components 1/sqrt2
        let a = 0.5f64.sqrt();
        let (vals, z) = tridiagonal_ql(&[0.0, 0.0], &[a]).unwrap();
        assert!((vals[0] + a).abs() < 1e-15 && (vals[1] - a).abs() < 1e-15);
        assert!((z[0] * z[0] - 0.5).abs() < 1e-15);
        assert!((z[1] * z[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn jacobi_reconstructs() {
        let mut seed = 7;
        let n = 6;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = lcg(&mut seed);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let (vals, v) = symmetric_jacobi(&a).unwrap();
        let lam = Matrix::from_fn(n, n, |i, j| if i == j { vals[i] } else { 0.0 });
        let rec = v.matmul(&lam).matmul(&v.transpose());
        assert!(rec.sub(&a).max_abs() < 1e-13);
    }
}
