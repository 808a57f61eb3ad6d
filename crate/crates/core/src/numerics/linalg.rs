//! Small dense matrices: Cholesky solves, log-determinants and a Jacobi SVD
//! for pseudo-inverses. Sizes here are the parameter dimension (≤ 6) or the
//! pixel count times that, so plain loops are fine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Consistency(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Consistency("ragged matrix rows".into()));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    /// Columns given as separate vectors (e.g. Jacobian columns).
    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Consistency("column length mismatch".into()));
            }
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `selfᵀ v`.
    pub fn tr_matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "tr_matvec shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for j in 0..self.cols {
                out[j] += self[(i, j)] * vi;
            }
        }
        out
    }

    /// `selfᵀ self + shift·I`.
    pub fn gram_shifted(&self, shift: T) -> Self {
        let d = self.cols;
        let mut g = Self::zeros(d, d);
        for r in 0..self.rows {
            let row = &self.data[r * d..(r + 1) * d];
            for i in 0..d {
                let ri = row[i];
                for (j, &rj) in row.iter().enumerate().skip(i) {
                    g.data[i * d + j] += ri * rj;
                }
            }
        }
        for i in 0..d {
            g.data[i * d + i] += shift;
            for j in 0..i {
                g.data[i * d + j] = g.data[j * d + i];
            }
        }
        g
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        Cholesky::new(self)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular factor L with M = L Lᵀ.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(m: &Matrix<T>) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::Decomposition(format!(
                "Cholesky needs a square matrix, got {}x{}",
                m.rows, m.cols
            )));
        }
        let n = m.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = m[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(Error::Decomposition(format!(
                    "matrix is not positive definite (pivot {j} = {diag})"
                )));
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.l.rows;
        assert_eq!(rhs.len(), n, "rhs length mismatch");
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = self.l[(i, k)] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let t = self.l[(k, i)] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        two * (0..self.l.rows).map(|i| self.l[(i, i)].ln()).sum::<T>()
    }
}

/// Solve M s = rhs for symmetric positive definite M (one Gauss-Newton step).
pub fn gauss_newton_solve<T: Scalar>(m: &Matrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    if rhs.len() != m.rows {
        return Err(Error::Consistency("rhs length does not match matrix".into()));
    }
    Ok(m.cholesky()?.solve(rhs))
}

pub fn log_det_spd<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    Ok(m.cholesky()?.log_det())
}

/// Thin SVD A = U Σ Vᵀ by one-sided Jacobi rotations.
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub singular: Vec<T>,
    pub v: Matrix<T>,
}

pub fn svd<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    // Work on the orientation with rows ≥ cols.
    if a.rows < a.cols {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            singular: t.singular,
            v: t.u,
        };
    }
    let (m, n) = (a.rows, a.cols);
    let mut u = a.clone();
    let mut v = Matrix::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let two = T::one() + T::one();
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut singular = vec![T::zero(); n];
    for j in 0..n {
        let norm = (0..m).map(|i| u[(i, j)] * u[(i, j)]).sum::<T>().sqrt();
        singular[j] = norm;
        if norm > T::zero() {
            for i in 0..m {
                u[(i, j)] /= norm;
            }
        }
    }
    Svd { u, singular, v }
}

/// Moore-Penrose pseudo-inverse; singular values below 1e-10·σ_max count as zero.
pub fn pinv<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    let Svd { u, singular, v } = svd(a);
    let smax = singular.iter().fold(T::zero(), |m, &s| m.max(s));
    let cutoff = T::of(1e-10) * smax;
    let k = singular.len();
    let mut out = Matrix::zeros(a.cols, a.rows);
    for r in 0..k {
        let s = singular[r];
        if s <= cutoff || s == T::zero() {
            continue;
        }
        let inv = T::one() / s;
        for i in 0..a.cols {
            let vi = v[(i, r)] * inv;
            if vi == T::zero() {
                continue;
            }
            for j in 0..a.rows {
                out[(i, j)] += vi * u[(j, r)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_row_major(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Cofactor-expansion determinant and adjugate inverse: oracles that share
    /// nothing with the Cholesky path.
    fn det(m: &Matrix<f64>) -> f64 {
        let n = m.rows();
        if n == 1 {
            return m[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = minor(m, 0, j);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[(0, j)] * det(&minor)
            })
            .sum()
    }

    fn minor(m: &Matrix<f64>, r: usize, c: usize) -> Matrix<f64> {
        let n = m.rows();
        let mut data = Vec::new();
        for i in (0..n).filter(|&i| i != r) {
            for j in (0..n).filter(|&j| j != c) {
                data.push(m[(i, j)]);
            }
        }
        Matrix::from_row_major(n - 1, n - 1, data).unwrap()
    }

    fn adjugate_inverse(m: &Matrix<f64>) -> Matrix<f64> {
        let n = m.rows();
        let d = det(m);
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                inv[(j, i)] = sign * det(&minor(m, i, j)) / d;
            }
        }
        inv
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let s = gauss_newton_solve(&Matrix::identity(2), &[3.0, -1.0]).unwrap();
        assert_eq!(s, vec![3.0, -1.0]);
        let s: Vec<f64> = gauss_newton_solve(&Matrix::from_diag(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15 && (s[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_matches_adjugate_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let j = random(5, 3, &mut rng);
            let m = j.gram_shifted(0.01);
            let rhs: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = gauss_newton_solve(&m, &rhs).unwrap();
            let oracle = adjugate_inverse(&m).matvec(&rhs);
            for (a, b) in s.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            let resid: f64 = m
                .matvec(&s)
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(resid <= 1e-10 * norm);
        }
    }

    #[test]
    fn non_spd_fails() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            gauss_newton_solve(&m, &[1.0, 1.0]),
            Err(Error::Decomposition(_))
        ));
        assert!(log_det_spd(&m).is_err());
    }

    #[test]
    fn log_det_cases() {
        assert_eq!(log_det_spd(&Matrix::<f64>::identity(3)).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((log_det_spd(&Matrix::from_diag(&[e, e * e])).unwrap() - 3.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let m = random(4, 3, &mut rng).gram_shifted(0.1);
            assert!((log_det_spd(&m).unwrap() - det(&m).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn pinv_simple_cases() {
        let id = Matrix::<f64>::identity(3);
        assert!(pinv(&id).sub(&id).max_abs() < 1e-15);
        let d = Matrix::<f64>::from_diag(&[2.0, 0.0]);
        let p = pinv(&d);
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn pinv_of_full_rank_2x2_is_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random(2, 2, &mut rng);
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            if det.abs() < 0.05 {
                continue;
            }
            let inv = Matrix::from_rows(&[
                vec![a[(1, 1)] / det, -a[(0, 1)] / det],
                vec![-a[(1, 0)] / det, a[(0, 0)] / det],
            ])
            .unwrap();
            assert!(pinv(&a).sub(&inv).max_abs() < 1e-9);
        }
    }

    #[test]
    fn pinv_moore_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let mut a = random(4, 4, &mut rng);
            if trial % 2 == 0 {
                // rank-deficient: copy a column
                for i in 0..4 {
                    a[(i, 3)] = a[(i, 0)] * 2.0;
                }
            }
            let p = pinv(&a);
            let apa = a.matmul(&p).matmul(&a);
            let pap = p.matmul(&a).matmul(&p);
            let ap = a.matmul(&p);
            let pa = p.matmul(&a);
            assert!(apa.sub(&a).max_abs() < 1e-8);
            assert!(pap.sub(&p).max_abs() < 1e-8);
            assert!(ap.sub(&ap.transpose()).max_abs() < 1e-8);
            assert!(pa.sub(&pa.transpose()).max_abs() < 1e-8);
        }
    }

    #[test]
    fn pinv_works_in_f32() {
        let a = Matrix::<f32>::from_diag(&[4.0, 0.5]);
        let p = pinv(&a);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-6 && (p[(1, 1)] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn wide_matrix_pinv() {
        let a = Matrix::<f64>::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let p = pinv(&a);
        assert_eq!((p.rows(), p.cols()), (3, 1));
        assert!((a.matmul(&p)[(0, 0)] - 1.0).abs() < 1e-12);
    }
}
