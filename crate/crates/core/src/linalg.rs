//! Dense real and complex matrix kernels sized for link-level simulation.
//!
//! Frames here are at most a few hundred symbols, so everything is a plain
//! dense `Vec` in row-major order. The only factorization needed is a
//! Cholesky solve for symmetric positive definite systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dot product with four accumulators so the compiler can keep the loop
/// pipelined. The summation order is fixed, which keeps results bit-identical
/// across runs.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let mut acc = [0.0f64; 4];
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        sum += a[j] * b[j];
    }
    sum
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
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
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `A x` written into a caller-provided buffer.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `A^T x`, accumulated row by row so the inner loop stays contiguous.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.matvec_t_into(x, &mut out);
        out
    }

    pub fn matvec_t_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (row, &xi) in self.data.chunks_exact(self.cols).zip(x) {
            if xi != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += xi * a;
                }
            }
        }
    }

    /// `A B`.
    pub fn mul(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for (k, &aik) in a_row.iter().enumerate() {
                if aik != 0.0 {
                    let b_row = other.row(k);
                    let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                    for (o, &b) in out_row.iter_mut().zip(b_row) {
                        *o += aik * b;
                    }
                }
            }
        }
        out
    }

    /// Gram matrix `A^T A`, built from symmetric rank-one updates.
    pub fn gram(&self) -> RealMatrix {
        let n = self.cols;
        let mut g = RealMatrix::zeros(n, n);
        for row in self.data.chunks_exact(n) {
            for (i, &ai) in row.iter().enumerate() {
                if ai != 0.0 {
                    let gi = &mut g.data[i * n + i..(i + 1) * n];
                    for (gij, &aj) in gi.iter_mut().zip(&row[i..]) {
                        *gij += ai * aj;
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    /// Hadamard square of every entry.
    pub fn entrywise_square(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * v).collect(),
        }
    }
}

/// Solve `A x = b` for symmetric positive definite `A` via Cholesky.
///
/// Fails with a numerical error when a pivot collapses, which is how a
/// singular system (e.g. a rank-deficient Gram matrix at zero noise)
/// surfaces instead of being masked.
pub fn cholesky_solve(a: &RealMatrix, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.rows(), a.cols());
    assert_eq!(b.len(), a.rows());
    let n = a.rows();
    let mut max_diag = 0.0f64;
    for i in 0..n {
        max_diag = max_diag.max(a.get(i, i).abs());
    }
    let tol = 1e-13 * max_diag;

    // Lower-triangular factor, row-major so the inner dots stay contiguous.
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                let d = a.get(i, i) - s;
                if !d.is_finite() || d <= tol {
                    return Err(Error::Numerical(format!(
                        "Cholesky pivot {d:.3e} at index {i}; system is singular or indefinite"
                    )));
                }
                l[i * n + j] = d.sqrt();
            } else {
                l[i * n + j] = (a.get(i, j) - s) / l[j * n + j];
            }
        }
    }

    // L z = b
    let mut z = vec![0.0f64; n];
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &z[..i]);
        z[i] = (b[i] - s) / l[i * n + i];
    }
    // L^T x = z
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_assign_at(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn mul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for (k, &aik) in self.row(i).iter().enumerate() {
                if aik != Complex64::new(0.0, 0.0) {
                    let b_row = other.row(k);
                    let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                    for (o, &b) in out_row.iter_mut().zip(b_row) {
                        *o += aik * b;
                    }
                }
            }
        }
        out
    }

    pub fn conj_transpose(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Kronecker product `A (x) B`.
    pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(a.rows * b.rows, a.cols * b.cols);
        for ia in 0..a.rows {
            for ja in 0..a.cols {
                let va = a.get(ia, ja);
                if va == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for ib in 0..b.rows {
                    for jb in 0..b.cols {
                        out.set(ia * b.rows + ib, ja * b.cols + jb, va * b.get(ib, jb));
                    }
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Unitary DFT matrix: entry `(p, q)` is `exp(-j 2 pi p q / n) / sqrt(n)`.
///
/// Entries come from a precomputed twiddle table so repeated construction
/// inside the Monte Carlo loop stays cheap.
pub fn dft_matrix(n: usize) -> ComplexMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    let twiddle: Vec<Complex64> = (0..n)
        .map(|t| {
            let phase = -2.0 * std::f64::consts::PI * t as f64 / n as f64;
            Complex64::from_polar(scale, phase)
        })
        .collect();
    let mut m = ComplexMatrix::zeros(n, n);
    for p in 0..n {
        for q in 0..n {
            m.set(p, q, twiddle[(p * q) % n]);
        }
    }
    m
}

/// Unitary inverse DFT matrix (conjugate of [`dft_matrix`]).
pub fn idft_matrix(n: usize) -> ComplexMatrix {
    let mut m = dft_matrix(n);
    for v in m.data.iter_mut() {
        *v = v.conj();
    }
    m
}

/// Treats `g` as a column-major `m x n` grid and returns `A G` (again
/// column-major).
pub fn left_mul_grid(a: &ComplexMatrix, g: &[Complex64], m: usize, n: usize) -> Vec<Complex64> {
    assert_eq!(a.rows(), m);
    assert_eq!(a.cols(), m);
    assert_eq!(g.len(), m * n);
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for col in 0..n {
        let src = &g[col * m..(col + 1) * m];
        let dst = &mut out[col * m..(col + 1) * m];
        for (r, d) in dst.iter_mut().enumerate() {
            *d = a.row(r).iter().zip(src).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Treats `g` as a column-major `m x n` grid and returns `G B`.
pub fn right_mul_grid(g: &[Complex64], m: usize, n: usize, b: &ComplexMatrix) -> Vec<Complex64> {
    assert_eq!(b.rows(), n);
    assert_eq!(b.cols(), n);
    assert_eq!(g.len(), m * n);
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for row in 0..n {
        let src = &g[row * m..(row + 1) * m];
        for col in 0..n {
            let bkj = b.get(row, col);
            if bkj == Complex64::new(0.0, 0.0) {
                continue;
            }
            let dst = &mut out[col * m..(col + 1) * m];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s * bkj;
            }
        }
    }
    out
}
