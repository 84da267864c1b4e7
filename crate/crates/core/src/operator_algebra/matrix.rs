use num_complex::Complex64;

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Dense row-major complex matrix, possibly rectangular.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from row-major data; panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data: data.iter().map(|&x| C64::new(x, 0.0)).collect() }
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![ZERO; n * p];
        for i in 0..n {
            let row = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * p..(k + 1) * p];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Matrix { rows: n, cols: p, data: out }
    }

    pub fn adjoint(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conj(&self) -> Matrix {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    /// Entrywise real part as a complex matrix with zero imaginary parts.
    pub fn re(&self) -> Matrix {
        self.map(|z| C64::new(z.re, 0.0))
    }

    pub fn kron(&self, other: &Matrix) -> Matrix {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        let mut data = vec![ZERO; r * c];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                if a == ZERO {
                    continue;
                }
                for k in 0..other.rows {
                    let base = (i * other.rows + k) * c + j * other.cols;
                    for l in 0..other.cols {
                        data[base + l] = a * other.get(k, l);
                    }
                }
            }
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "sub shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: C64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "axpy shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn scale(&self, s: C64) -> Matrix {
        self.map(|z| z * s)
    }

    pub fn scale_re(&self, s: f64) -> Matrix {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// `Tr(self† other)`.
    pub fn hs_inner(&self, other: &Matrix) -> C64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "hs_inner shape");
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Matrix) -> C64 {
        assert_eq!((self.cols, self.rows), (other.rows, other.cols), "trace_product shape");
        let mut s = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                s += self.get(i, k) * other.get(k, i);
            }
        }
        s
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "diff shape");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// True when every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    /// `‖self − self†‖_max`.
    pub fn hermiticity_deviation(&self) -> f64 {
        assert!(self.is_square(), "hermiticity of non-square matrix");
        let n = self.rows;
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                d = d.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        d
    }

    /// `‖self − selfᵀ‖_max`.
    pub fn symmetry_deviation(&self) -> f64 {
        assert!(self.is_square(), "symmetry of non-square matrix");
        let n = self.rows;
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                d = d.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        d
    }

    /// `(self + self†)/2`.
    pub fn hermitian_part(&self) -> Matrix {
        let n = self.rows;
        Matrix::from_fn(n, n, |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kron_of_pauli_z() {
        let z = Matrix::diag(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        let zz = z.kron(&z);
        let diag: Vec<f64> = (0..4).map(|i| zz.get(i, i).re).collect();
        assert_eq!(diag, vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn matmul_and_adjoint() {
        let a = Matrix::from_vec(2, 3, vec![c(1.0, 1.0), c(0.0, 2.0), c(3.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 1.0)]);
        let g = a.matmul(&a.adjoint());
        assert_eq!(g.rows(), 2);
        assert!(g.hermiticity_deviation() < 1e-15);
        assert_eq!(g.get(0, 0), c(1.0 + 1.0 + 4.0 + 9.0, 0.0));
        assert!((a.matmul(&a.adjoint()).trace() - a.hs_inner(&a)).norm() < 1e-14);
    }

    #[test]
    fn trace_product_matches_product() {
        let a = Matrix::from_fn(3, 3, |i, j| c(i as f64, j as f64 - 1.0));
        let b = Matrix::from_fn(3, 3, |i, j| c((i * j) as f64, 0.5));
        assert!((a.trace_product(&b) - a.matmul(&b).trace()).norm() < 1e-13);
    }
}
