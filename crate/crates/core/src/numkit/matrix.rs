//! Dense row-major `f64` matrices.
//!
//! Products are dispatched to `matrixmultiply::dgemm`, with transposed operands
//! expressed through strides instead of copies.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "Matrix::from_vec",
                expected: format!("{} values", rows * cols),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "Matrix::from_rows",
                    expected: format!("{cols} columns"),
                    got: format!("{} columns", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A `1 x n` matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Copy of the rows listed in `order`.
    pub fn select_rows(&self, order: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(order.len(), self.cols);
        for (dst, &src) in order.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Matrix) -> Result<()> {
        self.check_same("axpy", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.sum_sq().sqrt()
    }

    /// Mean over rows, summed in ascending row order.
    pub fn column_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / self.rows.max(1) as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        out
    }

    pub fn column_sum(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    /// Adds `bias` to every row.
    pub fn add_row_broadcast(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::Shape {
                op: "add_row_broadcast",
                expected: format!("{} values", self.cols),
                got: format!("{} values", bias.len()),
            });
        }
        for r in 0..self.rows {
            for (v, b) in self.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    fn check_same(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                expected: format!("{:?}", self.shape()),
                got: format!("{:?}", other.shape()),
            });
        }
        Ok(())
    }

    /// `self * rhs`
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(shape_err("matmul", self, rhs));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        gemm(self, false, rhs, false, &mut out, 0.0);
        Ok(out)
    }

    /// `selfᵀ * rhs`
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(shape_err("t_matmul", self, rhs));
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        gemm(self, true, rhs, false, &mut out, 0.0);
        Ok(out)
    }

    /// `self * rhsᵀ`
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(shape_err("matmul_t", self, rhs));
        }
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        gemm(self, false, rhs, true, &mut out, 0.0);
        Ok(out)
    }

    /// `self += aᵀ * b`, used to accumulate weight gradients.
    pub fn add_t_matmul(&mut self, a: &Matrix, b: &Matrix) -> Result<()> {
        if a.rows != b.rows || self.rows != a.cols || self.cols != b.cols {
            return Err(shape_err("add_t_matmul", a, b));
        }
        gemm(a, true, b, false, self, 1.0);
        Ok(())
    }

    /// Row vector times matrix: `v * self`.
    pub fn vec_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::Shape {
                op: "vec_mul",
                expected: format!("{} values", self.rows),
                got: format!("{} values", v.len()),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &x) in v.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += x * w;
            }
        }
        Ok(out)
    }

    /// Matrix times column vector: `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape {
                op: "mul_vec",
                expected: format!("{} values", self.cols),
                got: format!("{} values", v.len()),
            });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `self += x ⊗ y` (outer product).
    pub fn add_outer(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.rows || y.len() != self.cols {
            return Err(Error::Shape {
                op: "add_outer",
                expected: format!("{:?}", self.shape()),
                got: format!("({}, {})", x.len(), y.len()),
            });
        }
        for (r, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, &yv) in self.row_mut(r).iter_mut().zip(y) {
                *o += xv * yv;
            }
        }
        Ok(())
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        expected: format!("compatible with {:?}", a.shape()),
        got: format!("{:?}", b.shape()),
    }
}

/// `c = beta * c + op(a) * op(b)`; shapes are checked by the callers.
fn gemm(a: &Matrix, ta: bool, b: &Matrix, tb: bool, c: &mut Matrix, beta: f64) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if tb { b.rows } else { b.cols };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale(beta);
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: the strides describe in-bounds views of `a`, `b` and `c`, whose
    // dimensions the public wrappers validated.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn filled(r: usize, c: usize, seed: f64) -> Matrix {
        let data = (0..r * c).map(|i| ((i as f64 + seed) * 0.37).sin()).collect();
        Matrix::from_vec(r, c, data).unwrap()
    }

    #[test]
    fn products_agree_with_naive_loops() {
        let a = filled(5, 7, 0.1);
        let b = filled(7, 3, 0.9);
        let want = naive(&a, &b);
        let got = a.matmul(&b).unwrap();
        for (x, y) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        let got_t = a.transpose().t_matmul(&b).unwrap();
        let got_nt = a.matmul_t(&b.transpose()).unwrap();
        for ((x, y), z) in got_t.as_slice().iter().zip(got_nt.as_slice()).zip(want.as_slice()) {
            assert!((x - z).abs() < 1e-12 && (y - z).abs() < 1e-12);
        }
        let mut acc = Matrix::identity(3).matmul(&Matrix::zeros(3, 3)).unwrap();
        acc.add_t_matmul(&b, &b).unwrap();
        let want = naive(&b.transpose(), &b);
        for (x, y) in acc.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let a = Matrix::zeros(2, 3);
        assert!(a.matmul(&Matrix::zeros(2, 3)).is_err());
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
