use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Every constructor and arithmetic operation rejects non-finite entries, so
/// a `Matrix` that exists is always finite.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Hadamard,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim(
                "Matrix::from_vec",
                format!("empty shape {rows}x{cols}"),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Matrix::from_vec",
                format!("{} values for shape {rows}x{cols}", data.len()),
            ));
        }
        check_finite("Matrix::from_vec", &data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("Matrix::from_rows", "ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Zero matrix. Panics on an empty shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix shape {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(value.is_finite());
        let mut m = Self::zeros(rows, cols);
        m.data.fill(value);
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a closure over `(row, col)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dim(
                "matmul",
                format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            ));
        }
        let (n, m) = (self.rows, rhs.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Self::checked(n, m, out, "matmul")
    }

    pub fn elementwise(&self, rhs: &Matrix, op: ElementwiseOp) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::dim(
                "elementwise",
                format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            ));
        }
        let f: fn(f64, f64) -> f64 = match op {
            ElementwiseOp::Add => |a, b| a + b,
            ElementwiseOp::Sub => |a, b| a - b,
            ElementwiseOp::Hadamard => |a, b| a * b,
        };
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::checked(self.rows, self.cols, data, "elementwise")
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.elementwise(rhs, ElementwiseOp::Add)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.elementwise(rhs, ElementwiseOp::Sub)
    }

    pub fn hadamard(&self, rhs: &Matrix) -> Result<Matrix> {
        self.elementwise(rhs, ElementwiseOp::Hadamard)
    }

    pub fn scale(&self, c: f64) -> Result<Matrix> {
        self.map("scale", |x| x * c)
    }

    pub fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let data = self.data.iter().map(|&x| f(x)).collect();
        Self::checked(self.rows, self.cols, data, op)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rows `idx` and columns `idx` of a square matrix, in the given order.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Result<Matrix> {
        self.submatrix(idx, idx)
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Matrix> {
        if rows.iter().any(|&i| i >= self.rows) || cols.iter().any(|&j| j >= self.cols) {
            return Err(Error::dim("submatrix", "index out of range"));
        }
        Matrix::from_fn(rows.len(), cols.len(), |a, b| self.get(rows[a], cols[b]))
    }

    /// Stack `self` on top of `below`.
    pub fn vstack(&self, below: &Matrix) -> Result<Matrix> {
        if self.cols != below.cols {
            return Err(Error::dim("vstack", "column counts differ"));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&below.data);
        Ok(Matrix {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        })
    }

    fn checked(rows: usize, cols: usize, data: Vec<f64>, op: &'static str) -> Result<Matrix> {
        check_finite(op, &data)?;
        Ok(Matrix { rows, cols, data })
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out[i * b.cols() + j] = s;
            }
        }
        out
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = seed;
        Matrix::from_fn(rows, cols, |_, _| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .unwrap()
    }

    #[test]
    fn identity_matmul() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&a).unwrap(), a);
    }

    #[test]
    fn row_times_column() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().as_slice(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = lcg_matrix(3, 4, 1);
        let b = lcg_matrix(4, 2, 2);
        let c = a.matmul(&b).unwrap();
        for (x, y) in c.as_slice().iter().zip(naive_matmul(&a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn elementwise_ops() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let m = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(a.hadamard(&m).unwrap().as_slice(), &[0.0, 2.0]);
        assert_eq!(a.add(&Matrix::zeros(1, 2)).unwrap(), a);
        assert_eq!(a.sub(&a).unwrap(), Matrix::zeros(1, 2));
        assert!(a.add(&Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Matrix::from_vec(1, 1, vec![f64::NAN]).is_err());
        let big = Matrix::filled(1, 1, 1e300);
        assert!(matches!(big.matmul(&big), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn frobenius() {
        assert_eq!(
            Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap().frobenius_sq(),
            25.0
        );
        assert_eq!(Matrix::zeros(2, 2).frobenius_sq(), 0.0);
    }
}
