use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row_vector(values: &[T]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        for x in &mut self.data {
            *x = f(*x);
        }
    }

    /// Elementwise `self = f(self, other)`.
    pub fn zip_inplace(&mut self, other: &Matrix<T>, f: impl Fn(T, T) -> T) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = f(*a, b);
        }
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) {
        self.zip_inplace(other, |a, b| a + b);
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn scale(&mut self, factor: T) {
        self.map_inplace(|x| x * factor);
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row_broadcast(&mut self, row: &Matrix<T>) {
        debug_assert_eq!(row.rows, 1);
        debug_assert_eq!(row.cols, self.cols);
        for r in self.data.chunks_exact_mut(self.cols) {
            for (x, &b) in r.iter_mut().zip(&row.data) {
                *x += b;
            }
        }
    }

    /// Column sums as a `1 x cols` row.
    pub fn column_sums(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(1, self.cols);
        for r in self.data.chunks_exact(self.cols) {
            for (acc, &x) in out.data.iter_mut().zip(r) {
                *acc += x;
            }
        }
        out
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        T::gemm(
            self.rows,
            self.cols,
            rhs.cols,
            T::one(),
            &self.data,
            self.cols as isize,
            1,
            &rhs.data,
            rhs.cols as isize,
            1,
            T::zero(),
            &mut out.data,
            rhs.cols as isize,
            1,
        );
        Ok(out)
    }

    /// `out += self^T * rhs`, used for weight gradients.
    pub fn t_matmul_acc(&self, rhs: &Matrix<T>, out: &mut Matrix<T>) {
        assert_eq!(self.rows, rhs.rows, "t_matmul_acc: inner dimension");
        assert_eq!(out.shape(), (self.cols, rhs.cols), "t_matmul_acc: output shape");
        T::gemm(
            self.cols,
            self.rows,
            rhs.cols,
            T::one(),
            &self.data,
            1,
            self.cols as isize,
            &rhs.data,
            rhs.cols as isize,
            1,
            T::one(),
            &mut out.data,
            out.cols as isize,
            1,
        );
    }

    /// `self * rhs^T`, used to push gradients back through a weight matrix.
    pub fn matmul_t(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.cols, "matmul_t: inner dimension");
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        T::gemm(
            self.rows,
            self.cols,
            rhs.rows,
            T::one(),
            &self.data,
            self.cols as isize,
            1,
            &rhs.data,
            1,
            rhs.cols as isize,
            T::zero(),
            &mut out.data,
            rhs.rows as isize,
            1,
        );
        out
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix<T> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}
