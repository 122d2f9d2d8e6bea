use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Point clouds are `n x d`, latent codes `1 x k`.
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn reshaped(&self, rows: usize, cols: usize) -> Result<Self> {
        Self::from_vec(rows, cols, self.data.clone())
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x = *x + y;
        }
    }

    /// `self * w + bias` where `bias` is broadcast over rows.
    pub fn affine(&self, w: &Self, bias: &Self) -> Self {
        debug_assert_eq!(self.cols, w.rows);
        let mut out = Self::zeros(self.rows, w.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * w.cols..(i + 1) * w.cols];
            orow.copy_from_slice(&bias.data);
            for (k, &x) in self.row(i).iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                for (o, &wv) in orow.iter_mut().zip(w.row(k)) {
                    *o = *o + x * wv;
                }
            }
        }
        out
    }

    /// `self * w^T`.
    pub fn matmul_transposed(&self, w: &Self) -> Self {
        debug_assert_eq!(self.cols, w.cols);
        let mut out = Self::zeros(self.rows, w.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for k in 0..w.rows {
                out.data[i * w.rows + k] = dot(a, w.row(k));
            }
        }
        out
    }

    /// `acc += self^T * dy`.
    pub fn accumulate_transposed_product(&self, dy: &Self, acc: &mut Self) {
        debug_assert_eq!(self.rows, dy.rows);
        debug_assert_eq!(acc.shape(), (self.cols, dy.cols));
        for i in 0..self.rows {
            let g = dy.row(i);
            for (k, &x) in self.row(i).iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                for (a, &gv) in acc.row_mut(k).iter_mut().zip(g) {
                    *a = *a + x * gv;
                }
            }
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
