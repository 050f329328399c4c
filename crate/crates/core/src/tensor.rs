//! Dense row-major `f64` tensors.
//!
//! Only what the cell engine needs: construction, matrix products against
//! a transposed operand, and elementwise accumulation. Every tensor used in
//! training is two-dimensional (`batch × features`) apart from bias vectors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A dense row-major array of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` matches `shape`.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || n != data.len() {
            return Err(Error::ShapeMismatch {
                context: "tensor construction",
                expected: shape,
                found: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    /// All-zeros tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// Builds a matrix from equal-length rows.
    ///
    /// Panics if the rows are ragged or empty; this is a convenience for
    /// literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor {
            shape: vec![rows.len(), cols],
            data,
        }
    }

    /// A `rows × cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// A 1-D vector.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows of a matrix (first dimension).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns (product of trailing dimensions).
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product::<usize>().max(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Returns `scale * self`.
    pub fn scaled(&self, scale: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * scale).collect(),
        }
    }

    /// Frobenius inner product with a same-shaped tensor.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other, "dot")?;
        Ok(crate::math::dot(&self.data, &other.data))
    }

    /// Matrix product `self · rhs` for `B×n` and `n×m` matrices.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (b, n) = (self.rows(), self.cols());
        if rhs.shape.len() != 2 || rhs.shape[0] != n {
            return Err(Error::ShapeMismatch {
                context: "matmul",
                expected: vec![n, rhs.cols()],
                found: rhs.shape.clone(),
            });
        }
        let m = rhs.shape[1];
        let mut out = vec![0.0; b * m];
        for i in 0..b {
            let xi = self.row(i);
            let oi = &mut out[i * m..(i + 1) * m];
            for (k, &x) in xi.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let wk = &rhs.data[k * m..(k + 1) * m];
                for (o, w) in oi.iter_mut().zip(wk) {
                    *o += x * w;
                }
            }
        }
        Ok(Tensor {
            shape: vec![b, m],
            data: out,
        })
    }

    /// `self · rhsᵀ` for `B×m` and `n×m` matrices.
    pub fn matmul_transposed(&self, rhs: &Tensor) -> Result<Tensor> {
        let (b, m) = (self.rows(), self.cols());
        if rhs.shape.len() != 2 || rhs.shape[1] != m {
            return Err(Error::ShapeMismatch {
                context: "matmul_transposed",
                expected: vec![rhs.rows(), m],
                found: rhs.shape.clone(),
            });
        }
        let n = rhs.shape[0];
        let mut out = vec![0.0; b * n];
        for i in 0..b {
            let gi = self.row(i);
            for k in 0..n {
                out[i * n + k] = crate::math::dot(gi, rhs.row(k));
            }
        }
        Ok(Tensor {
            shape: vec![b, n],
            data: out,
        })
    }

    /// `selfᵀ · rhs` for `B×n` and `B×m` matrices, giving `n×m`.
    pub fn transposed_matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (b, n) = (self.rows(), self.cols());
        if rhs.rows() != b {
            return Err(Error::ShapeMismatch {
                context: "transposed_matmul",
                expected: vec![b, rhs.cols()],
                found: rhs.shape.clone(),
            });
        }
        let m = rhs.cols();
        let mut out = vec![0.0; n * m];
        for i in 0..b {
            let xi = self.row(i);
            let gi = rhs.row(i);
            for (k, &x) in xi.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let ok = &mut out[k * m..(k + 1) * m];
                for (o, g) in ok.iter_mut().zip(gi) {
                    *o += x * g;
                }
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    /// Column sums of a matrix, as a vector.
    pub fn sum_rows(&self) -> Tensor {
        let c = self.cols();
        let mut out = vec![0.0; c];
        for i in 0..self.rows() {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        Tensor {
            shape: vec![c],
            data: out,
        }
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row_vector(&mut self, bias: &Tensor) -> Result<()> {
        if bias.len() != self.cols() {
            return Err(Error::ShapeMismatch {
                context: "bias broadcast",
                expected: vec![self.cols()],
                found: bias.shape.clone(),
            });
        }
        let c = self.cols();
        for i in 0..self.rows() {
            for (o, b) in self.data[i * c..(i + 1) * c].iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Ok(())
    }

    /// Gathers the given rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            shape: vec![indices.len(), c],
            data,
        }
    }

    fn check_same_shape(&self, other: &Tensor, context: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context,
                expected: self.shape.clone(),
                found: other.shape.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let x = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let w = Tensor::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let y = x.matmul(&w).unwrap();
        assert_eq!(y.data(), &[19.0, 22.0, 43.0, 50.0]);
        // x · wᵀ
        let yt = x.matmul_transposed(&w).unwrap();
        assert_eq!(yt.data(), &[17.0, 23.0, 39.0, 53.0]);
        // xᵀ · w
        let ty = x.transposed_matmul(&w).unwrap();
        assert_eq!(ty.data(), &[26.0, 30.0, 38.0, 44.0]);
    }
}
