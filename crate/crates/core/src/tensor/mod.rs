//! Dense `f64` tensors and a define-by-run reverse-mode tape.
//!
//! [`Tensor`] is a plain value (shape + row-major data). Differentiable
//! computation happens on a [`Tape`]: leaves are registered with
//! [`Tape::var`], [`Tape::constant`] or [`Tape::param`], every operation on a
//! [`Var`] appends a node, and [`Tape::backward`] replays the record in
//! reverse. Constants never receive gradient.

mod tape;

pub use tape::{Gradients, Tape, Var};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape of a tensor of rank 0 (scalar), 1 (vector) or 2 (matrix).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct Shape {
    dims: [usize; 2],
    rank: u8,
}

impl Shape {
    pub const fn scalar() -> Self {
        Shape {
            dims: [1, 1],
            rank: 0,
        }
    }

    pub const fn vector(len: usize) -> Self {
        Shape {
            dims: [len, 1],
            rank: 1,
        }
    }

    pub const fn matrix(rows: usize, cols: usize) -> Self {
        Shape {
            dims: [rows, cols],
            rank: 2,
        }
    }

    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        match *dims {
            [] => Ok(Shape::scalar()),
            [n] => Ok(Shape::vector(n)),
            [r, c] => Ok(Shape::matrix(r, c)),
            _ => Err(Error::Rank {
                op: "shape",
                expected: 2,
                got: dims.to_vec(),
            }),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank as usize
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.rank as usize]
    }

    pub fn numel(&self) -> usize {
        match self.rank {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    /// Rows of a matrix (length of a vector, 1 for a scalar).
    pub fn rows(&self) -> usize {
        if self.rank == 0 {
            1
        } else {
            self.dims[0]
        }
    }

    /// Columns of a matrix (1 for vectors and scalars).
    pub fn cols(&self) -> usize {
        if self.rank == 2 {
            self.dims[1]
        } else {
            1
        }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.dims())
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.dims().to_vec()
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Shape::from_dims(&v)
    }
}

/// Dense row-major `f64` array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::Dimension {
                op: "tensor",
                left: shape.dims().to_vec(),
                right: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::matrix(rows, cols), data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(Shape::matrix(n, n));
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Element `(r, c)` of a matrix.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape.cols() + c]
    }

    /// Row `r` of a matrix as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.shape.rows(), self.shape.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: Shape::matrix(c, r),
            data: out,
        }
    }

    /// Plain (non-recorded) matrix product.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.rank() != 2 || other.shape.rank() != 2 || self.shape.cols() != other.shape.rows() {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape.dims().to_vec(),
                right: other.shape.dims().to_vec(),
            });
        }
        let (m, k, n) = (self.shape.rows(), self.shape.cols(), other.shape.cols());
        Ok(Tensor {
            shape: Shape::matrix(m, n),
            data: kernels::matmul(&self.data, &other.data, m, k, n),
        })
    }
}

pub(crate) mod kernels {
    use alloc::vec;
    use alloc::vec::Vec;

    pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
        out
    }

    pub fn matvec(w: &[f64], x: &[f64], m: usize, k: usize) -> Vec<f64> {
        (0..m).map(|i| dot(&w[i * k..(i + 1) * k], x)).collect()
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        // four independent partial sums keep the FP pipeline busy
        let mut acc = [0.0; 4];
        let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
        let (ra, rb) = (ca.remainder(), cb.remainder());
        for (x, y) in ca.zip(cb) {
            for j in 0..4 {
                acc[j] += x[j] * y[j];
            }
        }
        let mut tail = 0.0;
        for (x, y) in ra.iter().zip(rb) {
            tail += x * y;
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
    }

    pub fn sigmoid(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + libm::exp(-x))
        } else {
            let e = libm::exp(x);
            e / (1.0 + e)
        }
    }

    /// Max-shifted softmax.
    pub fn softmax(x: &[f64]) -> Vec<f64> {
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|v| libm::exp(v - max)).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    pub fn log_softmax(x: &[f64]) -> Vec<f64> {
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(x.iter().map(|v| libm::exp(v - max)).sum::<f64>());
        x.iter().map(|v| v - lse).collect()
    }
}
