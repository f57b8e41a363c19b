//! Dense N-dimensional `f64` array, row-major, no views, no broadcasting.
//!
//! Every value that moves through the library (images, masks, feature maps,
//! parameters, gradients) is one of these. Shape mismatches are hard errors:
//! implicit broadcasting is the easiest way to ship a silently wrong result
//! in hand-rolled numerics, so there is none.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Reduction kinds accepted by [`Tensor::reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Min,
    Max,
}

impl Tensor {
    /// Build a tensor from a shape and a row-major buffer.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                context: "tensor with zero extent",
                left: shape.to_vec(),
                right: shape.to_vec(),
            });
        }
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "buffer length does not match shape",
                left: shape.to_vec(),
                right: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Scalar wrapped in a shape-[1] tensor.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 2-D convenience constructor from nested rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(h * w);
        for r in rows {
            if r.len() != w {
                return Err(Error::ShapeMismatch {
                    context: "ragged rows",
                    left: vec![w],
                    right: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::new(&[h, w], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Reinterpret the buffer under a new shape of identical element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &d) in idx.iter().enumerate() {
            debug_assert!(d < self.shape[i]);
            off = off * self.shape[i] + d;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    fn check_same_shape(&self, other: &Tensor, context: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor, context: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_shape(other, context)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn abs(&self) -> Tensor {
        self.map(f64::abs)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// In-place `self += other * scale`. Used on gradient accumulators.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * scale;
        }
        Ok(())
    }

    pub fn sum_all(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean_all(&self) -> f64 {
        self.sum_all() / self.data.len() as f64
    }

    pub fn min_all(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_all(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reduce over the given axes (distinct, in-range), dropping them from the
    /// shape. With `axes == None` the whole tensor reduces to shape `[1]`.
    pub fn reduce(&self, op: ReduceOp, axes: Option<&[usize]>) -> Result<Tensor> {
        let Some(axes) = axes else {
            let v = match op {
                ReduceOp::Sum => self.sum_all(),
                ReduceOp::Mean => self.mean_all(),
                ReduceOp::Min => self.min_all(),
                ReduceOp::Max => self.max_all(),
            };
            return Ok(Tensor::scalar(v));
        };

        let rank = self.rank();
        let mut reduced = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(Error::InvalidAxis { axis: a, rank });
            }
            if reduced[a] {
                return Err(Error::InvalidAxis { axis: a, rank });
            }
            reduced[a] = true;
        }

        let out_shape: Vec<usize> = (0..rank).filter(|&i| !reduced[i]).map(|i| self.shape[i]).collect();
        let out_shape = if out_shape.is_empty() { vec![1] } else { out_shape };
        let out_len: usize = out_shape.iter().product();
        let reduce_count: usize = (0..rank).filter(|&i| reduced[i]).map(|i| self.shape[i]).product();

        let init = match op {
            ReduceOp::Sum | ReduceOp::Mean => 0.0,
            ReduceOp::Min => f64::INFINITY,
            ReduceOp::Max => f64::NEG_INFINITY,
        };
        let mut out = vec![init; out_len];

        // Row-major walk keeps accumulation order fixed regardless of axes.
        let mut idx = vec![0usize; rank];
        for &v in &self.data {
            let mut off = 0;
            for i in 0..rank {
                if !reduced[i] {
                    off = off * self.shape[i] + idx[i];
                }
            }
            match op {
                ReduceOp::Sum | ReduceOp::Mean => out[off] += v,
                ReduceOp::Min => out[off] = out[off].min(v),
                ReduceOp::Max => out[off] = out[off].max(v),
            }
            for i in (0..rank).rev() {
                idx[i] += 1;
                if idx[i] < self.shape[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        if op == ReduceOp::Mean {
            for v in &mut out {
                *v /= reduce_count as f64;
            }
        }
        Tensor::new(&out_shape, out)
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2d(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::InvalidAxis {
                axis: 2,
                rank: self.rank(),
            });
        }
        let (h, w) = (self.shape[0], self.shape[1]);
        let mut data = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                data[j * h + i] = self.data[i * w + j];
            }
        }
        Tensor::new(&[w, h], data)
    }
}
