//! Dense row-major tensors with 32-bit storage.
//!
//! Convolutional feature maps use the channel-major `C×H×W` layout. The
//! attention blocks work on token-major `H×W×C` maps; [`Tensor::chw_to_hwc`]
//! and [`Tensor::hwc_to_chw`] are the only places where that conversion
//! happens.

mod dt1;
mod grad;
mod ops;

pub use dt1::{read_dt1, write_dt1, DT1_MAGIC};
pub use grad::numeric_gradient;
pub use ops::{
    activation, batch_norm_inference, concat, conv2d, gelu, global_pool, layer_norm, linear, matmul, pool2d, sigmoid,
    softmax_lastaxis, upsample_nearest2x, Activation, BatchNormParams, PoolKind,
};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!("shape {shape:?} holds {numel} elements but {} were given", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension in {shape:?}");
        let numel = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; numel] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(&mut f).collect();
        Self::new(shape.to_vec(), data).expect("from_fn shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interprets the tensor as `C×H×W`.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!("expected a C×H×W tensor, got {:?}", self.shape))),
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("elementwise op on {:?} and {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    /// Permutes axes; `perm[i]` names the source axis that becomes axis `i`.
    pub fn transpose(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape(format!("invalid permutation {perm:?} for rank {rank}")));
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides = strides(&self.shape);
        let mut data = Vec::with_capacity(self.numel());
        let mut index = vec![0usize; rank];
        for _ in 0..self.numel() {
            let offset: usize = (0..rank).map(|i| index[i] * src_strides[perm[i]]).sum();
            data.push(self.data[offset]);
            for axis in (0..rank).rev() {
                index[axis] += 1;
                if index[axis] < new_shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Tensor::new(new_shape, data)
    }

    /// `C×H×W` → `H×W×C`.
    pub fn chw_to_hwc(&self) -> Result<Tensor> {
        self.chw()?;
        self.transpose(&[1, 2, 0])
    }

    /// `H×W×C` → `C×H×W`.
    pub fn hwc_to_chw(&self) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::shape(format!("expected H×W×C, got {:?}", self.shape)));
        }
        self.transpose(&[2, 0, 1])
    }

    /// Half-open slice `[start, end)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        if axis >= self.rank() || start >= end || end > self.shape[axis] {
            return Err(Error::shape(format!("slice {start}..{end} on axis {axis} of {:?}", self.shape)));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let span = self.shape[axis] * inner;
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * span;
            data.extend_from_slice(&self.data[base + start * inner..base + end * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = end - start;
        Tensor::new(shape, data)
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn transpose_roundtrip() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| i as f32);
        let hwc = t.chw_to_hwc().unwrap();
        assert_eq!(hwc.shape(), &[3, 4, 2]);
        // element (c=1, y=2, x=3) lands at (2, 3, 1)
        assert_eq!(hwc.data()[(2 * 4 + 3) * 2 + 1], t.data()[12 + 2 * 4 + 3]);
        assert_eq!(hwc.hwc_to_chw().unwrap(), t);
    }

    #[test]
    fn slice_middle_axis() {
        let t = Tensor::from_fn(&[2, 3, 2], |i| i as f32);
        let s = t.slice(1, 1, 3).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.data(), &[2.0, 3.0, 4.0, 5.0, 8.0, 9.0, 10.0, 11.0]);
        assert!(t.slice(1, 2, 2).is_err());
    }
}
