//! Dense `f32` tensor with a designated channel axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("channel axis {axis} out of range for rank {rank}")]
    ChannelAxis { axis: usize, rank: usize },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Mismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("shape {shape:?} has a zero-sized dimension")]
    Empty { shape: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    channel_axis: usize,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>, channel_axis: usize) -> Result<Self, ShapeError> {
        if shape.contains(&0) {
            return Err(ShapeError::Empty { shape });
        }
        if channel_axis >= shape.len().max(1) {
            return Err(ShapeError::ChannelAxis {
                axis: channel_axis,
                rank: shape.len(),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ShapeError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            channel_axis,
        })
    }

    /// Zero tensor; the channel axis is 1 for rank ≥ 2 and 0 otherwise.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
            channel_axis: default_channel_axis(shape.len()),
        }
    }

    /// Builds a tensor with the default channel axis.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self, ShapeError> {
        Tensor::new(shape.to_vec(), data, default_channel_axis(shape.len()))
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channel_axis(&self) -> usize {
        self.channel_axis
    }

    pub fn channels(&self) -> usize {
        self.shape[self.channel_axis]
    }

    /// Number of contiguous elements per channel run (product of the axes
    /// after the channel axis).
    pub fn inner_len(&self) -> usize {
        self.shape[self.channel_axis + 1..].iter().product()
    }

    /// Number of channel blocks (product of the axes before the channel axis).
    pub fn outer_len(&self) -> usize {
        self.shape[..self.channel_axis].iter().product()
    }

    pub fn channel_of(&self, flat_index: usize) -> usize {
        (flat_index / self.inner_len()) % self.channels()
    }

    /// Same data under a different shape with the given channel axis.
    pub fn reshape(self, shape: &[usize], channel_axis: usize) -> Result<Self, ShapeError> {
        Tensor::new(shape.to_vec(), self.data, channel_axis)
    }

    /// Copy of the same shape with every element mapped through `f`.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            channel_axis: self.channel_axis,
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<(), ShapeError> {
        if self.shape != other.shape {
            return Err(ShapeError::Mismatch {
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn default_channel_axis(rank: usize) -> usize {
    if rank >= 2 {
        1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_indexing_nchw() {
        let t = Tensor::zeros(&[2, 3, 2, 2]);
        assert_eq!(t.channels(), 3);
        assert_eq!(t.inner_len(), 4);
        assert_eq!(t.outer_len(), 2);
        assert_eq!(t.channel_of(0), 0);
        assert_eq!(t.channel_of(4), 1);
        assert_eq!(t.channel_of(11), 2);
        assert_eq!(t.channel_of(12), 0);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(
            Tensor::from_vec(&[2, 2], vec![0.0; 3]),
            Err(ShapeError::DataLength { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![2], vec![0.0; 2], 1),
            Err(ShapeError::ChannelAxis { .. })
        ));
        assert!(Tensor::from_vec(&[0, 2], vec![]).is_err());
    }
}
