use super::BnnError;
use crate::tensor::Tensor;

/// In-memory labelled samples stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_shape: Vec<usize>,
    pub classes: usize,
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(
        sample_shape: Vec<usize>,
        classes: usize,
        images: Vec<f32>,
        labels: Vec<u8>,
    ) -> Result<Self, BnnError> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || images.len() != per * labels.len() {
            return Err(BnnError::Geometry(format!(
                "{} values cannot hold {} samples of shape {sample_shape:?}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(BnnError::Label { label, classes });
        }
        Ok(Dataset {
            sample_shape,
            classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Stacks the selected samples into a `[B, ...sample_shape]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<u8>), BnnError> {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Ok((Tensor::from_vec(&shape, data)?, labels))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            images.extend_from_slice(self.sample(i));
        }
        Dataset {
            sample_shape: self.sample_shape.clone(),
            classes: self.classes,
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
