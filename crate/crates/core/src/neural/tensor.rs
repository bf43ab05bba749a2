use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

/// Dense `channels x height x width` array, row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: [usize; 3],
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: [usize; 3], data: Vec<T>) -> Result<Self> {
        check_len("tensor data", shape.iter().product(), data.len())?;
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Tensor { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    /// Stacks equally sized images as channels.
    pub fn from_channels(channels: &[Vec<T>], height: usize, width: usize) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidParameter("tensor needs at least one channel".into()));
        }
        let mut data = Vec::with_capacity(channels.len() * height * width);
        for c in channels {
            check_len("tensor channel", height * width, c.len())?;
            data.extend_from_slice(c);
        }
        Ok(Tensor { shape: [channels.len(), height, width], data })
    }

    /// Stacks channels after standardizing each to zero mean and unit
    /// population variance (constant channels are only centred).
    pub fn standardized(channels: &[Vec<T>], height: usize, width: usize) -> Result<Self> {
        let mut t = Self::from_channels(channels, height, width)?;
        let n = height * width;
        for c in t.data.chunks_mut(n) {
            let mean = c.iter().copied().sum::<T>() / T::lit(n as f64);
            let std = (c.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::lit(n as f64)).sqrt();
            let inv = if std > T::zero() { T::one() / std } else { T::one() };
            c.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        }
        Ok(t)
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn plane(&self) -> usize {
        self.shape[1] * self.shape[2]
    }

    pub fn channel(&self, c: usize) -> &[T] {
        &self.data[c * self.plane()..(c + 1) * self.plane()]
    }

    pub fn convert<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: crate::scalar::convert(&self.data) }
    }
}
