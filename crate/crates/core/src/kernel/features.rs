use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-pixel feature vectors, stored pixel-major (`data[j * dim + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    pub n_pixels: usize,
    pub dim: usize,
    pub data: Vec<T>,
    /// Indices of the input channels that were kept.
    pub channels: Vec<usize>,
    pub means: Vec<T>,
    pub stds: Vec<T>,
}

impl<T: Real> FeatureSet<T> {
    pub fn feature(&self, j: usize) -> &[T] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    /// Squared Euclidean distance between pixels `a` and `b`.
    pub fn dist2(&self, a: usize, b: usize) -> T {
        self.feature(a)
            .iter()
            .zip(self.feature(b))
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
    }

    /// Channel-major copy of the standardized features.
    pub fn channel(&self, c: usize) -> Vec<T> {
        (0..self.n_pixels).map(|j| self.data[j * self.dim + c]).collect()
    }
}

/// Standardizes each composite channel to zero mean and unit population
/// variance. Constant channels are dropped with a warning.
pub fn extract_features<T: Real>(composites: &[Vec<T>]) -> Result<FeatureSet<T>> {
    let n_pixels = composites.first().map(Vec::len).ok_or_else(|| {
        Error::InvalidParameter("at least one composite channel is required".into())
    })?;
    if n_pixels == 0 {
        return Err(Error::InvalidParameter("composite images are empty".into()));
    }
    let mut channels = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for (c, z) in composites.iter().enumerate() {
        if z.len() != n_pixels {
            return Err(Error::DimensionMismatch { what: "composite channel", expected: n_pixels, got: z.len() });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("composite channel"));
        }
        let n = T::lit(n_pixels as f64);
        let mean = z.iter().copied().sum::<T>() / n;
        let var = z.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let std = var.sqrt();
        if std <= T::epsilon() * (mean.abs() + T::one()) {
            log::warn!("composite channel {c} has zero variance and is dropped");
            continue;
        }
        channels.push(c);
        means.push(mean);
        stds.push(std);
    }
    if channels.is_empty() {
        return Err(Error::InvalidParameter("no composite channel has nonzero variance".into()));
    }
    let dim = channels.len();
    let mut data = vec![T::zero(); n_pixels * dim];
    for (k, &c) in channels.iter().enumerate() {
        for (j, &v) in composites[c].iter().enumerate() {
            data[j * dim + k] = (v - means[k]) / stds[k];
        }
    }
    Ok(FeatureSet { n_pixels, dim, data, channels, means, stds })
}
