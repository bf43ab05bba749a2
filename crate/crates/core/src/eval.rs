//! Image MSE, ROI statistics and ensemble bias/SD.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::phantom::Phantom;

/// `10 log10(|xhat - x|^2 / |x|^2)`; `-inf` when the images are identical.
pub fn image_mse_db(xhat: &[f64], xtrue: &[f64]) -> Result<f64> {
    check_len("reconstructed image", xtrue.len(), xhat.len())?;
    let den: f64 = xtrue.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::InvalidParameter("reference image is all zero".into()));
    }
    let num: f64 = xhat.iter().zip(xtrue).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(10.0 * (num / den).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiMask {
    pub name: String,
    pub pixels: Vec<usize>,
}

impl RoiMask {
    pub fn new(name: impl Into<String>, pixels: Vec<usize>, n_pixels: usize) -> Result<Self> {
        let name = name.into();
        if pixels.is_empty() {
            return Err(Error::InvalidParameter(format!("ROI '{name}' is empty")));
        }
        if let Some(&j) = pixels.iter().find(|&&j| j >= n_pixels) {
            return Err(Error::InvalidParameter(format!("ROI '{name}' pixel {j} is outside the image")));
        }
        Ok(RoiMask { name, pixels })
    }

    /// Pixels of phantom region `label`.
    pub fn from_phantom(phantom: &Phantom, label: usize) -> Result<Self> {
        let name = phantom
            .region_names
            .get(label)
            .cloned()
            .ok_or_else(|| Error::InvalidParameter(format!("unknown region {label}")))?;
        Self::new(name, phantom.region_pixels(label), phantom.labels.len())
    }

    fn values<'a>(&'a self, x: &'a [f64]) -> Result<impl Iterator<Item = f64> + 'a> {
        if let Some(&j) = self.pixels.iter().find(|&&j| j >= x.len()) {
            return Err(Error::InvalidParameter(format!("ROI '{}' pixel {j} is outside the image", self.name)));
        }
        Ok(self.pixels.iter().map(move |&j| x[j]))
    }
}

pub fn roi_mean(x: &[f64], roi: &RoiMask) -> Result<f64> {
    if roi.pixels.is_empty() {
        return Err(Error::InvalidParameter(format!("ROI '{}' is empty", roi.name)));
    }
    Ok(roi.values(x)?.sum::<f64>() / roi.pixels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub means: Vec<f64>,
    pub c_true: f64,
    /// `|mean(c) - c_true| / c_true`
    pub bias: f64,
    /// Sample standard deviation of `c` over `c_true`.
    pub sd: f64,
}

impl EnsembleResult {
    pub fn n_realizations(&self) -> usize {
        self.means.len()
    }
}

pub fn ensemble_bias_sd(c: &[f64], c_true: f64) -> Result<EnsembleResult> {
    if !(c_true > 0.0) {
        return Err(Error::InvalidParameter(format!("true ROI value must be positive, got {c_true}")));
    }
    if c.len() < 2 {
        return Err(Error::InvalidParameter("ensemble SD needs at least two realizations".into()));
    }
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(EnsembleResult {
        means: c.to_vec(),
        c_true,
        bias: (mean - c_true).abs() / c_true,
        sd: var.sqrt() / c_true,
    })
}

/// Coefficient of variation over a background ROI.
pub fn noise_sd_background(x: &[f64], roi: &RoiMask) -> Result<f64> {
    if roi.pixels.len() < 2 {
        return Err(Error::InvalidParameter(format!("ROI '{}' needs at least two pixels", roi.name)));
    }
    let mean = roi_mean(x, roi)?;
    if mean == 0.0 {
        return Err(Error::InvalidParameter(format!("ROI '{}' has zero mean", roi.name)));
    }
    let n = roi.pixels.len() as f64;
    let var = roi.values(x)?.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() / mean.abs())
}
