use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square-pixel 2D image grid centred on the scanner axis.
///
/// Pixel `(ix, iy)` has flat index `iy * nx + ix`; `iy = 0` is the row at the
/// smallest `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Pixel side length in mm.
    pub pixel_size: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, pixel_size: f64) -> Result<Self> {
        let g = Grid { nx, ny, pixel_size };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Geometry(format!(
                "grid must be at least 2x2, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::Geometry(format!(
                "pixel size must be positive, got {}",
                self.pixel_size
            )));
        }
        Ok(())
    }

    /// Number of pixels `J`.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_min(&self) -> f64 {
        -0.5 * self.nx as f64 * self.pixel_size
    }

    pub fn y_min(&self) -> f64 {
        -0.5 * self.ny as f64 * self.pixel_size
    }

    /// Centre of pixel `j` in mm.
    pub fn pixel_center(&self, j: usize) -> (f64, f64) {
        let (ix, iy) = (j % self.nx, j / self.nx);
        (
            self.x_min() + (ix as f64 + 0.5) * self.pixel_size,
            self.y_min() + (iy as f64 + 0.5) * self.pixel_size,
        )
    }
}

/// Parallel-beam sampling: `n_angles` views uniformly over `[0, pi)` with
/// `n_bins` radial bins centred on the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjGeometry {
    pub n_angles: usize,
    pub n_bins: usize,
    /// Radial bin width in mm.
    pub bin_size: f64,
}

impl ProjGeometry {
    pub fn new(n_angles: usize, n_bins: usize, bin_size: f64) -> Result<Self> {
        let g = ProjGeometry { n_angles, n_bins, bin_size };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angles == 0 || self.n_bins == 0 {
            return Err(Error::Geometry("geometry needs at least one angle and one bin".into()));
        }
        if !(self.bin_size > 0.0 && self.bin_size.is_finite()) {
            return Err(Error::Geometry(format!("bin size must be positive, got {}", self.bin_size)));
        }
        Ok(())
    }

    /// Number of sinogram bins `N`.
    pub fn len(&self) -> usize {
        self.n_angles * self.n_bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn angle(&self, a: usize) -> f64 {
        a as f64 * std::f64::consts::PI / self.n_angles as f64
    }

    /// Signed radial offset of bin `b` in mm.
    pub fn bin_offset(&self, b: usize) -> f64 {
        (b as f64 - 0.5 * (self.n_bins as f64 - 1.0)) * self.bin_size
    }

    /// Smallest geometry whose bins cover the grid diagonal at the pixel pitch.
    pub fn covering(grid: &Grid, n_angles: usize) -> Self {
        let diag = ((grid.nx * grid.nx + grid.ny * grid.ny) as f64).sqrt();
        ProjGeometry {
            n_angles,
            n_bins: diag.ceil() as usize,
            bin_size: grid.pixel_size,
        }
    }
}
