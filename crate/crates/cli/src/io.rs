//! Image files: raw little-endian f64 with a TOML sidecar, and 16-bit PGM.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Sidecar written next to every raw image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSidecar {
    pub nx: usize,
    pub ny: usize,
    pub pixel_size_mm: f64,
    pub dtype: String,
    pub byte_order: String,
    pub units: String,
    pub frame: Option<usize>,
    pub iteration: Option<usize>,
}

impl ImageSidecar {
    pub fn new(grid: &nkem::tomo::Grid, units: &str) -> Self {
        ImageSidecar {
            nx: grid.nx,
            ny: grid.ny,
            pixel_size_mm: grid.pixel_size,
            dtype: "f64".into(),
            byte_order: "little".into(),
            units: units.into(),
            frame: None,
            iteration: None,
        }
    }
}

/// Writes `path` (raw f64) and `path` with a `.toml` extension.
/// Returns both paths.
pub fn write_image(path: &Path, data: &[f64], meta: &ImageSidecar) -> anyhow::Result<[std::path::PathBuf; 2]> {
    anyhow::ensure!(data.len() == meta.nx * meta.ny, "image has {} pixels, sidecar says {}", data.len(), meta.nx * meta.ny);
    nkem::tomo::write_raw(path, data)?;
    let side = path.with_extension("toml");
    std::fs::write(&side, toml::to_string(meta)?)?;
    Ok([path.to_path_buf(), side])
}

pub fn read_image(path: &Path) -> anyhow::Result<(Vec<f64>, ImageSidecar)> {
    let meta: ImageSidecar = toml::from_str(&std::fs::read_to_string(path.with_extension("toml"))?)?;
    let data = nkem::tomo::read_raw(path, meta.nx * meta.ny)?;
    Ok((data, meta))
}

/// Linear display window `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub min: f64,
    pub max: f64,
}

impl Window {
    pub fn of(data: &[f64]) -> Window {
        let min = data.iter().copied().fold(f64::INFINITY, f64::min);
        let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Window { min, max }
    }
}

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples), row-major with
/// row 0 at the top.
pub fn write_pgm16<W: Write>(mut w: W, data: &[f64], nx: usize, ny: usize, window: Window) -> anyhow::Result<()> {
    anyhow::ensure!(data.len() == nx * ny, "image has {} pixels, expected {}", data.len(), nx * ny);
    write!(w, "P5\n{nx} {ny}\n65535\n")?;
    let span = window.max - window.min;
    let mut bytes = Vec::with_capacity(2 * data.len());
    for &v in data {
        let t = if span > 0.0 { ((v - window.min) / span).clamp(0.0, 1.0) } else { 0.0 };
        bytes.extend_from_slice(&((t * 65535.0).round() as u16).to_be_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn save_pgm16(path: &Path, data: &[f64], nx: usize, ny: usize, window: Window) -> anyhow::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_pgm16(&mut f, data, nx, ny, window)?;
    f.flush()?;
    Ok(())
}
