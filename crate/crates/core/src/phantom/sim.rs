use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FramingSchedule, Phantom, TacTable};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tomo::{self, Grid, Image, ProjGeometry, SparseMatrix};

/// Poisson variate. Sequential-search inversion below `lambda = 30`, above
/// that a continuity-corrected normal approximation clamped at zero.
pub fn poisson(rng: &mut Rng, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda < 30.0 {
        let u: f64 = rng.random();
        let mut k = 0u32;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        k as f64
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (lambda + lambda.sqrt() * z + 0.5).floor().max(0.0)
    }
}

/// Frame images from the label map: pixel value is the TAC of its region.
pub fn synthesize_frames(phantom: &Phantom, tacs: &TacTable, schedule: &FramingSchedule) -> Result<Vec<Image<f64>>> {
    let n_regions = phantom.labels.iter().max().map_or(0, |&m| m + 1);
    tacs.validate(n_regions, schedule.len())?;
    (0..schedule.len())
        .map(|m| {
            Image::new(
                phantom.grid,
                phantom.labels.iter().map(|&l| tacs.values[l][m]).collect(),
            )
        })
        .collect()
}

/// Expected and sampled data of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCounts {
    /// `c P x`, without background.
    pub trues: Vec<f64>,
    /// Uniform background `r`.
    pub background: Vec<f64>,
    /// Poisson draw of `trues + background`.
    pub noisy: Vec<f64>,
}

/// Samples one frame given the frame scale `c` (global scale times duration).
///
/// The background is uniform with total `bf / (1 - bf)` times the true
/// counts, so it makes up the fraction `bf` of the expected total.
pub fn sample_frame(
    p: &SparseMatrix<f64>,
    x_true: &[f64],
    frame_scale: f64,
    background_fraction: f64,
    seed: u64,
) -> Result<FrameCounts> {
    if !(0.0..1.0).contains(&background_fraction) {
        return Err(Error::InvalidParameter(format!(
            "background fraction must be in [0, 1), got {background_fraction}"
        )));
    }
    let mut trues = tomo::forward_project(p, x_true)?;
    trues.iter_mut().for_each(|v| *v *= frame_scale);
    let total: f64 = trues.iter().sum();
    let level = background_fraction / (1.0 - background_fraction) * total / trues.len() as f64;
    let background = vec![level; trues.len()];
    let mut rng = rng::seeded(seed);
    let noisy = trues
        .iter()
        .zip(&background)
        .map(|(&t, &r)| poisson(&mut rng, t + r))
        .collect();
    Ok(FrameCounts { trues, background, noisy })
}

/// Single-frame simulation scaled so the expected total is
/// `target_total_counts`. Returns the counts and the applied scale.
pub fn simulate_counts(
    p: &SparseMatrix<f64>,
    x_true: &[f64],
    duration_s: f64,
    background_fraction: f64,
    target_total_counts: f64,
    seed: u64,
) -> Result<(FrameCounts, f64)> {
    let scale = study_scale(p, &[x_true.to_vec()], &[duration_s], background_fraction, target_total_counts)?;
    let counts = sample_frame(p, x_true, scale * duration_s, background_fraction, seed)?;
    Ok((counts, scale))
}

/// Global scale mapping activity x seconds onto expected counts so that the
/// whole study (trues plus background) sums to `target_total_counts`.
fn study_scale(
    p: &SparseMatrix<f64>,
    frames: &[Vec<f64>],
    durations: &[f64],
    background_fraction: f64,
    target_total_counts: f64,
) -> Result<f64> {
    if !(target_total_counts > 0.0) {
        return Err(Error::InvalidParameter("target total counts must be positive".into()));
    }
    if !(0.0..1.0).contains(&background_fraction) {
        return Err(Error::InvalidParameter(format!(
            "background fraction must be in [0, 1), got {background_fraction}"
        )));
    }
    let mut weighted = 0.0;
    for (x, &d) in frames.iter().zip(durations) {
        weighted += d * tomo::forward_project(p, x)?.iter().sum::<f64>();
    }
    if !(weighted > 0.0) {
        return Err(Error::InvalidParameter("expected projections are all zero".into()));
    }
    Ok(target_total_counts * (1.0 - background_fraction) / weighted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub background_fraction: f64,
    pub target_total_counts: f64,
    pub n_realizations: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            background_fraction: 0.2,
            target_total_counts: 8.0e6,
            n_realizations: 10,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub seed: u64,
    /// Counts per frame.
    pub noisy: Vec<Vec<f64>>,
}

/// A simulated dynamic acquisition with its noise realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicStudy {
    pub grid: Grid,
    pub geometry: ProjGeometry,
    pub schedule: FramingSchedule,
    pub seed: u64,
    pub scale: f64,
    pub background_fraction: f64,
    pub true_images: Vec<Vec<f64>>,
    pub noisefree: Vec<Vec<f64>>,
    pub background: Vec<Vec<f64>>,
    pub realizations: Vec<Realization>,
}

/// Forward projects every frame, scales to the target count level and draws
/// `n_realizations` Poisson realizations. Realization `r`, frame `m` uses
/// seed `derive_seed(derive_seed(seed, r), m)`.
pub fn simulate_study(
    p: &SparseMatrix<f64>,
    grid: &Grid,
    geometry: &ProjGeometry,
    frames: &[Image<f64>],
    schedule: &FramingSchedule,
    cfg: &StudyConfig,
) -> Result<DynamicStudy> {
    if frames.len() != schedule.len() {
        return Err(Error::DimensionMismatch { what: "frame images", expected: schedule.len(), got: frames.len() });
    }
    let true_images: Vec<Vec<f64>> = frames.iter().map(|f| f.data.clone()).collect();
    let scale = study_scale(p, &true_images, schedule.durations(), cfg.background_fraction, cfg.target_total_counts)?;

    let mut noisefree = Vec::with_capacity(frames.len());
    let mut background = Vec::with_capacity(frames.len());
    let mut realizations: Vec<Realization> = (0..cfg.n_realizations)
        .map(|r| Realization { seed: rng::derive_seed(cfg.seed, r as u64), noisy: Vec::new() })
        .collect();
    for (m, x) in true_images.iter().enumerate() {
        let c = scale * schedule.durations()[m];
        for real in realizations.iter_mut() {
            let fc = sample_frame(p, x, c, cfg.background_fraction, rng::derive_seed(real.seed, m as u64))?;
            real.noisy.push(fc.noisy);
            if noisefree.len() == m {
                noisefree.push(fc.trues);
                background.push(fc.background);
            }
        }
        if cfg.n_realizations == 0 {
            let fc = sample_frame(p, x, c, cfg.background_fraction, 0)?;
            noisefree.push(fc.trues);
            background.push(fc.background);
        }
    }
    Ok(DynamicStudy {
        grid: *grid,
        geometry: *geometry,
        schedule: schedule.clone(),
        seed: cfg.seed,
        scale,
        background_fraction: cfg.background_fraction,
        true_images,
        noisefree,
        background,
        realizations,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyManifest {
    grid: Grid,
    geometry: ProjGeometry,
    frame_durations: Vec<f64>,
    frame_starts: Vec<f64>,
    seed: u64,
    scale: f64,
    background_fraction: f64,
    realization_seeds: Vec<u64>,
}

impl DynamicStudy {
    pub fn n_frames(&self) -> usize {
        self.schedule.len()
    }

    /// Multiplier of `P` in the forward model of frame `m`.
    pub fn frame_scale(&self, m: usize) -> f64 {
        self.scale * self.schedule.durations()[m]
    }

    pub fn expected_total(&self, m: usize) -> f64 {
        self.noisefree[m].iter().sum::<f64>() + self.background[m].iter().sum::<f64>()
    }

    /// Relative file names written by [`DynamicStudy::save`].
    pub fn file_names(&self) -> Vec<String> {
        let mut names = vec!["study.toml".to_string()];
        for m in 0..self.n_frames() {
            names.push(format!("truth/frame_{m:02}.f64"));
            names.push(format!("noisefree/frame_{m:02}.f64"));
            names.push(format!("background/frame_{m:02}.f64"));
            for r in 0..self.realizations.len() {
                names.push(format!("real_{r:02}/frame_{m:02}.f64"));
            }
        }
        names
    }

    /// Directory layout: `study.toml` plus one raw little-endian f64 array
    /// per frame under `truth/`, `noisefree/`, `background/`, `real_RR/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = StudyManifest {
            grid: self.grid,
            geometry: self.geometry,
            frame_durations: self.schedule.durations().to_vec(),
            frame_starts: self.schedule.starts().to_vec(),
            seed: self.seed,
            scale: self.scale,
            background_fraction: self.background_fraction,
            realization_seeds: self.realizations.iter().map(|r| r.seed).collect(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("study.toml"), text)?;
        for sub in ["truth", "noisefree", "background"] {
            std::fs::create_dir_all(dir.join(sub))?;
        }
        for m in 0..self.n_frames() {
            let f = format!("frame_{m:02}.f64");
            tomo::write_raw(dir.join("truth").join(&f), &self.true_images[m])?;
            tomo::write_raw(dir.join("noisefree").join(&f), &self.noisefree[m])?;
            tomo::write_raw(dir.join("background").join(&f), &self.background[m])?;
        }
        for (r, real) in self.realizations.iter().enumerate() {
            let sub = dir.join(format!("real_{r:02}"));
            std::fs::create_dir_all(&sub)?;
            for (m, counts) in real.noisy.iter().enumerate() {
                tomo::write_raw(sub.join(format!("frame_{m:02}.f64")), counts)?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("study.toml"))?;
        let man: StudyManifest = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        let schedule = FramingSchedule::new(man.frame_durations)?;
        let (j, n) = (man.grid.len(), man.geometry.len());
        let mut true_images = Vec::new();
        let mut noisefree = Vec::new();
        let mut background = Vec::new();
        for m in 0..schedule.len() {
            let f = format!("frame_{m:02}.f64");
            true_images.push(tomo::read_raw(dir.join("truth").join(&f), j)?);
            noisefree.push(tomo::read_raw(dir.join("noisefree").join(&f), n)?);
            background.push(tomo::read_raw(dir.join("background").join(&f), n)?);
        }
        let realizations = man
            .realization_seeds
            .iter()
            .enumerate()
            .map(|(r, &seed)| {
                let sub = dir.join(format!("real_{r:02}"));
                let noisy = (0..schedule.len())
                    .map(|m| tomo::read_raw(sub.join(format!("frame_{m:02}.f64")), n))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Realization { seed, noisy })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DynamicStudy {
            grid: man.grid,
            geometry: man.geometry,
            schedule,
            seed: man.seed,
            scale: man.scale,
            background_fraction: man.background_fraction,
            true_images,
            noisefree,
            background,
            realizations,
        })
    }
}
