//! Experiment configuration.

use std::path::{Path, PathBuf};

use nkem::kernel::KernelParams;
use nkem::neural::{AdamConfig, NetDescriptor};
use nkem::phantom::{FramingSchedule, PhantomSpec, StudyConfig, TimeWindow};
use nkem::recon::{AdmmOptions, Method, NeuralKemOptions};
use nkem::tomo::{Grid, ProjGeometry};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub pixel_size_mm: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { nx: 64, ny: 64, pixel_size_mm: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub n_angles: usize,
    /// Radial bins; enough to cover the grid diagonal when absent.
    pub n_bins: Option<usize>,
    /// Bin pitch; the pixel size when absent.
    pub bin_size_mm: Option<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection { n_angles: 64, n_bins: None, bin_size_mm: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    /// Ellipse list; the built-in brain when empty.
    pub ellipses: Vec<nkem::phantom::EllipseSpec>,
}


#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// Frame durations in seconds; the 24-frame one hour protocol when absent.
    pub durations_s: Option<Vec<f64>>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub target_total_counts: f64,
    pub background_fraction: f64,
    pub n_realizations: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection { target_total_counts: 1.1e7, background_fraction: 0.2, n_realizations: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositeSource {
    /// Each realization's own counts.
    Noisy,
    /// The expected counts, shared by all realizations.
    Noisefree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub k: usize,
    pub sigma: f64,
    pub window_half_width: Option<usize>,
    pub row_normalize: bool,
    /// Lengths of the composite windows; they must tile the scan.
    pub composite_windows_s: Vec<f64>,
    pub composite_iters: usize,
    pub composite_source: CompositeSource,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            k: 24,
            sigma: 1.0,
            window_half_width: Some(4),
            row_normalize: false,
            composite_windows_s: vec![1200.0; 3],
            composite_iters: 60,
            composite_source: CompositeSource::Noisy,
        }
    }
}

impl KernelSection {
    pub fn params(&self) -> KernelParams {
        KernelParams {
            k: self.k,
            sigma: self.sigma,
            window_half_width: self.window_half_width,
            row_normalize: self.row_normalize,
        }
    }

    pub fn windows(&self) -> Vec<TimeWindow> {
        nkem::phantom::composite_windows(&self.composite_windows_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub base_channels: usize,
    pub scales: usize,
    pub out_bias: f64,
    pub precision: Precision,
    /// Initialization seed; derived from the experiment seed when absent.
    pub seed: Option<u64>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { base_channels: 12, scales: 3, out_bias: 1.0, precision: Precision::F32, seed: None }
    }
}

impl NetworkSection {
    pub fn descriptor(&self, in_channels: usize) -> NetDescriptor {
        NetDescriptor {
            in_channels,
            base_channels: self.base_channels,
            scales: self.scales,
            out_bias: self.out_bias,
            bypass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmSection {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconSection {
    pub iterations: usize,
    /// Methods run by `recon` without `--method`.
    pub methods: Vec<Method>,
    /// Frame indices (0-based) to reconstruct.
    pub frames: Vec<usize>,
    /// Iterations at which images are saved; also the evaluation points.
    pub checkpoints: Vec<usize>,
    #[serde(default)]
    pub mlem: EmSection,
    #[serde(default)]
    pub kem: EmSection,
    #[serde(default = "default_neural", rename = "neural-kem")]
    pub neural_kem: NeuralKemOptions,
    #[serde(default = "default_neural", rename = "dip-ot")]
    pub dip_ot: NeuralKemOptions,
    #[serde(default, rename = "dip-admm")]
    pub dip_admm: AdmmOptions,
}

fn default_neural() -> NeuralKemOptions {
    NeuralKemOptions { subiters: 60, adam: AdamConfig { lr: 3e-3, ..Default::default() }, ..Default::default() }
}

impl Default for ReconSection {
    fn default() -> Self {
        ReconSection {
            iterations: 60,
            methods: vec![Method::Mlem, Method::Kem, Method::NeuralKem],
            frames: vec![1, 11, 12],
            checkpoints: (1..=6).map(|i| 10 * i).collect(),
            mlem: EmSection {},
            kem: EmSection {},
            neural_kem: default_neural(),
            dip_ot: default_neural(),
            dip_admm: AdmmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Phantom region names used for bias/SD.
    pub rois: Vec<String>,
    /// Frames exported as images by `report`; all reconstructed frames when absent.
    pub image_frames: Option<Vec<usize>>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { rois: vec!["blood".into(), "tumor".into()], image_frames: None }
    }
}

/// Whole experiment. Every section and key is optional; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory, relative to the config file.
    pub out_dir: Option<PathBuf>,
    pub grid: GridSection,
    pub geometry: GeometrySection,
    pub phantom: PhantomSection,
    pub schedule: ScheduleSection,
    pub simulation: SimulationSection,
    pub kernel: KernelSection,
    pub network: NetworkSection,
    pub recon: ReconSection,
    pub eval: EvalSection,
}

pub const DEFAULT_SEED: u64 = 42;

impl ExperimentConfig {
    pub fn desk() -> Self {
        ExperimentConfig { seed: DEFAULT_SEED, ..Default::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(out) = &cfg.out_dir {
            if out.is_relative() {
                cfg.out_dir = Some(base.join(out));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        self.grid().map_err(|e| ConfigError(e.to_string()))?;
        self.geometry().map_err(|e| ConfigError(e.to_string()))?;
        let schedule = self.schedule().map_err(|e| ConfigError(e.to_string()))?;
        if let Some(&m) = self.recon.frames.iter().find(|&&m| m >= schedule.len()) {
            return err(format!("recon frame {m} is outside the {}-frame schedule", schedule.len()));
        }
        if self.recon.frames.is_empty() {
            return err("recon.frames is empty".into());
        }
        if self.recon.iterations == 0 {
            return err("recon.iterations must be at least 1".into());
        }
        if let Some(&c) = self.recon.checkpoints.iter().find(|&&c| c == 0 || c > self.recon.iterations) {
            return err(format!("checkpoint {c} is outside 1..={}", self.recon.iterations));
        }
        if self.simulation.n_realizations == 0 {
            return err("simulation.n_realizations must be at least 1".into());
        }
        for e in &self.phantom.ellipses {
            if e.label >= nkem::phantom::REGION_NAMES.len() {
                return err(format!("phantom ellipse label {} is not a known region", e.label));
            }
            if !(e.semi_axes[0] > 0.0 && e.semi_axes[1] > 0.0) {
                return err("phantom ellipse semi-axes must be positive".into());
            }
        }
        for roi in &self.eval.rois {
            if !nkem::phantom::REGION_NAMES.contains(&roi.as_str()) {
                return err(format!("unknown ROI region '{roi}'"));
            }
        }
        if self.kernel.composite_windows_s.is_empty() {
            return err("kernel.composite_windows_s is empty".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> nkem::Result<Grid> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.pixel_size_mm)
    }

    pub fn geometry(&self) -> nkem::Result<ProjGeometry> {
        let grid = self.grid()?;
        let cover = ProjGeometry::covering(&grid, self.geometry.n_angles);
        ProjGeometry::new(
            self.geometry.n_angles,
            self.geometry.n_bins.unwrap_or(cover.n_bins),
            self.geometry.bin_size_mm.unwrap_or(cover.bin_size),
        )
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        if self.phantom.ellipses.is_empty() {
            PhantomSpec::brain()
        } else {
            PhantomSpec { ellipses: self.phantom.ellipses.clone() }
        }
    }

    pub fn schedule(&self) -> nkem::Result<FramingSchedule> {
        match &self.schedule.durations_s {
            Some(d) => FramingSchedule::new(d.clone()),
            None => Ok(FramingSchedule::protocol_24()),
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            background_fraction: self.simulation.background_fraction,
            target_total_counts: self.simulation.target_total_counts,
            n_realizations: self.simulation.n_realizations,
            seed: self.seed,
        }
    }

    pub fn network_seed(&self) -> u64 {
        self.network.seed.unwrap_or_else(|| nkem::rng::derive_seed(self.seed, 0x6e6e))
    }

    pub fn neural_options(&self, method: Method) -> Option<&NeuralKemOptions> {
        match method {
            Method::NeuralKem => Some(&self.recon.neural_kem),
            Method::DipOt => Some(&self.recon.dip_ot),
            _ => None,
        }
    }

    pub fn adam(&self, method: Method) -> Option<AdamConfig> {
        match method {
            Method::DipAdmm => Some(self.recon.dip_admm.adam),
            m => self.neural_options(m).map(|o| o.adam),
        }
    }
}
