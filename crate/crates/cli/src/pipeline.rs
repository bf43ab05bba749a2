//! The experiment stages. Each stage reads what earlier stages wrote under
//! the output directory and records its own files in the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use nkem::eval::{ensemble_bias_sd, image_mse_db, roi_mean, RoiMask};
use nkem::kernel::KernelModel;
use nkem::neural::{NetParams, Tensor, UNet};
use nkem::phantom::{self, composite_frames, default_tacs, make_phantom, DynamicStudy, Phantom, REGION_NAMES};
use nkem::recon::{self, ForwardModel, Method, ReconOutput, RunOptions};
use nkem::tomo::{build_system_matrix, SparseMatrix};
use nkem::Real;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CompositeSource, ExperimentConfig, Precision};
use crate::io::{self, ImageSidecar, Window};
use crate::manifest::{RunManifest, StageWriter};

pub const STAGES: [&str; 6] = ["phantom", "simulate", "build-kernel", "recon", "eval", "report"];

/// Output directory plus the configuration that fills it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
}

fn stage_dir(stage: &str) -> &'static str {
    match stage {
        "phantom" => "phantom",
        "simulate" => "study",
        "build-kernel" => "kernel",
        "recon" => "recon",
        "eval" => "eval",
        _ => "report",
    }
}

fn frame_tag(m: usize) -> String {
    format!("f{m:02}")
}

fn real_tag(r: usize) -> String {
    format!("r{r:02}")
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig, out_dir: impl Into<PathBuf>) -> Self {
        Experiment { cfg, out_dir: out_dir.into() }
    }

    fn dir(&self, stage: &str) -> PathBuf {
        self.out_dir.join(stage_dir(stage))
    }

    /// Empties the stage directory and returns a writer for it.
    fn begin(&self, stage: &str) -> anyhow::Result<StageWriter> {
        let dir = self.dir(stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        std::fs::create_dir_all(&dir)?;
        Ok(StageWriter::new(&self.out_dir))
    }

    fn commit(&self, stage: &str, writer: StageWriter, seeds: Option<Vec<u64>>) -> anyhow::Result<()> {
        let mut manifest = RunManifest::open(&self.out_dir, &self.cfg)?;
        if let Some(s) = seeds {
            manifest.realization_seeds = s;
        }
        manifest.stages.insert(stage.to_string(), writer.finish());
        manifest.save(&self.out_dir)
    }

    fn system_matrix(&self) -> anyhow::Result<SparseMatrix<f64>> {
        Ok(build_system_matrix(&self.cfg.grid()?, &self.cfg.geometry()?)?)
    }

    fn write_image(&self, w: &mut StageWriter, path: &Path, data: &[f64], meta: &ImageSidecar) -> anyhow::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        for p in io::write_image(path, data, meta)? {
            w.record(&p);
        }
        Ok(())
    }

    fn sidecar(&self, units: &str) -> anyhow::Result<ImageSidecar> {
        Ok(ImageSidecar::new(&self.cfg.grid()?, units))
    }

    // ---- phantom

    pub fn phantom(&self) -> anyhow::Result<()> {
        let mut w = self.begin("phantom")?;
        let dir = self.dir("phantom");
        let grid = self.cfg.grid()?;
        let ph = make_phantom(&grid, &self.cfg.phantom_spec())?;
        ph.check_rois()?;
        let schedule = self.cfg.schedule()?;
        let tacs = default_tacs(&schedule);
        let frames = phantom::synthesize_frames(&ph, &tacs, &schedule)?;

        let labels: Vec<f64> = ph.labels.iter().map(|&l| l as f64).collect();
        self.write_image(&mut w, &dir.join("labels.f64"), &labels, &self.sidecar("label")?)?;
        let window = Window { min: 0.0, max: (REGION_NAMES.len() - 1) as f64 };
        io::save_pgm16(&dir.join("labels.pgm"), &labels, grid.nx, grid.ny, window)?;
        w.record_pgm(&dir.join("labels.pgm"), window);

        let mut csv = csv::Writer::from_path(dir.join("tacs.csv"))?;
        let mut header = vec!["frame".to_string(), "start_s".into(), "duration_s".into()];
        header.extend(REGION_NAMES.iter().map(|s| s.to_string()));
        csv.write_record(&header)?;
        for m in 0..schedule.len() {
            let mut row = vec![m.to_string(), schedule.starts()[m].to_string(), schedule.durations()[m].to_string()];
            row.extend(tacs.values.iter().map(|c| format!("{:.17e}", c[m])));
            csv.write_record(&row)?;
        }
        csv.flush()?;
        w.record(&dir.join("tacs.csv"));

        for (m, f) in frames.iter().enumerate() {
            let meta = ImageSidecar { frame: Some(m), ..self.sidecar("activity")? };
            self.write_image(&mut w, &dir.join("truth").join(format!("frame_{m:02}.f64")), &f.data, &meta)?;
        }
        log::info!("phantom: {}x{} grid, {} frames", grid.nx, grid.ny, frames.len());
        self.commit("phantom", w, None)
    }

    pub fn load_phantom(&self) -> anyhow::Result<Phantom> {
        let path = self.dir("phantom").join("labels.f64");
        let (labels, meta) = io::read_image(&path).with_context(|| format!("reading {}; run `phantom` first", path.display()))?;
        let grid = self.cfg.grid()?;
        if (meta.nx, meta.ny) != (grid.nx, grid.ny) {
            bail!("phantom grid {}x{} does not match the configured {}x{}", meta.nx, meta.ny, grid.nx, grid.ny);
        }
        Ok(Phantom {
            grid,
            labels: labels.iter().map(|&v| v as usize).collect(),
            region_names: REGION_NAMES.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn load_truth(&self) -> anyhow::Result<Vec<nkem::tomo::Image<f64>>> {
        let grid = self.cfg.grid()?;
        (0..self.cfg.schedule()?.len())
            .map(|m| {
                let path = self.dir("phantom").join("truth").join(format!("frame_{m:02}.f64"));
                let (data, _) = io::read_image(&path).with_context(|| format!("reading {}; run `phantom` first", path.display()))?;
                Ok(nkem::tomo::Image::new(grid, data)?)
            })
            .collect()
    }

    // ---- simulate

    pub fn simulate(&self) -> anyhow::Result<()> {
        let frames = self.load_truth()?;
        let mut w = self.begin("simulate")?;
        let dir = self.dir("simulate");
        let p = self.system_matrix()?;
        let study = phantom::simulate_study(
            &p,
            &self.cfg.grid()?,
            &self.cfg.geometry()?,
            &frames,
            &self.cfg.schedule()?,
            &self.cfg.study_config(),
        )?;
        study.save(&dir)?;
        for name in study.file_names() {
            w.record(&dir.join(name));
        }
        let totals: f64 = (0..study.n_frames()).map(|m| study.expected_total(m)).sum();
        log::info!("simulate: {} realizations, {totals:.0} expected counts", study.realizations.len());
        let seeds = study.realizations.iter().map(|r| r.seed).collect();
        self.commit("simulate", w, Some(seeds))
    }

    pub fn load_study(&self) -> anyhow::Result<DynamicStudy> {
        let dir = self.dir("simulate");
        DynamicStudy::load(&dir).with_context(|| format!("reading study in {}; run `simulate` first", dir.display()))
    }

    // ---- kernel

    fn kernel_dir(&self, r: usize) -> PathBuf {
        match self.cfg.kernel.composite_source {
            CompositeSource::Noisy => self.dir("build-kernel").join(real_tag(r)),
            CompositeSource::Noisefree => self.dir("build-kernel").join("shared"),
        }
    }

    pub fn build_kernel(&self) -> anyhow::Result<()> {
        let study = self.load_study()?;
        let mut w = self.begin("build-kernel")?;
        let p = self.system_matrix()?;
        let kc = &self.cfg.kernel;
        let grid = self.cfg.grid()?;
        let sources: Vec<Option<usize>> = match kc.composite_source {
            CompositeSource::Noisy => (0..study.realizations.len()).map(Some).collect(),
            CompositeSource::Noisefree => vec![None],
        };
        let built: Vec<(Vec<Vec<f64>>, KernelModel<f64>)> = sources
            .par_iter()
            .map(|&src| {
                let comps = composite_frames(&study, &p, src, &kc.windows(), kc.composite_iters)?;
                let model = KernelModel::from_composites(&comps, grid.nx, grid.ny, &kc.params())?;
                Ok((comps, model))
            })
            .collect::<nkem::Result<_>>()?;
        for (i, (comps, model)) in built.iter().enumerate() {
            let dir = self.kernel_dir(i);
            std::fs::create_dir_all(&dir)?;
            for (c, img) in comps.iter().enumerate() {
                self.write_image(&mut w, &dir.join(format!("composite_{c}.f64")), img, &self.sidecar("activity")?)?;
            }
            let path = dir.join("kernel.nksm");
            model.save(&path)?;
            w.record(&path);
            w.record(&nkem::kernel::sidecar_path(&path));
        }
        log::info!("build-kernel: {} kernel(s), k = {}", built.len(), kc.k);
        self.commit("build-kernel", w, None)
    }

    pub fn load_composites(&self, r: usize) -> anyhow::Result<Vec<Vec<f64>>> {
        let dir = self.kernel_dir(r);
        (0..self.cfg.kernel.composite_windows_s.len())
            .map(|c| {
                let path = dir.join(format!("composite_{c}.f64"));
                Ok(io::read_image(&path).with_context(|| format!("reading {}; run `build-kernel` first", path.display()))?.0)
            })
            .collect()
    }

    pub fn load_kernel(&self, r: usize) -> anyhow::Result<KernelModel<f64>> {
        let path = self.kernel_dir(r).join("kernel.nksm");
        KernelModel::load(&path).with_context(|| format!("reading {}; run `build-kernel` first", path.display()))
    }

    // ---- recon

    fn run_dir(&self, method: Method, m: usize, r: usize) -> PathBuf {
        self.dir("recon").join(method.name()).join(frame_tag(m)).join(real_tag(r))
    }

    /// Runs `methods` on every configured frame and realization. Results are
    /// computed in parallel and written afterwards in a fixed order.
    pub fn recon(&self, methods: &[Method]) -> anyhow::Result<()> {
        let study = self.load_study()?;
        let p = self.system_matrix()?;
        let n_real = study.realizations.len();
        let needs_kernel = methods.iter().any(|m| m.uses_kernel() || m.uses_network());
        let kernels: Vec<Option<KernelModel<f64>>> =
            (0..n_real).map(|r| if needs_kernel { self.load_kernel(r).map(Some) } else { Ok(None) }).collect::<anyhow::Result<_>>()?;
        let composites: Vec<Option<Vec<Vec<f64>>>> = (0..n_real)
            .map(|r| if needs_kernel { self.load_composites(r).map(Some) } else { Ok(None) })
            .collect::<anyhow::Result<_>>()?;

        let mut jobs = Vec::new();
        for &method in methods {
            for &m in &self.cfg.recon.frames {
                for r in 0..n_real {
                    jobs.push((method, m, r));
                }
            }
        }
        let results: Vec<RunResult> = jobs
            .par_iter()
            .map(|&(method, m, r)| {
                let input = RunInput {
                    p: &p,
                    study: &study,
                    frame: m,
                    realization: r,
                    kernel: kernels[r].as_ref(),
                    composites: composites[r].as_deref(),
                };
                let out = self.run_one(method, &input).with_context(|| format!("{} frame {m} realization {r}", method.name()))?;
                log::info!("recon {} frame {m} realization {r}: loglik {:.6e}", method.name(), out.output.state.loglik);
                Ok(out)
            })
            .collect::<anyhow::Result<_>>()?;

        let mut manifest = RunManifest::open(&self.out_dir, &self.cfg)?;
        let mut w = StageWriter::new(&self.out_dir);
        // re-running a subset of methods keeps the others' outputs
        let recon_dir = self.dir("recon");
        if let Some(old) = manifest.stages.get("recon") {
            for rel in &old.outputs {
                let kept = methods.iter().all(|m| !rel.starts_with(&format!("recon/{}/", m.name())));
                if kept {
                    w.record(&self.out_dir.join(rel));
                }
            }
        }
        for &method in methods {
            let d = recon_dir.join(method.name());
            if d.exists() {
                std::fs::remove_dir_all(&d)?;
            }
        }
        for ((method, m, r), res) in jobs.iter().zip(&results) {
            let dir = self.run_dir(*method, *m, *r);
            std::fs::create_dir_all(&dir)?;
            let trace = dir.join("trace.csv");
            recon::save_trace_csv(&res.output.trace, &trace)?;
            w.record(&trace);
            let meta = ImageSidecar { frame: Some(*m), ..self.sidecar("activity")? };
            let fin = ImageSidecar { iteration: Some(res.output.state.iter), ..meta.clone() };
            self.write_image(&mut w, &dir.join("final.f64"), &res.output.state.x, &fin)?;
            for (it, x) in &res.output.snapshots {
                let snap = ImageSidecar { iteration: Some(*it), ..meta.clone() };
                self.write_image(&mut w, &dir.join(format!("iter_{it:03}.f64")), x, &snap)?;
            }
            if let Some(params) = &res.network {
                let path = dir.join("network.nknp");
                params.save(&path)?;
                w.record(&path);
            }
        }
        manifest.stages.insert("recon".into(), w.finish());
        manifest.save(&self.out_dir)
    }

    fn run_options(&self) -> RunOptions<f64> {
        RunOptions::iterations(self.cfg.recon.iterations).with_checkpoints(self.cfg.recon.checkpoints.clone())
    }

    fn run_one(&self, method: Method, input: &RunInput) -> anyhow::Result<RunResult> {
        let study = input.study;
        let m = input.frame;
        let pc = input.p.scaled(study.frame_scale(m))?;
        let y = &study.realizations[input.realization].noisy[m];
        let r = &study.background[m];
        let opts = self.run_options();
        match method {
            Method::Mlem => Ok(RunResult { output: recon::run_mlem(&pc, y, r, &opts)?, network: None }),
            Method::Kem => {
                let k = input.kernel.context("kernel required")?;
                Ok(RunResult { output: recon::run_kem(&pc, &k.k, y, r, &opts)?, network: None })
            }
            _ => match self.cfg.network.precision {
                Precision::F32 => self.run_network::<f32>(method, input, &pc, y, r, &opts),
                Precision::F64 => self.run_network::<f64>(method, input, &pc, y, r, &opts),
            },
        }
    }

    fn run_network<T: Real>(
        &self,
        method: Method,
        input: &RunInput,
        pc: &SparseMatrix<f64>,
        y: &[f64],
        r: &[f64],
        opts: &RunOptions<f64>,
    ) -> anyhow::Result<RunResult> {
        let grid = self.cfg.grid()?;
        let comps = input.composites.context("composite images required")?;
        let comps_t: Vec<Vec<T>> = comps.iter().map(|c| nkem::scalar::convert(c)).collect();
        let z = Tensor::<T>::standardized(&comps_t, grid.ny, grid.nx)?;
        let desc = self.cfg.network.descriptor(comps.len());
        let mut net = UNet::<T>::new(&desc, grid.ny, grid.nx, self.cfg.network_seed())?;
        let output = match method {
            Method::NeuralKem => {
                let k = input.kernel.context("kernel required")?;
                let model = ForwardModel::new(pc, Some(&k.k), r)?;
                recon::run_neural_kem(&model, y, &mut net, &z, opts, &self.cfg.recon.neural_kem)?
            }
            Method::DipOt => recon::run_dip_ot(pc, y, r, &mut net, &z, opts, &self.cfg.recon.dip_ot)?,
            Method::DipAdmm => recon::run_dip_admm(pc, y, r, &mut net, &z, opts, &self.cfg.recon.dip_admm)?,
            Method::Mlem | Method::Kem => unreachable!("handled by run_one"),
        };
        Ok(RunResult { output, network: Some(net.params().convert()) })
    }

    /// Reconstruction at `iter` (a checkpoint or the last iteration).
    pub fn load_recon(&self, method: Method, m: usize, r: usize, iter: usize) -> anyhow::Result<Vec<f64>> {
        let dir = self.run_dir(method, m, r);
        let path = if self.cfg.recon.checkpoints.contains(&iter) {
            dir.join(format!("iter_{iter:03}.f64"))
        } else if iter == self.cfg.recon.iterations {
            dir.join("final.f64")
        } else {
            bail!("iteration {iter} was not saved");
        };
        Ok(io::read_image(&path).with_context(|| format!("reading {}; run `recon` first", path.display()))?.0)
    }

    /// Methods with reconstructions on disk, in canonical order.
    pub fn reconstructed_methods(&self) -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| self.dir("recon").join(m.name()).is_dir()).collect()
    }

    /// Checkpoints plus the final iteration, sorted.
    pub fn eval_iterations(&self) -> Vec<usize> {
        let mut its = self.cfg.recon.checkpoints.clone();
        its.push(self.cfg.recon.iterations);
        its.sort();
        its.dedup();
        its
    }

    // ---- eval

    pub fn evaluate(&self) -> anyhow::Result<EvalTables> {
        let study = self.load_study()?;
        let ph = self.load_phantom()?;
        let methods = self.reconstructed_methods();
        if methods.is_empty() {
            bail!("no reconstructions found; run `recon` first");
        }
        let rois: Vec<(usize, RoiMask)> = self
            .cfg
            .eval
            .rois
            .iter()
            .map(|name| {
                let label = REGION_NAMES.iter().position(|n| n == name).context("unknown ROI")?;
                Ok((label, RoiMask::from_phantom(&ph, label)?))
            })
            .collect::<anyhow::Result<_>>()?;
        let n_real = study.realizations.len();
        let mut tables = EvalTables::default();
        for &method in &methods {
            for &m in &self.cfg.recon.frames {
                let truth = &study.true_images[m];
                for it in self.eval_iterations() {
                    let images: Vec<Vec<f64>> =
                        (0..n_real).map(|r| self.load_recon(method, m, r, it)).collect::<anyhow::Result<_>>()?;
                    for (r, x) in images.iter().enumerate() {
                        tables.mse.push(MseRow { method, frame: m, realization: r, iteration: it, mse_db: image_mse_db(x, truth)? });
                    }
                    for (label, roi) in &rois {
                        let c_true = roi_mean(truth, roi)?;
                        let means: Vec<f64> = images.iter().map(|x| roi_mean(x, roi)).collect::<nkem::Result<_>>()?;
                        let (bias, sd) = if n_real >= 2 {
                            let e = ensemble_bias_sd(&means, c_true)?;
                            (e.bias, e.sd)
                        } else {
                            ((means[0] - c_true).abs() / c_true, f64::NAN)
                        };
                        tables.bias_sd.push(BiasSdRow {
                            method,
                            frame: m,
                            roi: REGION_NAMES[*label].to_string(),
                            iteration: it,
                            bias,
                            sd,
                            realizations: n_real,
                        });
                    }
                }
            }
        }
        Ok(tables)
    }

    pub fn eval(&self) -> anyhow::Result<EvalTables> {
        let tables = self.evaluate()?;
        let mut w = self.begin("eval")?;
        let dir = self.dir("eval");
        write_csv(&dir.join("mse.csv"), &tables.mse)?;
        write_csv(&dir.join("bias_sd.csv"), &tables.bias_sd)?;
        w.record(&dir.join("mse.csv"));
        w.record(&dir.join("bias_sd.csv"));
        self.commit("eval", w, None)?;
        Ok(tables)
    }

    // ---- report

    pub fn report(&self) -> anyhow::Result<()> {
        let tables = self.evaluate()?;
        let study = self.load_study()?;
        let grid = self.cfg.grid()?;
        let mut w = self.begin("report")?;
        let dir = self.dir("report");
        let methods = self.reconstructed_methods();
        let last = self.cfg.recon.iterations;

        // median MSE per frame (rows) and method (columns) at the last iteration
        let mut out = csv::Writer::from_path(dir.join("mse_by_frame.csv"))?;
        let mut header = vec!["frame".to_string(), "counts".into()];
        header.extend(methods.iter().map(|m| m.name().to_string()));
        out.write_record(&header)?;
        for &m in &self.cfg.recon.frames {
            let mut row = vec![(m + 1).to_string(), format!("{:.0}", study.expected_total(m))];
            for &method in &methods {
                row.push(format!("{:.6}", tables.median_mse(method, m, last)));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        w.record(&dir.join("mse_by_frame.csv"));

        // median MSE against iteration
        let mut out = csv::Writer::from_path(dir.join("mse_by_iteration.csv"))?;
        out.write_record(["method", "frame", "iteration", "median_mse_db"])?;
        for &method in &methods {
            for &m in &self.cfg.recon.frames {
                for it in self.eval_iterations() {
                    out.write_record([
                        method.name().to_string(),
                        (m + 1).to_string(),
                        it.to_string(),
                        format!("{:.6}", tables.median_mse(method, m, it)),
                    ])?;
                }
            }
        }
        out.flush()?;
        w.record(&dir.join("mse_by_iteration.csv"));

        // bias/SD curves, one file per ROI
        for roi in &self.cfg.eval.rois {
            let path = dir.join(format!("bias_sd_{roi}.csv"));
            let rows: Vec<&BiasSdRow> = tables.bias_sd.iter().filter(|r| &r.roi == roi).collect();
            let mut out = csv::Writer::from_path(&path)?;
            out.write_record(["method", "frame", "iteration", "bias_percent", "sd_percent"])?;
            for r in rows {
                out.write_record([
                    r.method.name().to_string(),
                    (r.frame + 1).to_string(),
                    r.iteration.to_string(),
                    format!("{:.4}", 100.0 * r.bias),
                    format!("{:.4}", 100.0 * r.sd),
                ])?;
            }
            out.flush()?;
            w.record(&path);
        }

        // images of the first realization, windowed on the true image
        let frames = self.cfg.eval.image_frames.clone().unwrap_or_else(|| self.cfg.recon.frames.clone());
        let img_dir = dir.join("images");
        std::fs::create_dir_all(&img_dir)?;
        for m in frames {
            let truth = study.true_images.get(m).with_context(|| format!("no frame {m}"))?;
            let window = Window { min: 0.0, max: Window::of(truth).max };
            let path = img_dir.join(format!("truth_{}.pgm", frame_tag(m)));
            io::save_pgm16(&path, truth, grid.nx, grid.ny, window)?;
            w.record_pgm(&path, window);
            for &method in &methods {
                if !self.cfg.recon.frames.contains(&m) {
                    continue;
                }
                let x = self.load_recon(method, m, 0, last)?;
                let path = img_dir.join(format!("{}_{}.pgm", method.name(), frame_tag(m)));
                io::save_pgm16(&path, &x, grid.nx, grid.ny, window)?;
                w.record_pgm(&path, window);
            }
        }
        self.commit("report", w, None)
    }

    /// All stages in order, every configured method.
    pub fn run_all(&self) -> anyhow::Result<EvalTables> {
        self.phantom()?;
        self.simulate()?;
        self.build_kernel()?;
        self.recon(&self.cfg.recon.methods)?;
        let tables = self.eval()?;
        self.report()?;
        Ok(tables)
    }
}

struct RunInput<'a> {
    p: &'a SparseMatrix<f64>,
    study: &'a DynamicStudy,
    frame: usize,
    realization: usize,
    kernel: Option<&'a KernelModel<f64>>,
    composites: Option<&'a [Vec<f64>]>,
}

struct RunResult {
    output: ReconOutput<f64>,
    network: Option<NetParams<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    #[serde(serialize_with = "method_name")]
    pub method: Method,
    pub frame: usize,
    pub realization: usize,
    pub iteration: usize,
    pub mse_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasSdRow {
    #[serde(serialize_with = "method_name")]
    pub method: Method,
    pub frame: usize,
    pub roi: String,
    pub iteration: usize,
    /// Fractions of the true ROI mean.
    pub bias: f64,
    pub sd: f64,
    pub realizations: usize,
}

fn method_name<S: serde::Serializer>(m: &Method, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(m.name())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalTables {
    pub mse: Vec<MseRow>,
    pub bias_sd: Vec<BiasSdRow>,
}

impl EvalTables {
    pub fn mse_values(&self, method: Method, frame: usize, iteration: usize) -> Vec<f64> {
        self.mse
            .iter()
            .filter(|r| r.method == method && r.frame == frame && r.iteration == iteration)
            .map(|r| r.mse_db)
            .collect()
    }

    pub fn median_mse(&self, method: Method, frame: usize, iteration: usize) -> f64 {
        median(&self.mse_values(method, frame, iteration))
    }

    pub fn bias_sd(&self, method: Method, frame: usize, roi: &str, iteration: usize) -> Option<&BiasSdRow> {
        self.bias_sd
            .iter()
            .find(|r| r.method == method && r.frame == frame && r.roi == roi && r.iteration == iteration)
    }

    /// Per-method summary keyed by method name, for logging.
    pub fn summary(&self, frame: usize, iteration: usize) -> BTreeMap<&'static str, f64> {
        Method::ALL
            .into_iter()
            .filter(|&m| !self.mse_values(m, frame, iteration).is_empty())
            .map(|m| (m.name(), self.median_mse(m, frame, iteration)))
            .collect()
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
