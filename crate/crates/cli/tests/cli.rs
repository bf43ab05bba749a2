use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nkem_cli::{RunManifest, EXIT_CONFIG, EXIT_RUNTIME};

const TINY: &str = r#"
seed = 7

[grid]
nx = 32
ny = 32
pixel_size_mm = 6.0

[geometry]
n_angles = 32

[simulation]
target_total_counts = 2.0e6
n_realizations = 2

[kernel]
k = 9
window_half_width = 2
composite_iters = 10

[network]
base_channels = 2
scales = 2

[recon]
iterations = 4
methods = ["mlem", "kem", "neural-kem"]
frames = [1, 12]
checkpoints = [2, 4]

[recon.neural-kem]
subiters = 4

[recon.dip-ot]
subiters = 4

[recon.dip-admm]
train_subiters = 4
"#;

fn nkem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nkem")).args(args).env("RUST_LOG", "warn").output().expect("run nkem")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_tiny(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, TINY);
    let out = dir.join("out");
    let o = nkem(&["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "run"]);
    assert!(o.status.success(), "run failed: {}", String::from_utf8_lossy(&o.stderr));
    out
}

fn files(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    out
}

fn manifest(out: &Path) -> RunManifest {
    toml::from_str(&std::fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap()
}

#[test]
fn full_run_lists_every_output_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_tiny(tmp.path());
    let m = manifest(&out);
    for stage in ["phantom", "simulate", "build-kernel", "recon", "eval", "report"] {
        assert!(m.stages.contains_key(stage), "missing stage {stage}");
    }
    let mut listed = m.all_outputs();
    listed.sort();
    let on_disk: Vec<String> = files(&out).into_iter().filter(|f| f != "manifest.toml").collect();
    assert_eq!(listed, on_disk);
    assert_eq!(m.seed, 7);
    assert_eq!(m.realization_seeds.len(), 2);
    for f in ["eval/mse.csv", "eval/bias_sd.csv", "report/mse_by_frame.csv", "recon/neural-kem/f12/r01/trace.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn report_images_are_16_bit_pgm() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_tiny(tmp.path());
    let pgms: Vec<String> = files(&out).into_iter().filter(|f| f.ends_with(".pgm")).collect();
    assert!(pgms.iter().any(|f| f.starts_with("report/images/kem_")));
    for f in pgms {
        let bytes = std::fs::read(out.join(&f)).unwrap();
        let header = b"P5\n32 32\n65535\n";
        assert_eq!(&bytes[..header.len()], header, "{f}");
        assert_eq!(bytes.len(), header.len() + 32 * 32 * 2, "{f}");
    }
}

#[test]
fn same_seed_gives_identical_images_and_tables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (oa, ob) = (run_tiny(a.path()), run_tiny(b.path()));
    let fa = files(&oa);
    assert_eq!(fa, files(&ob));
    for f in fa.iter().filter(|f| !f.ends_with("trace.csv") && *f != "manifest.toml") {
        assert_eq!(std::fs::read(oa.join(f)).unwrap(), std::fs::read(ob.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn stages_run_separately_and_methods_can_be_added() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("staged");
    let base = ["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    for stage in [&["phantom"][..], &["simulate"], &["build-kernel"], &["recon", "--method", "mlem"]] {
        let args: Vec<&str> = base.iter().chain(stage).copied().collect();
        let o = nkem(&args);
        assert!(o.status.success(), "{stage:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let args: Vec<&str> = base.iter().chain(&["recon", "--method", "dip-ot", "--method", "dip-admm"]).copied().collect();
    assert!(nkem(&args).status.success());
    let m = manifest(&out);
    let recon = &m.stages["recon"].outputs;
    for method in ["mlem", "dip-ot", "dip-admm"] {
        assert!(recon.iter().any(|f| f.starts_with(&format!("recon/{method}/"))), "{method} outputs dropped");
    }
}

#[test]
fn invalid_configuration_exits_with_config_status() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "[grid]\nnx = 16\ncolour = 3\n");
    let o = nkem(&["--config", bad.to_str().unwrap(), "config"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let missing = tmp.path().join("absent.toml");
    assert_eq!(nkem(&["--config", missing.to_str().unwrap(), "config"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(nkem(&["--threads", "0", "config"]).status.code(), Some(EXIT_CONFIG));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let o = nkem(&["recon", "--method", "fbp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fbp"));
}

#[test]
fn missing_inputs_exit_with_runtime_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("empty");
    let o = nkem(&["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "recon"]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME));
}

#[test]
fn config_command_prints_a_loadable_config() {
    let o = nkem(&["--seed", "99", "config"]);
    assert!(o.status.success());
    let cfg = nkem_cli::ExperimentConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 99);
}
