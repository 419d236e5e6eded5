use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command as Process;

use kpo_cli::output::{EFFECTIVE_CONFIG_FILE, MANIFEST_FILE};
use kpo_cli::sweep::sweep_points;
use kpo_cli::{execute, Command, ExperimentConfig, RunManifest};

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    let text = format!("output_dir = {:?}\n{body}", dir.to_str().unwrap());
    ExperimentConfig::from_toml(&text).unwrap()
}

fn files_below(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel);
            }
        }
    }
    out
}

const SMALL_THRESHOLD: &str = "experiment = \"fig2c\"\ndim = 16\n[drive]\nbeta_mhz = [2.0, 8.0, 14.0, 20.0]\n";

#[test]
fn rerun_gives_identical_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL_THRESHOLD);
    let a = execute(&cfg, Command::Run).unwrap();
    let b = execute(&cfg, Command::Run).unwrap();
    assert_eq!(a.checksums(), b.checksums());
    assert_eq!(a.config_hash, b.config_hash);
}

#[test]
fn manifest_lists_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "experiment = \"fig3\"\ndim = 16\n[time]\nslices_ns = [0.0, 16.0]\n[phase_space]\npoints = 21\n",
    );
    let m = execute(&cfg, Command::Run).unwrap();
    let listed: BTreeSet<String> = m.outputs.iter().map(|o| o.path.clone()).collect();
    let mut on_disk = files_below(tmp.path());
    assert!(on_disk.remove(MANIFEST_FILE));
    assert_eq!(listed, on_disk);
    assert!(listed.contains(EFFECTIVE_CONFIG_FILE));
    for o in &m.outputs {
        let bytes = fs::read(tmp.path().join(&o.path)).unwrap();
        assert_eq!(o.bytes, bytes.len() as u64);
        assert_eq!(o.sha256, kpo_cli::output::sha256_hex(&bytes));
    }
    let written: RunManifest = serde_json::from_str(&fs::read_to_string(tmp.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(written.outputs, m.outputs);
}

#[test]
fn stale_outputs_are_replaced_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let first = config(tmp.path(), "experiment = \"fig3\"\ndim = 16\n[time]\nslices_ns = [0.0, 8.0, 16.0]\n[phase_space]\npoints = 11\n");
    execute(&first, Command::Run).unwrap();
    let second = config(tmp.path(), "experiment = \"fig3\"\ndim = 16\n[time]\nslices_ns = [0.0]\n[phase_space]\npoints = 11\n");
    let m = execute(&second, Command::Run).unwrap();
    let mut on_disk = files_below(tmp.path());
    on_disk.remove(MANIFEST_FILE);
    assert_eq!(on_disk.len(), m.outputs.len());
    assert!(!on_disk.contains("wigner_true_02.csv"));
}

#[test]
fn effective_config_reproduces_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "experiment = \"custom\"\nseed = 11\ndim = 14\n[drive]\nbeta_mhz = [6.0]\nprofile = \"ramp\"\n[time]\nt_final_ns = 30.0\npoints = 7\n[phase_space]\npoints = 11\n",
    );
    let first = execute(&cfg, Command::Run).unwrap();
    let effective = fs::read_to_string(tmp.path().join(EFFECTIVE_CONFIG_FILE)).unwrap();
    let reparsed = ExperimentConfig::from_toml(&effective).unwrap();
    assert_eq!(reparsed, cfg);
    let second = execute(&reparsed, Command::Run).unwrap();
    assert_eq!(first.checksums(), second.checksums());
    assert_eq!(first.config_hash, second.config_hash);
}

#[test]
fn invalid_config_names_the_field() {
    let err = ExperimentConfig::from_toml("experiment = \"fig4a\"\n[physics]\nkappa_mhz = -1.1\n").unwrap_err();
    assert!(err.to_string().contains("physics.kappa_mhz"), "{err}");

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "experiment = \"fig4a\"\n[physics]\nkappa_mhz = -1.1\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_kpo")).arg("validate").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("physics.kappa_mhz"), "{stderr}");
}

#[test]
fn failing_stage_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    // |α|² = 25 is beyond what a 16-level space can represent
    let cfg = config(
        tmp.path(),
        "experiment = \"fig3\"\ndim = 16\n[time]\nslices_ns = [0.0]\n[tomography]\namplitudes = [5.0]\n",
    );
    let err = execute(&cfg, Command::Run).unwrap_err();
    assert_eq!(err.stage(), Some("synthesis"));
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(tmp.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m.status, "failed");
    assert_eq!(m.failed_stage.as_deref(), Some("synthesis"));
    assert!(m.error.unwrap().contains("alpha"));
}

#[test]
fn parallel_sweep_matches_serial_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "experiment = \"fig2c\"\ndim = 16\n");
    assert_eq!(cfg.sweep.beta_mhz.len(), 40);
    let serial = sweep_points(&cfg, 1).unwrap();
    let parallel = sweep_points(&cfg, 8).unwrap();
    assert_eq!(serial.len(), 40);
    for (s, p) in serial.iter().zip(&parallel) {
        assert_eq!(s.beta_mhz.to_bits(), p.beta_mhz.to_bits());
        let (s, p) = (s.result.as_ref().unwrap(), p.result.as_ref().unwrap());
        assert_eq!(s.mean_photon_number.to_bits(), p.mean_photon_number.to_bits());
        assert_eq!(s.parity.to_bits(), p.parity.to_bits());
        assert_eq!(s.purity.to_bits(), p.purity.to_bits());
    }
}

#[test]
fn sweep_files_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "experiment = \"fig2d\"\ndim = 12\n[sweep]\nbeta_mhz = [1.0, 4.0, 9.0]\ndetuning_mhz = [-5.0, 0.0, 11.2]\n";
    let cfg = config(tmp.path(), body);
    let a = execute(&cfg, Command::Sweep { jobs: 1 }).unwrap();
    let b = execute(&cfg, Command::Sweep { jobs: 4 }).unwrap();
    assert_eq!(a.checksums(), b.checksums());
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9);
}

#[test]
fn empty_sweep_grid_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "experiment = \"fig2c\"\n[sweep]\nbeta_mhz = []\n");
    let err = execute(&cfg, Command::Sweep { jobs: 2 }).unwrap_err();
    assert!(err.to_string().contains("sweep.beta_mhz"), "{err}");
}

#[test]
fn default_pipeline_round_trip_is_faithful() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "experiment = \"custom\"\n");
    assert_eq!(cfg.state.kind, "cat");
    assert_eq!(cfg.tomography.noise_sigma, 0.0);
    let m = execute(&cfg, Command::Pipeline).unwrap();
    let f = m.summary["fidelity_median"].as_f64().unwrap();
    assert!(f >= 0.99, "fidelity {f}");
    assert!(m.outputs.iter().any(|o| o.path == "calibration.json"));
    assert!(m.outputs.iter().any(|o| o.path == "wigner_reconstructed.csv"));
}

#[test]
fn noisy_pipeline_median_fidelity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "experiment = \"custom\"\nseed = 2024\n[tomography]\nnoise_sigma = 0.01\nrepeats = 20\n",
    );
    let m = execute(&cfg, Command::Pipeline).unwrap();
    let f = m.summary["fidelity_median"].as_f64().unwrap();
    assert_eq!(m.summary["fidelities"].as_array().unwrap().len(), 20);
    assert!(f >= 0.95, "median fidelity {f}");
}

#[test]
fn binary_honours_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cfg.toml");
    fs::write(&path, format!("output_dir = \"rel\"\n{SMALL_THRESHOLD}")).unwrap();
    let root = tmp.path().join("root");
    let out = Process::new(env!("CARGO_BIN_EXE_kpo"))
        .arg("run")
        .arg(&path)
        .env(kpo_cli::config::OUTPUT_ROOT_ENV, &root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("rel").join(MANIFEST_FILE).is_file());
    assert!(root.join("rel").join("threshold.csv").is_file());
}

#[test]
fn binary_reports_the_failing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cfg.toml");
    let body = format!(
        "output_dir = {:?}\nexperiment = \"fig3\"\ndim = 16\n[time]\nslices_ns = [0.0]\n[tomography]\namplitudes = [5.0]\n",
        tmp.path().join("o").to_str().unwrap()
    );
    fs::write(&path, body).unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_kpo")).arg("run").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("synthesis"), "{stderr}");
}
