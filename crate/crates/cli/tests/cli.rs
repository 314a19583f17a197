use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mol::linops::io::{read_image, write_image};
use mol::linops::ComplexImage;
use mol::net::save_checkpoint;
use mol::training::{evaluate, generate_dataset, Split};
use mol::{NetworkConfig, NetworkWeights};
use mol_cli::manifest::sha256_file;
use mol_cli::{ExperimentConfig, RunManifest};
use num_complex::Complex64;
use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"
seed = 7

[dataset]
count = 10
height = 8
width = 8

[network]
layers = 3
channels = 4

[training]
epochs = 2
batch_size = 2
learning_rate = 1e-3
lip_ascent_steps = 3

[analysis]
margin_pairs = 200
robustness_trials = 8
problems = 2
gradient_params = 3
"#;

fn mol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mol"))
        .args(args)
        .env("MOL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Setup {
    dir: TempDir,
    config: PathBuf,
}

impl Setup {
    fn new(text: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let config = dir.path().join("exp.toml");
        std::fs::write(&config, text).unwrap();
        Self { dir, config }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, cmd: &str, out: &str, checkpoint: Option<&Path>) -> Output {
        let out = self.path(out);
        let mut args = vec![
            cmd.to_string(),
            "--config".into(),
            self.config.display().to_string(),
            "--out".into(),
            out.display().to_string(),
        ];
        if let Some(c) = checkpoint {
            args.push("--checkpoint".into());
            args.push(c.display().to_string());
        }
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        mol(&refs)
    }

    fn config(&self) -> ExperimentConfig {
        ExperimentConfig::load(&self.config).unwrap()
    }

    fn constrained_checkpoint(&self, name: &str, scale: f64) -> PathBuf {
        let cfg = self.config();
        let w = NetworkWeights::init(&cfg.network_config(), 3)
            .unwrap()
            .spectral_normalize(1.0 - cfg.solver.m, 20)
            .rescale_output(scale);
        let path = self.path(name);
        save_checkpoint(&path, &w).unwrap();
        path
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("missing check {name}"))
}

fn assert_manifest_complete(out: &Path) {
    let manifest = RunManifest::read(out).unwrap();
    assert!(manifest.finished_unix >= manifest.started_unix);
    for f in &manifest.files {
        let (sha, bytes) = sha256_file(&out.join(&f.path)).unwrap();
        assert_eq!(sha, f.sha256, "{}", f.path);
        assert_eq!(bytes, f.bytes, "{}", f.path);
    }
    let mut on_disk = Vec::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                on_disk.push(p);
            }
        }
    }
    assert_eq!(on_disk.len(), manifest.files.len());
}

#[test]
fn zero_epochs_writes_initial_checkpoint_and_manifest() {
    let s = Setup::new(&SMALL.replace("epochs = 2", "epochs = 0"));
    let o = s.run("train", "out", None);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = s.path("out");
    assert!(out.join("checkpoints/epoch_0000.molnet").exists());
    assert!(!out.join("history.csv").exists());
    let manifest = RunManifest::read(&out).unwrap();
    let mut names: Vec<_> = manifest.files.iter().map(|f| f.path.as_str()).collect();
    names.sort();
    assert_eq!(names, ["checkpoints/epoch_0000.molnet", "config.toml"]);
    assert_eq!(manifest.command, "train");
    assert_manifest_complete(&out);
}

#[test]
fn training_twice_gives_identical_history() {
    let s = Setup::new(SMALL);
    let a = s.run("train", "a", None);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = s.run("train", "b", None);
    assert!(b.status.success(), "{}", stderr(&b));
    let ha = std::fs::read(s.path("a/history.csv")).unwrap();
    let hb = std::fs::read(s.path("b/history.csv")).unwrap();
    assert_eq!(ha, hb);
    let text = String::from_utf8(ha).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("epoch,train_loss,val_psnr,val_ssim,mean_lip,mean_nfe,diverged_batches"));
    assert!(s.path("a/checkpoints/epoch_0002.molnet").exists());
    assert_manifest_complete(&s.path("a"));
}

#[test]
fn seed_flag_changes_the_run() {
    let s = Setup::new(&SMALL.replace("epochs = 2", "epochs = 1"));
    assert!(s.run("train", "a", None).status.success());
    let o = mol(&[
        "train",
        "--config",
        s.config.to_str().unwrap(),
        "--out",
        s.path("b").to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = ExperimentConfig::load(&s.path("b/config.toml")).unwrap();
    assert_eq!(echoed.seed, 99);
    assert_ne!(
        std::fs::read(s.path("a/history.csv")).unwrap(),
        std::fs::read(s.path("b/history.csv")).unwrap()
    );
}

#[test]
fn echoed_config_parses_to_the_same_config() {
    let s = Setup::new(&SMALL.replace("epochs = 2", "epochs = 0"));
    assert!(s.run("train", "out", None).status.success());
    let echoed = ExperimentConfig::load(&s.path("out/config.toml")).unwrap();
    assert_eq!(echoed, s.config());
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let s = Setup::new(&SMALL.replace("[network]", "[network]\nwidth_multiplier = 2"));
    let o = s.run("train", "out", None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width_multiplier"), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_names_the_path() {
    let s = Setup::new(SMALL);
    let missing = s.path("nowhere/net.molnet");
    for cmd in ["reconstruct", "verify", "bench"] {
        let o = s.run(cmd, "out", Some(&missing));
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains(missing.to_str().unwrap()), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn zero_network_with_identity_operator_halves_the_measurement() {
    let s = Setup::new(
        r#"
[dataset]
height = 6
width = 5

[operator]
kind = "identity"

[network]
layers = 2
channels = 3

[solver]
lambda = 1.0
tol_fwd = 1e-10

[reconstruct]
inputs = [{ measurement = "b.molimg" }]
"#,
    );
    let cfg = s.config();
    let zero = NetworkWeights::zeros(&NetworkConfig {
        image_shape: (6, 5),
        ..cfg.network_config()
    })
    .unwrap();
    let ckpt = s.path("zero.molnet");
    save_checkpoint(&ckpt, &zero).unwrap();
    let data: Vec<Complex64> = (0..30).map(|i| Complex64::new(i as f64 * 0.1 - 1.0, (i % 7) as f64 * 0.3)).collect();
    let b = ComplexImage::from_vec(6, 5, data).unwrap();
    write_image(s.path("b.molimg"), &b).unwrap();

    let o = s.run("reconstruct", "out", Some(&ckpt));
    assert!(o.status.success(), "{}", stderr(&o));
    let x = read_image(s.path("out/recon/b.molimg")).unwrap();
    let half = b.scaled(0.5);
    assert!(x.sub(&half).norm() <= 1e-8 * half.norm(), "{}", x.sub(&half).norm());
    let rec = read_json(&s.path("out/recon/b.json"));
    assert_eq!(rec["converged"], true);
    assert!(rec.get("psnr").is_none());
    assert_manifest_complete(&s.path("out"));
}

#[test]
fn reconstruct_psnr_matches_library_metric() {
    let s = Setup::new(SMALL);
    let ckpt = s.constrained_checkpoint("net.molnet", 1.0);
    let o = s.run("reconstruct", "out", Some(&ckpt));
    assert!(o.status.success(), "{}", stderr(&o));

    let cfg = s.config();
    let data = generate_dataset(&cfg.dataset_spec().unwrap()).unwrap();
    let test = data.indices(Split::Test);
    let w = mol::net::load_checkpoint(&ckpt).unwrap();
    let (evals, _) = evaluate(&w, &data, &test, &cfg.solver_config().unwrap()).unwrap();
    let records = read_json(&s.path("out/reconstructions.json"));
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), test.len());
    for (r, e) in records.iter().zip(&evals) {
        assert_eq!(r["name"], format!("test_{:04}", e.index));
        let psnr = r["psnr"].as_f64().unwrap();
        assert!((psnr - e.psnr).abs() <= 1e-9, "{psnr} vs {}", e.psnr);
        assert!((r["ssim"].as_f64().unwrap() - e.ssim).abs() <= 1e-9);
        assert_eq!(r["nfe"].as_u64().unwrap() as usize, e.nfe);
    }
}

#[test]
fn verify_passes_on_constrained_checkpoint() {
    let s = Setup::new(SMALL);
    let ckpt = s.constrained_checkpoint("net.molnet", 1.0);
    let o = s.run("verify", "out", Some(&ckpt));
    let report = read_json(&s.path("out/verify.json"));
    assert!(o.status.success(), "{}\n{report:#}", stderr(&o));
    assert_eq!(report["passed"], true);
    assert_eq!(report["failures"], 0);
    for name in [
        "adjoint",
        "q_solve",
        "step_size",
        "contraction_premise",
        "convergence",
        "contraction_decay",
        "fixed_point_residual",
        "monotone_margin",
        "monotone_certified",
        "f_lipschitz",
        "local_lipschitz",
        "robustness",
        "gradient",
    ] {
        assert_eq!(check(&report, name)["passed"], true, "{name}");
    }
    let analysis = std::fs::read_to_string(s.path("out/analysis.txt")).unwrap();
    assert!(analysis.contains("m_hat = "));
    assert_manifest_complete(&s.path("out"));
}

#[test]
fn verify_fails_on_doubled_checkpoint() {
    let s = Setup::new(SMALL);
    let ckpt = s.constrained_checkpoint("net2.molnet", 2.0);
    let o = s.run("verify", "out", Some(&ckpt));
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let report = read_json(&s.path("out/verify.json"));
    assert_eq!(report["passed"], false);
    let premise = check(&report, "contraction_premise");
    assert_eq!(premise["passed"], false);
    assert!(premise["value"].as_f64().unwrap() > premise["threshold"].as_f64().unwrap());
    assert_eq!(check(&report, "robustness")["passed"], false);
    let failures = report["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).count();
    assert_eq!(report["failures"].as_u64().unwrap() as usize, failures);
    assert_manifest_complete(&s.path("out"));
}

#[test]
fn empty_mask_keeps_adjoint_and_q_solve_valid() {
    let s = Setup::new(&format!("{SMALL}\n[operator]\nmask = \"empty\"\n"));
    let ckpt = s.constrained_checkpoint("net.molnet", 1.0);
    let o = s.run("verify", "out", Some(&ckpt));
    let report = read_json(&s.path("out/verify.json"));
    assert!(matches!(o.status.code(), Some(0) | Some(4)), "{}", stderr(&o));
    assert_eq!(check(&report, "adjoint")["passed"], true);
    assert_eq!(check(&report, "q_solve")["passed"], true);
}

#[test]
fn bench_reports_constant_deq_memory_and_tenfold_ratio() {
    let s = Setup::new(
        &SMALL
            .replace("layers = 3", "layers = 5")
            .replace("channels = 4", "channels = 8")
            .replace("problems = 2", "problems = 3"),
    );
    let ckpt = s.constrained_checkpoint("net.molnet", 1.0);
    let o = s.run("bench", "out", Some(&ckpt));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(s.path("out/bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mode,unrolls,buffers,seconds,nfe"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 5);
    let deq: Vec<f64> = rows.iter().filter(|r| r[0] == "deq").map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(deq.len(), 3);
    assert!(deq.iter().all(|&b| b == deq[0]), "{deq:?}");
    let unrolled = |k: &str| -> f64 {
        rows.iter().find(|r| r[0] == "unrolled" && r[1] == k).unwrap()[2].parse().unwrap()
    };
    let ratio = unrolled("10") / deq[0];
    assert!((8.0..=12.0).contains(&ratio), "ratio {ratio}");
    let growth = unrolled("10") / unrolled("1");
    assert!(growth > 5.0 && growth <= 10.0, "growth {growth}");
    let summary = read_json(&s.path("out/bench.json"));
    assert!((summary["ratio"].as_f64().unwrap() - ratio).abs() < 1e-12);
    assert_manifest_complete(&s.path("out"));
}
