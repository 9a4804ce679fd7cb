use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use projgan::trainer::{metrics_header, parse_metrics_csv, METRICS_FILE};

fn projgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_projgan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const SHORT_TRAIN: [&str; 6] = ["--set", "iterations=30", "--set", "batch_size=16", "--set", "eval_samples=500"];

#[test]
fn single_mode_train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--out", dir.path().to_str().unwrap(), "--set", "mode=single"];
    args.extend(SHORT_TRAIN);
    let o = projgan(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = String::from_utf8(read(dir.path().join(METRICS_FILE))).unwrap();
    assert!(metrics.starts_with(&format!("{}\n", metrics_header(1))));
    assert_eq!(parse_metrics_csv(&metrics).unwrap().len(), 30);
    for f in ["config.txt", "summary.csv", "checkpoints/generator_00000000.ckpt", "checkpoints/generator_00000030.ckpt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert!(!dir.path().join("bank.txt").exists());
}

#[test]
fn multi_mode_train_has_per_discriminator_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--out", dir.path().to_str().unwrap(), "--set", "mode=multi"];
    args.extend(SHORT_TRAIN);
    let o = projgan(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = String::from_utf8(read(dir.path().join(METRICS_FILE))).unwrap();
    let header = metrics.lines().next().unwrap();
    for k in 0..8 {
        assert!(header.contains(&format!("discriminator_loss_k{k}")));
        assert!(header.contains(&format!("subspace_grad_norm_k{k}")));
    }
    assert!(!header.contains("discriminator_loss_k8"));
    assert!(dir.path().join("bank.txt").is_file());
    assert!(dir.path().join("checkpoints/discriminator_k7_00000030.ckpt").is_file());
}

#[test]
fn train_is_byte_identical_across_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut args = vec!["train", "--out", dir.path().to_str().unwrap(), "--set", "mode=multi", "--seed", "7"];
        args.extend(SHORT_TRAIN);
        assert_eq!(code(&projgan(&args)), 0);
    }
    for f in [METRICS_FILE, "summary.csv", "config.txt", "bank.txt"] {
        assert_eq!(read(a.path().join(f)), read(b.path().join(f)), "{f}");
    }
}

#[test]
fn written_config_round_trips() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--out", a.path().to_str().unwrap(), "--set", "lr_generator=0.0003"];
    args.extend(SHORT_TRAIN);
    assert_eq!(code(&projgan(&args)), 0);
    let written = a.path().join("config.txt");
    let o = projgan(&["train", "--config", written.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(written), read(b.path().join("config.txt")));
    assert_eq!(read(a.path().join(METRICS_FILE)), read(b.path().join(METRICS_FILE)));
}

#[test]
fn config_errors_exit_two_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = projgan(&["train", "--out", &out, "--set", "no_such_key=1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let o = projgan(&["train", "--out", &out, "--set", "batch_size=many"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("batch_size"));

    let cfg = dir.path().join("dup.txt");
    std::fs::write(&cfg, "seed = 1\n# comment\nseed = 2\n").unwrap();
    let o = projgan(&["train", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    assert_eq!(code(&projgan(&["verify", "nonsense", "--out", &out])), 2);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let mut args = vec!["train", "--out", blocker.to_str().unwrap()];
    args.extend(SHORT_TRAIN);
    assert_eq!(code(&projgan(&args)), 1);
}

#[test]
fn failed_checks_exit_one_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = projgan(&["verify", "gradcheck", "--out", dir.path().to_str().unwrap(), "--set", "gradcheck_tolerance=1e-30"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    let checks = String::from_utf8(read(dir.path().join("checks.csv"))).unwrap();
    assert!(checks.contains(",false"));
}

fn small_verify(suite: &str, dir: &Path) -> Output {
    projgan(&[
        "verify",
        suite,
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "thm1_pairs=20",
        "--set",
        "thm1_fixtures=1",
        "--set",
        "determinant_trials=50",
        "--set",
        "volume_samples=100000",
        "--set",
        "residual_gamma=3",
        "--set",
        "residual_max_k=4",
    ])
}

#[test]
fn small_verify_suites_pass_and_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for suite in ["thm1", "volume", "residual", "gradcheck"] {
        let o = small_verify(suite, a.path());
        assert_eq!(code(&o), 0, "{suite}: {}", String::from_utf8_lossy(&o.stdout));
    }
    let o = small_verify("all", b.path());
    assert_eq!(code(&o), 0);
    for f in ["thm1.csv", "thm1_trained.csv", "determinant.csv", "volume.csv", "residual.csv", "residual_small.csv", "gradcheck.csv"] {
        assert_eq!(read(a.path().join(f)), read(b.path().join(f)), "{f}");
    }
    let residual = String::from_utf8(read(a.path().join("residual.csv"))).unwrap();
    assert!(residual.starts_with("k,max_residual"));
    assert_eq!(residual.lines().count(), 5);
}

fn write_csv(path: &Path, rows: &[Vec<f64>]) {
    let text: String = rows
        .iter()
        .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn zero_input_projects_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("zeros.csv");
    write_csv(&input, &vec![vec![0.0; 32]; 3]);
    let out = dir.path().join("proj");
    let o = projgan(&["project", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(out.join("projection_k0.csv"))).unwrap();
    assert_eq!(text, "0,0,0,0,0,0,0,0\n".repeat(3));
}

fn conv_args<'a>(input: &'a str, out: &'a str, apply: &'a str) -> Vec<&'a str> {
    vec![
        "project",
        input,
        "--out",
        out,
        "--set",
        "projection=conv",
        "--set",
        "orthonormalize=false",
        "--set",
        "image_height=8",
        "--set",
        "image_width=8",
        "--set",
        "filter_size=4",
        "--set",
        "stride=2",
        "--set",
        "discriminators=3",
        "--set",
        apply,
    ]
}

#[test]
fn conv_and_dense_apply_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..64).map(|j| ((i * 64 + j) as f64 * 0.37).sin()).collect()).collect();
    write_csv(&input, &rows);
    let dense = dir.path().join("dense");
    let conv = dir.path().join("conv");
    let i = input.to_str().unwrap();
    let o = projgan(&conv_args(i, dense.to_str().unwrap(), "project_apply=dense"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&projgan(&conv_args(i, conv.to_str().unwrap(), "project_apply=conv"))), 0);
    let mut names: Vec<String> = std::fs::read_dir(&dense)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["projection_k0.csv", "projection_k1.csv", "projection_k2.csv"]);
    for n in &names {
        assert_eq!(read(dense.join(n)), read(conv.join(n)), "{n}");
    }
}

#[test]
fn shape_mismatch_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_csv(&input, &[vec![0.5; 63]]);
    let out = dir.path().join("out");
    let o = projgan(&conv_args(input.to_str().unwrap(), out.to_str().unwrap(), "project_apply=dense"));
    assert_eq!(code(&o), 2);
}

#[test]
fn defaults_lists_every_key() {
    let o = projgan(&["defaults"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["seed", "mode", "discriminators", "projection_dim", "residual_max_k", "volume_samples"] {
        assert!(text.contains(key), "{key}");
    }
}
