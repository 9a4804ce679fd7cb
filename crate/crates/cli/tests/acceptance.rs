//! End-to-end acceptance run. Every criterion prints one `PASS`/`FAIL` line;
//! the test fails if any criterion does. Criteria run one after another so
//! their wall-clock bounds are measured without competing threads.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use projgan::data::DataSource;
use projgan::projection::{sample_conv_projection, ImageShape, Padding, ProjectionBank, ProjectionOperator};
use projgan::rng::rng;
use projgan::trainer::{median, run, saturation_diagnostics, MetricsRow, Mode, RunSummary};
use projgan::Tensor;
use projgan_cli::setup;
use projgan_cli::verify::{gradcheck_suite, residual_suite, thm1_suite, volume_suite, SuiteOutcome};
use projgan_cli::RunConfig;
use rand::Rng as _;

struct Verdict {
    id: usize,
    passed: bool,
    detail: String,
}

fn report(id: usize, passed: bool, detail: String) -> Verdict {
    println!("criterion {id}: {} {detail}", if passed { "PASS" } else { "FAIL" });
    Verdict { id, passed, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn failing(outcome: &SuiteOutcome) -> Vec<String> {
    outcome.checks.iter().filter(|c| !c.passed).map(|c| c.line()).collect()
}

fn suite_verdict(id: usize, outcome: &SuiteOutcome, names: &[&str], elapsed: Duration, limit: Duration) -> Verdict {
    let missing: Vec<&str> = names.iter().copied().filter(|n| outcome.check(n).is_none()).collect();
    let failed = failing(outcome);
    let measured: Vec<String> = names
        .iter()
        .filter_map(|n| outcome.check(n).map(|c| format!("{}={:.3e}", c.name, c.measured)))
        .collect();
    report(
        id,
        missing.is_empty() && failed.is_empty() && elapsed < limit,
        format!(
            "{} elapsed={:.1}s limit={}s failed={failed:?} missing={missing:?}",
            measured.join(" "),
            elapsed.as_secs_f64(),
            limit.as_secs()
        ),
    )
}

fn criterion_1() -> Verdict {
    let (outcome, elapsed) = timed(|| gradcheck_suite(&RunConfig::default()).unwrap());
    let worst = outcome.checks.iter().map(|c| c.measured).fold(0.0, f64::max);
    let passed = outcome.passed() && worst < 1e-4 && elapsed < Duration::from_secs(60);
    report(
        1,
        passed,
        format!(
            "graphs={} max_rel_error={worst:.3e} elapsed={:.1}s failed={:?}",
            outcome.checks.len(),
            elapsed.as_secs_f64(),
            failing(&outcome)
        ),
    )
}

fn criterion_2() -> Verdict {
    let (outcome, elapsed) = timed(|| thm1_suite(&RunConfig::default()).unwrap());
    let names = [
        "thm1/identity",
        "thm1/closed_form",
        "thm1/optimality",
        "thm1/marginal_match",
        "thm1/trained_sup",
    ];
    suite_verdict(2, &outcome, &names, elapsed, Duration::from_secs(120))
}

fn criterion_3() -> Verdict {
    let (outcome, elapsed) = timed(|| residual_suite(&RunConfig::default()).unwrap());
    let names = [
        "residual/axes_half",
        "residual/column_sums",
        "residual/curve_non_increasing",
        "residual/curve_rank_iff_zero",
    ];
    suite_verdict(3, &outcome, &names, elapsed, Duration::from_secs(300))
}

/// The volume suite runs the determinant trials and the Monte Carlo cases
/// together; its total time is held to the tighter determinant bound.
fn criteria_4_and_5() -> [Verdict; 2] {
    let (outcome, elapsed) = timed(|| volume_suite(&RunConfig::default()).unwrap());
    let det = outcome.check("volume/determinant").expect("determinant check");
    let growth = outcome.check("volume/growth").expect("growth check");
    let secs = elapsed.as_secs_f64();
    [
        report(
            4,
            det.passed && elapsed < Duration::from_secs(30),
            format!("violations={} trials=1000 suite_elapsed={secs:.1}s", det.measured),
        ),
        report(
            5,
            growth.passed && elapsed < Duration::from_secs(120),
            format!("projected_minus_ambient={:.4e} suite_elapsed={secs:.1}s", growth.measured),
        ),
    ]
}

const SEEDS: u64 = 5;
const STABILITY_ITERATIONS: usize = 20_000;
const WINDOW: usize = 5_000;

struct SeedRun {
    saturated_fraction: f64,
    median_grad_norm: f64,
    coverage: f64,
    tail_grad_norms: Vec<f64>,
}

fn stability_run(mode: &str, seed: u64) -> SeedRun {
    let mut cfg = RunConfig::default();
    cfg.set("mode", mode).unwrap();
    cfg.set("seed", &seed.to_string()).unwrap();
    cfg.set("iterations", &STABILITY_ITERATIONS.to_string()).unwrap();
    let source = setup::data_source(&cfg).unwrap();
    let exp = setup::experiment(&cfg, &source).unwrap();
    assert_eq!(exp.batch_size, 64);
    assert_eq!(exp.generator_adam.lr, 2e-4);
    assert_eq!(exp.generator_adam.beta1, 0.5);
    let summary: RunSummary = run(&exp, &source).unwrap();
    let tail: &[MetricsRow] = summary.tail(WINDOW);
    let rep = saturation_diagnostics(tail, exp.saturation_threshold).unwrap();
    SeedRun {
        saturated_fraction: rep.saturated_fraction,
        median_grad_norm: rep.median_grad_norm,
        coverage: summary.final_coverage.expect("ring data has mode centers"),
        tail_grad_norms: tail.iter().map(|r| r.generator_grad_norm).collect(),
    }
}

fn criteria_6_and_7() -> [Verdict; 2] {
    let start = Instant::now();
    let mut single = Vec::new();
    let mut multi = Vec::new();
    for seed in 0..SEEDS {
        let s = stability_run("single", seed);
        let m = stability_run("multi", seed);
        println!(
            "  seed {seed}: single saturated={:.3} median_grad={:.4e} coverage={:.3} | multi saturated={:.3} median_grad={:.4e} coverage={:.3}",
            s.saturated_fraction, s.median_grad_norm, s.coverage, m.saturated_fraction, m.median_grad_norm, m.coverage
        );
        single.push(s);
        multi.push(m);
    }
    let elapsed = start.elapsed().as_secs_f64() / 60.0;
    let count = |runs: &[SeedRun], f: &dyn Fn(&SeedRun) -> bool| runs.iter().filter(|r| f(r)).count();
    let pooled = |runs: &[SeedRun]| median(&runs.iter().flat_map(|r| r.tail_grad_norms.iter().copied()).collect::<Vec<_>>());

    let single_saturated = count(&single, &|r| r.saturated_fraction > 0.8);
    let multi_calm = count(&multi, &|r| r.saturated_fraction < 0.5);
    let (single_grad, multi_grad) = (pooled(&single), pooled(&multi));
    let six = report(
        6,
        single_saturated >= 4 && multi_calm >= 4 && multi_grad > single_grad,
        format!(
            "single_saturated_seeds={single_saturated}/5 (need >=4) multi_unsaturated_seeds={multi_calm}/5 (need >=4) \
             final_window_median_grad single={single_grad:.4e} multi={multi_grad:.4e} elapsed={elapsed:.1}min"
        ),
    );

    let mean = |runs: &[SeedRun]| runs.iter().map(|r| r.coverage).sum::<f64>() / runs.len() as f64;
    let (single_cov, multi_cov) = (mean(&single), mean(&multi));
    let multi_high = count(&multi, &|r| r.coverage >= 7.0 / 8.0);
    let seven = report(
        7,
        multi_cov >= single_cov && multi_high >= 3,
        format!(
            "mean_coverage single={single_cov:.3} multi={multi_cov:.3} multi_seeds_at_7_of_8={multi_high}/5 (need >=3)"
        ),
    );
    [six, seven]
}

fn max_trace_difference(a: &[MetricsRow], b: &[MetricsRow]) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let mut pairs = vec![
            (x.generator_loss, y.generator_loss),
            (x.discriminator_loss_mean, y.discriminator_loss_mean),
            (x.d_real_mean, y.d_real_mean),
            (x.d_fake_mean, y.d_fake_mean),
            (x.generator_grad_norm, y.generator_grad_norm),
            (x.mode_coverage.unwrap_or(0.0), y.mode_coverage.unwrap_or(0.0)),
        ];
        pairs.extend(x.discriminator_losses.iter().copied().zip(y.discriminator_losses.iter().copied()));
        pairs.extend(x.subspace_grad_norms.iter().copied().zip(y.subspace_grad_norms.iter().copied()));
        for (u, v) in pairs {
            worst = worst.max((u - v).abs());
        }
    }
    worst
}

fn criterion_8() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.set("mode", "single").unwrap();
    cfg.set("iterations", "300").unwrap();
    let source: DataSource = setup::data_source(&cfg).unwrap();
    let single = setup::experiment(&cfg, &source).unwrap();
    let d = source.sample_dim();
    let mut multi = single.clone();
    multi.mode = Mode::Multi { discriminators: 1 };
    let eye = Tensor::matrix(d, d, (0..d * d).map(|i| if i % (d + 1) == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
    multi.bank = Some(ProjectionBank::from_operators(vec![ProjectionOperator::invertible(eye).unwrap()], 0).unwrap());
    let a = run(&single, &source).unwrap();
    let b = run(&multi, &source).unwrap();
    let trace = if a.rows.len() == b.rows.len() {
        max_trace_difference(&a.rows, &b.rows)
    } else {
        f64::INFINITY
    };

    let mut r = rng(8);
    let mut worst_conv: f64 = 0.0;
    let mut cases = 0;
    while cases < 100 {
        let shape = ImageShape::new(r.random_range(1..=3), r.random_range(6..=20), r.random_range(6..=20));
        let f = r.random_range(2..=6);
        let stride = r.random_range(1..f);
        let padding = if r.random_bool(0.5) { Padding::Same } else { Padding::Valid };
        let Ok(op) = sample_conv_projection(shape, f, stride, padding, r.random()) else {
            continue;
        };
        let x = Tensor::matrix(2, op.input_dim(), (0..2 * op.input_dim()).map(|_| r.random_range(-1.0..1.0)).collect())
            .unwrap();
        worst_conv = worst_conv.max(op.apply(&x).unwrap().max_abs_diff(&op.apply_conv(&x).unwrap()));
        cases += 1;
    }
    report(
        8,
        trace <= 1e-12 && worst_conv <= 1e-12,
        format!("k1_identity_trace_max_diff={trace:.3e} iterations=300 conv_dense_max_diff={worst_conv:.3e} cases=100"),
    )
}

fn projgan(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_projgan"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .success()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let input = root.path().join("input.csv");
    let row: Vec<String> = (0..32).map(|i| format!("{}", (i as f64 * 0.1).cos())).collect();
    std::fs::write(&input, format!("{}\n", row.join(","))).unwrap();
    let input = input.to_str().unwrap().to_string();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("train", vec!["train", "--set", "mode=multi", "--set", "iterations=200", "--seed", "3"]),
        ("verify", vec!["verify", "thm1", "--set", "thm1_pairs=50", "--set", "thm1_fixtures=2"]),
        ("project", vec!["project", &input]),
    ];
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for (name, args) in &commands {
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|tag| {
                let out = root.path().join(format!("{name}_{tag}"));
                let mut full = args.clone();
                let out_str = out.to_str().unwrap().to_string();
                full.extend(["--out", &out_str]);
                assert!(projgan(&full), "{name} failed");
                csv_files(&out)
            })
            .collect();
        compared += runs[0].len();
        if runs[0].is_empty() || runs[0] != runs[1] {
            mismatched.push(*name);
        }
    }
    report(
        9,
        mismatched.is_empty(),
        format!("commands=train,verify,project csv_files_compared={compared} mismatched={mismatched:?}"),
    )
}

#[test]
fn acceptance_criteria() {
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3()];
    verdicts.extend(criteria_4_and_5());
    verdicts.push(criterion_8());
    verdicts.push(criterion_9());
    verdicts.extend(criteria_6_and_7());
    verdicts.sort_by_key(|v| v.id);
    println!("summary:");
    for v in &verdicts {
        println!("criterion {}: {} {}", v.id, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
