use std::fmt::Write as _;

use projgan::rng::{derive_seed, rng, Rng};
use projgan::tensor::Tensor;
use projgan::theory::simplex::rational;
use projgan::theory::{build_constraint_matrix, max_residual, regular_grid, ResidualReport};
use rand_distr::{Distribution, StandardNormal};

use super::{Check, SuiteOutcome};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

const RESIDUAL_STREAM: u64 = 15;
const SMALL_STREAM: u64 = 17;
/// Smaller curve on a 3×3 grid where full rank is reachable.
const SMALL_DIM: usize = 2;
const SMALL_GAMMA: usize = 3;
const SMALL_MAX_K: usize = 10;

fn random_rows(count: usize, dim: usize, r: &mut Rng) -> Vec<Tensor> {
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(r)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            Tensor::matrix(1, dim, v.into_iter().map(|x| x / n).collect()).expect("row shape")
        })
        .collect()
}

fn row(values: &[f64]) -> Tensor {
    Tensor::matrix(1, values.len(), values.to_vec()).expect("row shape")
}

fn curve_checks(name: &str, report: &ResidualReport, checks: &mut Vec<Check>) {
    let last = report.entries.last().map(|e| e.max_residual_f64()).unwrap_or(f64::NAN);
    checks.push(Check::new(
        format!("residual/{name}_non_increasing"),
        last,
        "non-increasing in K",
        report.is_non_increasing(),
    ));
    let full = report.entries.iter().filter(|e| e.full_rank()).count();
    checks.push(Check::new(
        format!("residual/{name}_rank_iff_zero"),
        full as f64,
        "zero residual exactly at full rank",
        report.rank_matches_uniqueness(),
    ));
}

pub fn residual_suite(cfg: &RunConfig) -> CliResult<SuiteOutcome> {
    let mut checks = Vec::new();
    let mut examples = String::from("instance,max_residual,rank,columns\n");

    let grid = regular_grid(2, 2);
    let axes = vec![row(&[1.0, 0.0]), row(&[0.0, 1.0])];
    let e = max_residual(&axes, &grid, 2)?;
    writeln!(examples, "axes,{},{},{}", e.max_residual_f64(), e.rank, e.columns).expect("writing to String");
    let half = rational(1) / rational(2);
    let (px, pg) = &e.witness;
    let witness_diagonal = px.iter().zip(pg).all(|(a, b)| (a - b).abs() == 0.5);
    checks.push(Check::new(
        "residual/axes_half",
        e.max_residual_f64(),
        "exactly 1/2",
        e.max_residual == half && e.rank == 3 && witness_diagonal,
    ));

    let mut completed = axes.clone();
    completed.push(row(&[1.0, 1.0]));
    let e = max_residual(&completed, &grid, 2)?;
    writeln!(examples, "axes_diagonal,{},{},{}", e.max_residual_f64(), e.rank, e.columns).expect("writing to String");
    checks.push(Check::new(
        "residual/full_rank_zero",
        e.max_residual_f64(),
        "exactly 0 at rank 4",
        e.is_zero() && e.full_rank(),
    ));

    let dim = cfg.positive("residual_dim")?;
    let gamma = cfg.positive("residual_gamma")?;
    let bins = cfg.positive("residual_bins")?;
    let max_k = cfg.positive("residual_max_k")?;
    if gamma.checked_pow(dim as u32).is_none_or(|n| n > 4096) {
        return Err(CliError::Config(RunConfig::error("residual_gamma", "grid exceeds 4096 points")));
    }
    let mut r = rng(derive_seed(cfg.int("seed"), RESIDUAL_STREAM));
    let points = regular_grid(dim, gamma);
    let projections = random_rows(max_k, dim, &mut r);
    let a = build_constraint_matrix(&projections, &points, bins)?;
    let sums_ok = a.column_sums().iter().all(|&s| s == max_k);
    checks.push(Check::new("residual/column_sums", max_k as f64, "every column sums to K", sums_ok));
    let report = ResidualReport::nested(&projections, &points, bins)?;
    curve_checks("curve", &report, &mut checks);

    let small_points = regular_grid(SMALL_DIM, SMALL_GAMMA);
    let mut small_rng = rng(derive_seed(cfg.int("seed"), SMALL_STREAM));
    let small_projections = random_rows(SMALL_MAX_K, SMALL_DIM, &mut small_rng);
    let small = ResidualReport::nested(&small_projections, &small_points, SMALL_GAMMA)?;
    curve_checks("small_curve", &small, &mut checks);

    Ok(SuiteOutcome {
        checks,
        files: vec![
            ("residual.csv".into(), report.to_csv()),
            ("residual_small.csv".into(), small.to_csv()),
            ("residual_examples.csv".into(), examples),
        ],
    })
}
