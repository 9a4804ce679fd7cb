use std::f64::consts::LN_2;
use std::fmt::Write as _;

use projgan::rng::{derive_seed, rng};
use projgan::tensor::Tensor;
use projgan::theory::{
    kl_divergence, optimal_discriminator, projected_value, regular_grid, sup_distance, train_discrete_discriminator,
    value, DiscreteDistribution, DiscreteTrainingConfig,
};
use rand::Rng as _;

use super::{Check, SuiteOutcome};
use crate::config::RunConfig;
use crate::error::CliResult;

/// `(dimension, points per axis)`; every grid has at most 256 points.
const GRIDS: &[(usize, usize)] = &[(1, 16), (2, 4), (2, 16), (3, 4), (3, 6), (4, 4), (8, 2)];
const PERTURBATION: f64 = 0.01;
const IDENTITY_TOLERANCE: f64 = 1e-10;
const SUP_TOLERANCE: f64 = 0.02;
const INSTANCE_STREAM: u64 = 11;
const FIXTURE_STREAM: u64 = 12;

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

struct Instance {
    gap: f64,
    value: f64,
    kl_real: f64,
    kl_generated: f64,
    closed_form_mismatches: usize,
    perturbation_violations: usize,
}

fn check_instance(px: &DiscreteDistribution, pg: &DiscreteDistribution) -> CliResult<Instance> {
    let (a, b) = (px.probs(), pg.probs());
    let dstar = optimal_discriminator(px, pg)?;
    let closed_form_mismatches = dstar
        .iter()
        .zip(a.iter().zip(b))
        .filter(|(got, (&p, &q))| {
            let want = if p + q > 0.0 { Some(p / (p + q)) } else { None };
            **got != want
        })
        .count();
    let d: Vec<f64> = dstar.iter().map(|v| v.unwrap_or(0.5)).collect();
    let v = value(px, pg, &d)?;
    let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
    let kl_real = kl_divergence(a, &mid);
    let kl_generated = kl_divergence(b, &mid);
    let gap = (v - (-2.0 * LN_2 + kl_real + kl_generated)).abs();

    // V changes only through the perturbed point's term.
    let mut perturbation_violations = 0;
    for (j, ds) in dstar.iter().enumerate() {
        let Some(ds) = *ds else { continue };
        let term = |t: f64| xlogy(a[j], t) + xlogy(b[j], 1.0 - t);
        for t in [ds - PERTURBATION, ds + PERTURBATION] {
            if (0.0..=1.0).contains(&t) && term(t) > term(ds) {
                perturbation_violations += 1;
            }
        }
    }
    Ok(Instance {
        gap,
        value: v,
        kl_real,
        kl_generated,
        closed_form_mismatches,
        perturbation_violations,
    })
}

fn unit_row(dim: usize, r: &mut projgan::rng::Rng) -> Tensor {
    let v: Vec<f64> = (0..dim).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    Tensor::matrix(1, dim, v).expect("row shape")
}

/// Largest deviation of the summed projected values from `K·(−2 log 2)` over
/// pairs whose marginals agree along every projection.
fn marginal_match_deviation(seed: u64) -> CliResult<f64> {
    let mut worst: f64 = 0.0;
    let grid = regular_grid(2, 2);
    let diag = DiscreteDistribution::new(grid.clone(), vec![0.5, 0.0, 0.0, 0.5])?;
    let anti = DiscreteDistribution::new(grid, vec![0.0, 0.5, 0.5, 0.0])?;
    let axes = [
        Tensor::matrix(1, 2, vec![1.0, 0.0])?,
        Tensor::matrix(1, 2, vec![0.0, 1.0])?,
    ];
    worst = worst.max((projected_value(&diag, &anti, &axes, 2)? + 2.0 * 2.0 * LN_2).abs());

    let mut r = rng(seed);
    for &(dim, gamma) in GRIDS {
        let p = DiscreteDistribution::random(regular_grid(dim, gamma), 0.3, &mut r)?;
        let k = 1 + r.random_range(0..4);
        let ws: Vec<Tensor> = (0..k).map(|_| unit_row(dim, &mut r)).collect();
        let total = projected_value(&p, &p, &ws, gamma)?;
        worst = worst.max((total + k as f64 * 2.0 * LN_2).abs());
    }
    Ok(worst)
}

pub fn thm1_suite(cfg: &RunConfig) -> CliResult<SuiteOutcome> {
    let seed = cfg.int("seed");
    let mut r = rng(derive_seed(seed, INSTANCE_STREAM));
    let mut csv = String::from(
        "instance,dim,gamma,points,value,kl_real,kl_generated,identity_gap,closed_form_mismatches,perturbation_violations\n",
    );
    let (mut max_gap, mut mismatches, mut violations) = (0.0f64, 0usize, 0usize);
    for i in 0..cfg.usize("thm1_pairs") {
        let (dim, gamma) = GRIDS[i % GRIDS.len()];
        let grid = regular_grid(dim, gamma);
        let sparsity = 0.5 * r.random::<f64>();
        let px = DiscreteDistribution::random(grid.clone(), sparsity, &mut r)?;
        let pg = DiscreteDistribution::random(grid.clone(), sparsity, &mut r)?;
        let inst = check_instance(&px, &pg)?;
        max_gap = max_gap.max(inst.gap);
        mismatches += inst.closed_form_mismatches;
        violations += inst.perturbation_violations;
        writeln!(
            csv,
            "{i},{dim},{gamma},{},{},{},{},{},{},{}",
            grid.len(),
            inst.value,
            inst.kl_real,
            inst.kl_generated,
            inst.gap,
            inst.closed_form_mismatches,
            inst.perturbation_violations
        )
        .expect("writing to String");
    }

    let mut trained_csv = String::from("fixture,points,sup_distance\n");
    let mut worst_sup: f64 = 0.0;
    for f in 0..cfg.usize("thm1_fixtures") {
        let fixture_seed = derive_seed(derive_seed(seed, FIXTURE_STREAM), f as u64);
        let mut fr = rng(fixture_seed);
        let grid = regular_grid(2, 4);
        let px = DiscreteDistribution::random(grid.clone(), 0.0, &mut fr)?;
        let pg = DiscreteDistribution::random(grid, 0.0, &mut fr)?;
        let config = DiscreteTrainingConfig {
            seed: fixture_seed,
            ..DiscreteTrainingConfig::default()
        };
        let trained = train_discrete_discriminator(&px, &pg, &config)?;
        let sup = sup_distance(&trained, &optimal_discriminator(&px, &pg)?);
        worst_sup = worst_sup.max(sup);
        writeln!(trained_csv, "{f},{},{sup}", px.len()).expect("writing to String");
    }

    let deviation = marginal_match_deviation(derive_seed(seed, INSTANCE_STREAM + 100))?;
    let checks = vec![
        Check::new("thm1/identity", max_gap, "1e-10", max_gap <= IDENTITY_TOLERANCE),
        Check::new("thm1/closed_form", mismatches as f64, "0", mismatches == 0),
        Check::new("thm1/optimality", violations as f64, "0", violations == 0),
        Check::new("thm1/marginal_match", deviation, "1e-10", deviation <= IDENTITY_TOLERANCE),
        Check::new("thm1/trained_sup", worst_sup, "0.02", worst_sup < SUP_TOLERANCE),
    ];
    Ok(SuiteOutcome {
        checks,
        files: vec![("thm1.csv".into(), csv), ("thm1_trained.csv".into(), trained_csv)],
    })
}
