use std::fmt::Write as _;

use projgan::data::GaussianMixture;
use projgan::rng::{derive_seed, rng};
use projgan::tensor::Tensor;
use projgan::theory::{determinant_inequality_check, random_determinant_instance, support_volume_ratio, VolumeReport};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Check, SuiteOutcome};
use crate::config::RunConfig;
use crate::error::{setup, CliResult};

const DETERMINANT_STREAM: u64 = 13;
const VOLUME_STREAM: u64 = 14;
const MAX_DETERMINANT_DIM: usize = 8;

fn append(csv: &mut String, case: &str, report: &VolumeReport) {
    for line in report.to_csv().lines().skip(1) {
        writeln!(csv, "{case},{line}").expect("writing to String");
    }
}

/// Gaussian `m × d` matrix; `support_volume_ratio` orthonormalizes its rows.
fn gaussian_rows(m: usize, d: usize, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let data = (0..m * d).map(|_| StandardNormal.sample(&mut r)).collect();
    Tensor::matrix(m, d, data).expect("matrix shape")
}

fn ratio(mix: &GaussianMixture, m: usize, eps: f64, samples: u64, seed: u64) -> CliResult<VolumeReport> {
    let w = gaussian_rows(m, mix.dim(), derive_seed(seed, 0));
    Ok(support_volume_ratio(mix, &w, eps, samples, derive_seed(seed, 1))?)
}

pub fn volume_suite(cfg: &RunConfig) -> CliResult<SuiteOutcome> {
    let seed = cfg.int("seed");
    let mut checks = Vec::new();

    let mut det_csv = String::from("trial,d,m,det_projected,det_full,holds\n");
    let mut r = rng(derive_seed(seed, DETERMINANT_STREAM));
    let trials = cfg.usize("determinant_trials");
    let mut violations = 0usize;
    for t in 0..trials {
        let d = r.random_range(2..=MAX_DETERMINANT_DIM);
        let m = r.random_range(1..d);
        let (sigma, w) = random_determinant_instance(d, m, &mut r)?;
        let c = determinant_inequality_check(&sigma, &w)?;
        violations += usize::from(!c.holds);
        writeln!(det_csv, "{t},{d},{m},{},{},{}", c.det_projected, c.det_full, c.holds).expect("writing to String");
    }
    checks.push(Check::new("volume/determinant", violations as f64, "0", violations == 0 && trials > 0));

    let samples = cfg.int("volume_samples");
    let eps = cfg.real("volume_eps");
    let vseed = derive_seed(seed, VOLUME_STREAM);
    let mut csv = String::from("case,quantity,hits,samples,fraction,ci_low,ci_high\n");

    let d = cfg.positive("volume_dim")?;
    let m = cfg.positive("volume_projected_dim")?;
    let sigma = cfg.real("volume_sigma");
    let single = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0; d]], &[sigma])
        .map_err(|e| setup("volume_sigma", e))?;
    let growth = ratio(&single, m, eps, samples, derive_seed(vseed, 0))?;
    append(&mut csv, "growth", &growth);
    checks.push(Check::new(
        "volume/growth",
        growth.projected.fraction - growth.ambient.fraction,
        "disjoint 99% intervals",
        growth.warning.is_none() && growth.projected.exceeds(&growth.ambient),
    ));

    let rotation_mix = GaussianMixture::isotropic(vec![1.0], vec![vec![0.0; 4]], &[0.1])?;
    let rotation = ratio(&rotation_mix, 4, eps, samples, derive_seed(vseed, 1))?;
    append(&mut csv, "rotation", &rotation);
    checks.push(Check::new(
        "volume/rotation",
        rotation.projected.fraction - rotation.ambient.fraction,
        "overlapping 99% intervals",
        rotation.projected.overlaps(&rotation.ambient),
    ));

    let mut left = vec![0.0; 8];
    left[0] = -0.4;
    let mut right = vec![0.0; 8];
    right[0] = 0.4;
    let pair = GaussianMixture::isotropic(vec![0.5, 0.5], vec![left, right], &[0.05, 0.05])?;
    let components = ratio(&pair, 2, eps, samples, derive_seed(vseed, 2))?;
    append(&mut csv, "components", &components);
    let worst = components
        .components
        .iter()
        .map(|(a, p)| p.fraction - a.fraction)
        .fold(f64::INFINITY, f64::min);
    checks.push(Check::new("volume/components", worst, ">= 0", worst >= 0.0));

    Ok(SuiteOutcome {
        checks,
        files: vec![("determinant.csv".into(), det_csv), ("volume.csv".into(), csv)],
    })
}
