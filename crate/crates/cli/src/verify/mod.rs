//! Oracle suites behind `projgan verify`.

mod gradcheck;
mod residual;
mod thm1;
mod volume;

pub use gradcheck::gradcheck_suite;
pub use residual::residual_suite;
pub use thm1::thm1_suite;
pub use volume::volume_suite;

use std::fmt::Write as _;
use std::path::Path;

use projgan::io::write_atomic;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Thm1,
    Volume,
    Residual,
    Gradcheck,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "thm1" => Suite::Thm1,
            "volume" => Suite::Volume,
            "residual" => Suite::Residual,
            "gradcheck" => Suite::Gradcheck,
            "all" => Suite::All,
            _ => return None,
        })
    }
}

/// One named assertion with the measured quantity and its threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, threshold: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: threshold.into(),
            passed,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} measured={:.6e} threshold={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold
        )
    }
}

/// Checks plus the report files a suite produced, as `(file name, contents)`.
#[derive(Clone, Debug, Default)]
pub struct SuiteOutcome {
    pub checks: Vec<Check>,
    pub files: Vec<(String, String)>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn extend(&mut self, other: SuiteOutcome) {
        self.checks.extend(other.checks);
        self.files.extend(other.files);
    }

    pub fn checks_csv(&self) -> String {
        let mut s = String::from("check,measured,threshold,passed\n");
        for c in &self.checks {
            writeln!(s, "{},{},{},{}", c.name, c.measured, c.threshold, c.passed).expect("writing to String");
        }
        s
    }
}

pub fn run_suite(suite: Suite, cfg: &RunConfig) -> CliResult<SuiteOutcome> {
    let mut out = SuiteOutcome::default();
    if matches!(suite, Suite::Thm1 | Suite::All) {
        out.extend(thm1_suite(cfg)?);
    }
    if matches!(suite, Suite::Volume | Suite::All) {
        out.extend(volume_suite(cfg)?);
    }
    if matches!(suite, Suite::Residual | Suite::All) {
        out.extend(residual_suite(cfg)?);
    }
    if matches!(suite, Suite::Gradcheck | Suite::All) {
        out.extend(gradcheck_suite(cfg)?);
    }
    Ok(out)
}

pub const CHECKS_FILE: &str = "checks.csv";

pub fn cmd_verify(suite: Suite, cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let outcome = run_suite(suite, cfg)?;
    std::fs::create_dir_all(out).map_err(projgan::Error::from)?;
    for (name, contents) in &outcome.files {
        write_atomic(&out.join(name), contents.as_bytes())?;
    }
    write_atomic(&out.join(CHECKS_FILE), outcome.checks_csv().as_bytes())?;
    for c in &outcome.checks {
        println!("{}", c.line());
    }
    let failed = outcome.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
