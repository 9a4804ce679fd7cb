use std::fmt::Write as _;
use std::path::Path;

use projgan::io::write_atomic;
use projgan::trainer::{run, saturation_diagnostics, RunSummary, MIN_DIAGNOSTIC_WINDOW};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::setup;

pub const CONFIG_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const BANK_FILE: &str = "bank.txt";
/// Trailing iterations summarized in `summary.csv`.
pub const SUMMARY_WINDOW: usize = 5000;

/// `key,value` lines describing a finished run.
pub fn summary_csv(summary: &RunSummary, saturation_threshold: f64) -> String {
    let mut s = String::from("key,value\n");
    let put = |s: &mut String, k: &str, v: String| writeln!(s, "{k},{v}").expect("writing to String");
    put(&mut s, "iterations", summary.rows.len().to_string());
    let coverage = summary.final_coverage.map(|c| c.to_string()).unwrap_or_default();
    put(&mut s, "final_coverage", coverage);
    let tail = summary.tail(SUMMARY_WINDOW);
    if tail.len() >= MIN_DIAGNOSTIC_WINDOW {
        let rep = saturation_diagnostics(tail, saturation_threshold).expect("window is long enough");
        put(&mut s, "window", rep.window.to_string());
        put(&mut s, "saturated_fraction", rep.saturated_fraction.to_string());
        put(&mut s, "median_generator_grad_norm", rep.median_grad_norm.to_string());
        put(&mut s, "generator_grad_norm_slope", rep.grad_norm_slope.to_string());
    }
    s
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let source = setup::data_source(cfg)?;
    let mut exp = setup::experiment(cfg, &source)?;
    exp.output_dir = Some(out.to_path_buf());
    std::fs::create_dir_all(out).map_err(projgan::Error::from)?;
    write_atomic(&out.join(CONFIG_FILE), cfg.canonical().as_bytes())?;
    if let Some(bank) = &exp.bank {
        bank.save(&out.join(BANK_FILE))?;
    }
    let summary = run(&exp, &source)?;
    write_atomic(
        &out.join(SUMMARY_FILE),
        summary_csv(&summary, exp.saturation_threshold).as_bytes(),
    )?;
    println!(
        "trained {} iterations ({} discriminator(s)); metrics in {}",
        summary.rows.len(),
        exp.discriminators.len(),
        out.join(projgan::trainer::METRICS_FILE).display()
    );
    if let Some(c) = summary.final_coverage {
        println!("final mode coverage {c}");
    }
    Ok(())
}
