use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use projgan::data::{parse_csv_points, parse_idx, pgm_grid};
use projgan::io::write_atomic;
use projgan::projection::{ProjectionKind, ProjectionOperator};
use projgan::tensor::Tensor;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::setup;

/// Comma-separated rows in shortest round-tripping form; `-0` is written as `0`.
pub fn csv_rows(t: &Tensor) -> String {
    let cols = t.cols();
    let mut s = String::with_capacity(t.len() * 12);
    for row in t.data().chunks(cols) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{}", v + 0.0).expect("writing to String");
        }
        s.push('\n');
    }
    s
}

/// Input rows plus the image `(height, width)` when read from an IDX file.
fn read_input(path: &Path) -> CliResult<(Tensor, Option<(usize, usize)>)> {
    let bytes = std::fs::read(path).map_err(projgan::Error::from)?;
    if path.extension().is_some_and(|e| e == "csv") {
        let text = String::from_utf8(bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let t = parse_csv_points(&text).map_err(|e| CliError::Input(e.to_string()))?;
        Ok((t, None))
    } else {
        let set = parse_idx(&bytes).map_err(|e| CliError::Input(e.to_string()))?;
        Ok((set.to_tensor(), Some((set.rows(), set.cols()))))
    }
}

fn apply(op: &ProjectionOperator, x: &Tensor, conv: bool) -> CliResult<Tensor> {
    let y = if conv { op.apply_conv(x) } else { op.apply(x) };
    y.map_err(|e| match e {
        projgan::Error::Config(m) => CliError::Config(RunConfig::error("project_apply", m)),
        other => CliError::Runtime(other),
    })
}

/// Projects every input row with each operator of the configured bank and
/// writes `projection_k{i}.csv` (one row per input) or `projection_k{i}.pgm`
/// (tiled conv feature maps). Returns the written paths.
pub fn cmd_project(cfg: &RunConfig, input: &Path, out: &Path) -> CliResult<Vec<PathBuf>> {
    let conv = cfg.choice("project_apply", &["dense", "conv"])? == "conv";
    let pgm = cfg.choice("project_format", &["csv", "pgm"])? == "pgm";
    let (x, image) = read_input(input)?;
    let bank = setup::bank(cfg, x.cols(), image).map_err(|e| match e {
        CliError::Config(c) if c.key.as_deref() == Some("image_height") => CliError::Input(c.message),
        other => other,
    })?;
    if bank.input_dim() != x.cols() {
        return Err(CliError::Input(format!(
            "input rows have {} values, bank expects {}",
            x.cols(),
            bank.input_dim()
        )));
    }
    std::fs::create_dir_all(out).map_err(projgan::Error::from)?;
    let mut written = Vec::new();
    for (k, op) in bank.operators().iter().enumerate() {
        let y = apply(op, &x, conv)?;
        let (name, bytes) = if pgm {
            let ProjectionKind::Conv {
                out_height, out_width, ..
            } = *op.kind()
            else {
                return Err(CliError::Config(RunConfig::error(
                    "project_format",
                    "pgm output needs conv projections",
                )));
            };
            (format!("projection_k{k}.pgm"), pgm_grid(&y, out_height, out_width)?)
        } else {
            (format!("projection_k{k}.csv"), csv_rows(&y).into_bytes())
        };
        let path = out.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
