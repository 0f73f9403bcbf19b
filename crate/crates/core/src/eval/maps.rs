use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalGrid, GridResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    Csv,
    Pgm,
}

impl FromStr for MapFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MapFormat::Csv),
            "pgm" => Ok(MapFormat::Pgm),
            other => Err(Error::InvalidParameter(format!("unknown map format '{other}' (expected csv or pgm)"))),
        }
    }
}

/// Rows are `log10 alpha` ascending, columns `k` ascending; the first row and
/// column hold the coordinates.
pub fn map_to_csv(values: &[Vec<f64>], grid: &EvalGrid) -> String {
    let mut s = String::from("log10_alpha\\k");
    for k in &grid.k_values {
        write!(s, ",{k}").unwrap();
    }
    s.push('\n');
    for (a, row) in grid.log10_alpha_values.iter().zip(values) {
        write!(s, "{a}").unwrap();
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Plain (ASCII) PGM scaled linearly from the finite minimum (0) to maximum (255).
/// Non-finite cells are written as 0.
pub fn map_to_pgm(values: &[Vec<f64>]) -> String {
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    let finite = values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let mut s = format!("P2\n{cols} {rows}\n255\n");
    for row in values {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let g = if !v.is_finite() || hi <= lo { 0.0 } else { 255.0 * (v - lo) / (hi - lo) };
                (g.round() as u32).to_string()
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

fn write(dir: &Path, name: &str, body: &str) -> Result<String> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(name.to_string())
}

/// Writes per-cell metrics, aggregates and maps; returns the file names in
/// the order they were written.
pub fn write_grid_outputs(result: &GridResult, dir: &Path, format: MapFormat) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prefix = &result.estimator;
    let mut files = Vec::new();

    let mut cells = String::from(
        "log10_alpha,k,rrmse_alpha,mae_alpha,rrmse_k,mae_k,mean_std_alpha,mean_std_k\n",
    );
    for c in &result.cells {
        writeln!(
            cells,
            "{},{},{},{},{},{},{},{}",
            c.log10_alpha, c.k, c.rrmse_alpha, c.mae_alpha, c.rrmse_k, c.mae_k, c.mean_std_alpha, c.mean_std_k
        )
        .unwrap();
    }
    files.push(write(dir, &format!("{prefix}_cells.csv"), &cells)?);

    let a = &result.aggregate;
    let summary = format!(
        "# unweighted mean over {} cells of per-cell metrics ({} repetitions each, n_s = {})\n\
         estimator,rrmse_alpha,mae_alpha,rrmse_k,mae_k,mean_std_alpha,mean_std_k\n{},{},{},{},{},{},{}\n",
        result.grid.cells(),
        result.grid.reps,
        result.grid.n_s,
        prefix,
        a.rrmse_alpha,
        a.mae_alpha,
        a.rrmse_k,
        a.mae_k,
        a.mean_std_alpha,
        a.mean_std_k
    );
    files.push(write(dir, &format!("{prefix}_aggregate.csv"), &summary)?);

    let mut maps: Vec<(&str, Vec<Vec<f64>>)> = vec![
        ("rrmse_alpha", result.map(|c| c.rrmse_alpha)),
        ("log10_rrmse_alpha", result.map(|c| c.rrmse_alpha.log10())),
        ("mae_alpha", result.map(|c| c.mae_alpha)),
        ("rrmse_k", result.map(|c| c.rrmse_k)),
        ("log10_rrmse_k", result.map(|c| c.rrmse_k.log10())),
        ("mae_k", result.map(|c| c.mae_k)),
    ];
    if result.cells.iter().any(|c| c.mean_std_alpha > 0.0 || c.mean_std_k > 0.0) {
        maps.push(("std_alpha", result.map(|c| c.mean_std_alpha)));
        maps.push(("std_k", result.map(|c| c.mean_std_k)));
    }
    for (name, values) in maps {
        let (ext, body) = match format {
            MapFormat::Csv => ("csv", map_to_csv(&values, &result.grid)),
            MapFormat::Pgm => ("pgm", map_to_pgm(&values)),
        };
        files.push(write(dir, &format!("{prefix}_{name}.{ext}"), &body)?);
    }
    Ok(files)
}
