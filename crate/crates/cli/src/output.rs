use std::fmt::Display;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hkq_core::io::{write_json, Manifest};
use hkq_core::{Error, Result};
use serde::Serialize;

pub fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// `<path>` with `suffix` appended to the full file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<output>.manifest.json` next to a single-file output.
pub fn file_manifest<C: Serialize>(output: &Path, command: &str, config: &C, mut outputs: Vec<String>) -> Result<()> {
    let path = with_suffix(output, ".manifest.json");
    outputs.push(file_name(&path));
    write_json(&path, &Manifest::new(command, config, outputs)?)
}

/// Writes `manifest.json` inside an output directory.
pub fn dir_manifest<C: Serialize>(dir: &Path, command: &str, config: &C, mut outputs: Vec<String>) -> Result<()> {
    outputs.push("manifest.json".into());
    write_json(&dir.join("manifest.json"), &Manifest::new(command, config, outputs)?)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::Io { path: path.into(), source: e })
}

/// Matrix with labelled rows and columns; `corner` names both axes.
pub fn labelled_csv<R: Display, C: Display>(corner: &str, rows: &[R], cols: &[C], values: &[Vec<f64>]) -> String {
    let mut s = String::from(corner);
    for c in cols {
        write!(s, ",{c}").unwrap();
    }
    s.push('\n');
    for (r, row) in rows.iter().zip(values) {
        write!(s, "{r}").unwrap();
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}
