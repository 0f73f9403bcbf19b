//! Envelope files and run manifests.
//!
//! Envelope data is stored as raw little-endian `f32` in C order
//! `(frame, row, col)`, next to a mandatory JSON sidecar named `<file>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EnvelopeRaster;
use crate::hk::HkParams;

pub const ENVELOPE_FORMAT_VERSION: u32 = 1;
pub const ENVELOPE_DTYPE: &str = "f32le";
pub const ENVELOPE_LAYOUT: &str = "C:frame,row,col";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Ground truth recorded for synthetic envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticParams {
    pub log10_alpha: f64,
    pub k: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub in_training_box: bool,
}

impl From<&HkParams> for SyntheticParams {
    fn from(p: &HkParams) -> Self {
        SyntheticParams {
            log10_alpha: p.log10_alpha(),
            k: p.k(),
            epsilon: p.epsilon,
            sigma: p.sigma,
            alpha: p.alpha,
            in_training_box: p.in_training_box(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSidecar {
    pub format_version: u32,
    /// `[frames, rows, cols]`.
    pub dims: [usize; 3],
    pub dtype: String,
    pub layout: String,
    pub units: String,
    pub seed: Option<u64>,
    /// One entry per distinct region; a single entry for homogeneous data.
    pub params: Vec<SyntheticParams>,
    /// Axial and lateral sample spacing in millimetres.
    pub spacing_mm: Option<[f64; 2]>,
}

impl EnvelopeSidecar {
    pub fn new(frames: usize, rows: usize, cols: usize) -> Self {
        EnvelopeSidecar {
            format_version: ENVELOPE_FORMAT_VERSION,
            dims: [frames, rows, cols],
            dtype: ENVELOPE_DTYPE.into(),
            layout: ENVELOPE_LAYOUT.into(),
            units: "linear amplitude".into(),
            seed: None,
            params: Vec::new(),
            spacing_mm: None,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the samples (rounded to `f32`) and the sidecar.
pub fn write_envelope(path: &Path, raster: &EnvelopeRaster, sidecar: &EnvelopeSidecar) -> Result<()> {
    if sidecar.dims != [raster.frames(), raster.rows(), raster.cols()] {
        return Err(Error::InvalidParameter(format!(
            "sidecar dims {:?} do not match raster {}x{}x{}",
            sidecar.dims,
            raster.frames(),
            raster.rows(),
            raster.cols()
        )));
    }
    let mut bytes = Vec::with_capacity(raster.data().len() * 4);
    for &v in raster.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), sidecar)
}

pub fn read_envelope(path: &Path) -> Result<(EnvelopeRaster, EnvelopeSidecar)> {
    let side_path = sidecar_path(path);
    let side_bytes = match fs::read(&side_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::format(path, format!("missing sidecar metadata {}", side_path.display())))
        }
        Err(e) => return Err(Error::io(&side_path, e)),
    };
    let sidecar: EnvelopeSidecar =
        serde_json::from_slice(&side_bytes).map_err(|e| Error::format(&side_path, e.to_string()))?;
    if sidecar.format_version != ENVELOPE_FORMAT_VERSION {
        return Err(Error::format(&side_path, format!("unsupported format version {}", sidecar.format_version)));
    }
    if sidecar.dtype != ENVELOPE_DTYPE || sidecar.layout != ENVELOPE_LAYOUT {
        return Err(Error::format(&side_path, format!("unsupported dtype/layout {}/{}", sidecar.dtype, sidecar.layout)));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let [frames, rows, cols] = sidecar.dims;
    let expected = frames.checked_mul(rows).and_then(|n| n.checked_mul(cols)).and_then(|n| n.checked_mul(4));
    if expected != Some(bytes.len()) {
        return Err(Error::format(
            path,
            format!("{} bytes do not match dims {:?} of 4-byte samples", bytes.len(), sidecar.dims),
        ));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    let mut raster = EnvelopeRaster::new(frames, rows, cols, data).map_err(|e| Error::format(path, e.to_string()))?;
    raster.spacing_mm = sidecar.spacing_mm.map(|s| (s[0], s[1]));
    Ok((raster, sidecar))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

/// Everything needed to re-run a command; deliberately free of timestamps
/// and host details so identical runs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, outputs: Vec<String>) -> Result<Self> {
        Ok(Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: "hkq".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config)?,
            outputs,
        })
    }
}
