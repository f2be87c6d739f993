//! `helios-cal/1` calibration documents.
//!
//! ```toml
//! schema = "helios-cal/1"
//! seed = 42
//! gain = [[150.0, 400.0, 9000.0], ...]   # 10 rows of R, G, B
//! dark = [...]                           # 10 values
//! noise_std = [...]                      # 10 values
//!
//! [ambient]
//! amplitude = [...]
//! constant = [...]
//! period_s = 86400.0
//! phase = 0.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::CHANNEL_COUNT;
use crate::sim::{AmbientModel, ModelError, ResponseModel};

pub const CALIBRATION_SCHEMA: &str = "helios-cal/1";

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("cannot read calibration {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed calibration: {0}")]
    Parse(String),
    #[error("unsupported calibration schema `{0}` (expected `{CALIBRATION_SCHEMA}`)")]
    Schema(String),
    #[error("{field} must have {expected} entries, found {found}")]
    Shape {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct AmbientDoc {
    amplitude: Vec<f64>,
    constant: Vec<f64>,
    period_s: f64,
    phase: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationDoc {
    schema: String,
    seed: u64,
    gain: Vec<Vec<f64>>,
    dark: Vec<f64>,
    noise_std: Vec<f64>,
    ambient: AmbientDoc,
}

fn fixed<const N: usize>(field: &'static str, v: &[f64]) -> Result<[f64; N], CalibrationError> {
    v.try_into().map_err(|_| CalibrationError::Shape {
        field,
        expected: N,
        found: v.len(),
    })
}

impl CalibrationDoc {
    fn into_model(self) -> Result<ResponseModel, CalibrationError> {
        if self.schema != CALIBRATION_SCHEMA {
            return Err(CalibrationError::Schema(self.schema));
        }
        if self.gain.len() != CHANNEL_COUNT {
            return Err(CalibrationError::Shape {
                field: "gain",
                expected: CHANNEL_COUNT,
                found: self.gain.len(),
            });
        }
        let mut gain = [[0.0; 3]; CHANNEL_COUNT];
        for (row, src) in gain.iter_mut().zip(&self.gain) {
            *row = fixed::<3>("gain row", src)?;
        }
        let ambient = AmbientModel {
            amplitude: fixed("ambient.amplitude", &self.ambient.amplitude)?,
            constant: fixed("ambient.constant", &self.ambient.constant)?,
            period_s: self.ambient.period_s,
            phase: self.ambient.phase,
        };
        Ok(ResponseModel::new(
            gain,
            fixed("dark", &self.dark)?,
            ambient,
            fixed("noise_std", &self.noise_std)?,
            self.seed,
        )?)
    }

    fn from_model(model: &ResponseModel) -> Self {
        CalibrationDoc {
            schema: CALIBRATION_SCHEMA.to_string(),
            seed: model.seed,
            gain: model.gain.iter().map(|r| r.to_vec()).collect(),
            dark: model.dark.to_vec(),
            noise_std: model.noise_std.to_vec(),
            ambient: AmbientDoc {
                amplitude: model.ambient.amplitude.to_vec(),
                constant: model.ambient.constant.to_vec(),
                period_s: model.ambient.period_s,
                phase: model.ambient.phase,
            },
        }
    }
}

pub fn from_toml_str(text: &str) -> Result<ResponseModel, CalibrationError> {
    let doc: CalibrationDoc =
        toml::from_str(text).map_err(|e| CalibrationError::Parse(e.to_string()))?;
    doc.into_model()
}

pub fn to_toml_string(model: &ResponseModel) -> String {
    toml::to_string(&CalibrationDoc::from_model(model)).expect("calibration serializes")
}

pub fn load(path: &Path) -> Result<ResponseModel, CalibrationError> {
    let text = fs::read_to_string(path).map_err(|source| CalibrationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_toml_str(&text)
}

pub fn save(model: &ResponseModel, path: &Path) -> Result<(), CalibrationError> {
    fs::write(path, to_toml_string(model)).map_err(|source| CalibrationError::Io {
        path: path.to_path_buf(),
        source,
    })
}
