//! Temperature maps on disk: affine-encoded 16-bit PGM plus a JSON sidecar.
//!
//! A temperature `t` is stored as `round((t − intercept) / slope)` with
//! `slope = span / 65535` over the measuring range, so one code step is
//! about 2.1 m°C for a 140 °C span. Invalid pixels are written as 0 and
//! listed in the sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{load_pgm16, save_pgm16, ImagingError, ThermalFrame};
use crate::radiometry::{ConversionSummary, MeasuringRange, TemperatureMap};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("sidecar {path}: {source}")]
    Sidecar {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sidecar does not match frame: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEncoding {
    pub slope: f64,
    pub intercept: f64,
}

impl TemperatureEncoding {
    pub fn for_range(range: &MeasuringRange) -> Self {
        Self {
            slope: range.span() / 65535.0,
            intercept: range.min_c,
        }
    }

    pub fn encode(&self, celsius: f64) -> u16 {
        ((celsius - self.intercept) / self.slope).round().clamp(0.0, 65535.0) as u16
    }

    pub fn decode(&self, code: u16) -> f64 {
        self.intercept + self.slope * f64::from(code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSidecar {
    pub width: usize,
    pub height: usize,
    pub encoding: TemperatureEncoding,
    pub range: MeasuringRange,
    pub invalid_count: usize,
    /// Row-major indices of invalid pixels.
    pub invalid_pixels: Vec<usize>,
    #[serde(default)]
    pub conversion: Option<ConversionSummary>,
}

/// Encodes `map`; pixels outside `range` are stored as invalid.
pub fn encode_map(map: &TemperatureMap, range: &MeasuringRange) -> (ThermalFrame, TemperatureSidecar) {
    let encoding = TemperatureEncoding::for_range(range);
    let mut invalid_pixels = Vec::new();
    let codes = map
        .celsius()
        .iter()
        .zip(map.valid())
        .enumerate()
        .map(|(i, (&c, &ok))| {
            if ok && range.contains(c) {
                encoding.encode(c)
            } else {
                invalid_pixels.push(i);
                0
            }
        })
        .collect();
    let frame = ThermalFrame::new(map.width(), map.height(), codes).expect("map dims are valid");
    let sidecar = TemperatureSidecar {
        width: map.width(),
        height: map.height(),
        encoding,
        range: *range,
        invalid_count: invalid_pixels.len(),
        invalid_pixels,
        conversion: None,
    };
    (frame, sidecar)
}

pub fn decode_map(frame: &ThermalFrame, sidecar: &TemperatureSidecar) -> Result<TemperatureMap, StoreError> {
    if (frame.width(), frame.height()) != (sidecar.width, sidecar.height) {
        return Err(StoreError::Inconsistent(format!(
            "frame {}x{} vs sidecar {}x{}",
            frame.width(),
            frame.height(),
            sidecar.width,
            sidecar.height
        )));
    }
    let mut valid = vec![true; frame.dn().len()];
    for &i in &sidecar.invalid_pixels {
        *valid
            .get_mut(i)
            .ok_or_else(|| StoreError::Inconsistent(format!("invalid pixel index {i} out of bounds")))? = false;
    }
    let celsius = frame
        .dn()
        .iter()
        .zip(&valid)
        .map(|(&code, &ok)| if ok { sidecar.encoding.decode(code) } else { f64::NAN })
        .collect();
    Ok(TemperatureMap::new(frame.width(), frame.height(), celsius, valid).expect("dims checked"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| StoreError::Sidecar {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| StoreError::Sidecar {
        path: path.display().to_string(),
        source,
    })
}

/// Sidecar path next to a PGM: `x.pgm` → `x.json`.
pub fn sidecar_path(pgm: &Path) -> std::path::PathBuf {
    pgm.with_extension("json")
}

pub fn save_temperature_map(
    map: &TemperatureMap,
    range: &MeasuringRange,
    conversion: Option<ConversionSummary>,
    pgm: &Path,
    sidecar: &Path,
) -> Result<TemperatureSidecar, StoreError> {
    let (frame, mut meta) = encode_map(map, range);
    meta.conversion = conversion;
    save_pgm16(&frame, pgm)?;
    write_json(sidecar, &meta)?;
    Ok(meta)
}

pub fn load_temperature_map(pgm: &Path, sidecar: &Path) -> Result<TemperatureMap, StoreError> {
    let frame = load_pgm16(pgm)?;
    let meta: TemperatureSidecar = read_json(sidecar)?;
    decode_map(&frame, &meta)
}
