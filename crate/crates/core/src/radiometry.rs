//! Digital-number ↔ temperature conversion for radiometric microbolometers.
//!
//! The sensor model is
//!
//! ```text
//! T[°C] = B / ln(R1 / (R2 · (DN + O)) + F) − 273.15
//! ```
//!
//! and its closed-form inverse `DN = R1 / (R2 · (exp(B / T[K]) − F)) − O`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{GrayImage, ThermalFrame};

pub const KELVIN_OFFSET: f64 = 273.15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadiometryError {
    #[error("invalid radiometric parameters: {0}")]
    InvalidParams(&'static str),
    #[error("dn + O = {shifted} is not positive")]
    NonPositiveShiftedDn { shifted: f64 },
    #[error("log argument {argument} is not greater than 1")]
    LogArgumentTooSmall { argument: f64 },
    #[error("temperature {celsius} °C is at or below absolute zero")]
    BelowAbsoluteZero { celsius: f64 },
    #[error("exp(B/T) - F = {value} is not positive at {celsius} °C")]
    InverseDomain { celsius: f64, value: f64 },
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid measuring range [{min_c}, {max_c}]")]
    InvalidRange { min_c: f64, max_c: f64 },
}

/// The five sensor-model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiometricParams {
    pub r1: f64,
    pub r2: f64,
    pub b: f64,
    pub f: f64,
    pub o: f64,
}

impl RadiometricParams {
    pub fn new(r1: f64, r2: f64, b: f64, f: f64, o: f64) -> Result<Self, RadiometryError> {
        let p = Self { r1, r2, b, f, o };
        p.validate()?;
        Ok(p)
    }

    /// Factory constants of a FLIR One Pro unit.
    pub const fn flir_one_pro_factory() -> Self {
        Self {
            r1: 18333.4,
            r2: 0.0125,
            b: 1435.0,
            f: 1.0,
            o: -2284.0,
        }
    }

    /// The same unit after water-bath recalibration of R1 and O.
    pub const fn flir_one_pro_recalibrated() -> Self {
        Self {
            r1: 12755.4,
            r2: 0.0125,
            b: 1435.0,
            f: 1.0,
            o: -6707.0,
        }
    }

    pub fn validate(&self) -> Result<(), RadiometryError> {
        let all_finite = [self.r1, self.r2, self.b, self.f, self.o]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(RadiometryError::InvalidParams("non-finite constant"));
        }
        if self.r1 <= 0.0 {
            return Err(RadiometryError::InvalidParams("r1 must be positive"));
        }
        if self.r2 <= 0.0 {
            return Err(RadiometryError::InvalidParams("r2 must be positive"));
        }
        if self.b <= 0.0 {
            return Err(RadiometryError::InvalidParams("b must be positive"));
        }
        Ok(())
    }

    /// Same constants with R1 and O replaced.
    pub fn with_gain_offset(&self, r1: f64, o: f64) -> Self {
        Self { r1, o, ..*self }
    }
}

/// Valid temperature span of a camera, in °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuringRange {
    pub min_c: f64,
    pub max_c: f64,
}

impl MeasuringRange {
    pub fn new(min_c: f64, max_c: f64) -> Result<Self, RadiometryError> {
        let r = Self { min_c, max_c };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RadiometryError> {
        if !(self.min_c.is_finite() && self.max_c.is_finite() && self.min_c < self.max_c) {
            return Err(RadiometryError::InvalidRange {
                min_c: self.min_c,
                max_c: self.max_c,
            });
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.max_c - self.min_c
    }

    pub fn contains(&self, celsius: f64) -> bool {
        celsius >= self.min_c && celsius <= self.max_c
    }
}

impl Default for MeasuringRange {
    /// FLIR One Pro: −20 to 120 °C.
    fn default() -> Self {
        Self {
            min_c: -20.0,
            max_c: 120.0,
        }
    }
}

pub fn temperature_of_dn(dn: f64, params: &RadiometricParams) -> Result<f64, RadiometryError> {
    params.validate()?;
    if !dn.is_finite() {
        return Err(RadiometryError::NonFinite);
    }
    let shifted = dn + params.o;
    if shifted <= 0.0 {
        return Err(RadiometryError::NonPositiveShiftedDn { shifted });
    }
    let argument = params.r1 / (params.r2 * shifted) + params.f;
    if argument <= 1.0 {
        return Err(RadiometryError::LogArgumentTooSmall { argument });
    }
    Ok(params.b / argument.ln() - KELVIN_OFFSET)
}

/// Exact inverse of [`temperature_of_dn`]. The result is a real DN; callers
/// that need sensor counts quantize it themselves.
pub fn dn_of_temperature(celsius: f64, params: &RadiometricParams) -> Result<f64, RadiometryError> {
    params.validate()?;
    if !celsius.is_finite() {
        return Err(RadiometryError::NonFinite);
    }
    let kelvin = celsius + KELVIN_OFFSET;
    if kelvin <= 0.0 {
        return Err(RadiometryError::BelowAbsoluteZero { celsius });
    }
    let value = (params.b / kelvin).exp() - params.f;
    if !(value > 0.0) || !value.is_finite() {
        return Err(RadiometryError::InverseDomain { celsius, value });
    }
    Ok(params.r1 / (params.r2 * value) - params.o)
}

/// Per-pixel °C values with a validity mask. Invalid pixels carry either the
/// computed out-of-range value or NaN, and never enter statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureMap {
    width: usize,
    height: usize,
    celsius: Vec<f64>,
    valid: Vec<bool>,
}

impl TemperatureMap {
    /// Builds a map; pixels with non-finite values are forced invalid.
    pub fn new(width: usize, height: usize, celsius: Vec<f64>, mut valid: Vec<bool>) -> Option<Self> {
        if width == 0 || height == 0 || celsius.len() != width * height || valid.len() != celsius.len() {
            return None;
        }
        for (v, c) in valid.iter_mut().zip(&celsius) {
            *v &= c.is_finite();
        }
        Some(Self {
            width,
            height,
            celsius,
            valid,
        })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            celsius: img.values().to_vec(),
            valid: vec![true; img.values().len()],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn celsius(&self) -> &[f64] {
        &self.celsius
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn mean_valid(&self) -> Option<f64> {
        let (sum, n) = self
            .celsius
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold((0.0, 0usize), |(s, n), (c, _)| (s + c, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Grayscale view with invalid pixels replaced by the valid mean (or
    /// `fallback` if nothing is valid).
    pub fn to_gray_filled(&self, fallback: f64) -> GrayImage {
        let fill = self.mean_valid().unwrap_or(fallback);
        let values = self
            .celsius
            .iter()
            .zip(&self.valid)
            .map(|(&c, &ok)| if ok { c } else { fill })
            .collect();
        GrayImage::new(self.width, self.height, values).expect("dimensions checked at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConversionSummary {
    pub domain_violations: usize,
    pub out_of_range: usize,
    /// Set when no pixel survived conversion.
    pub all_invalid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedFrame {
    pub map: TemperatureMap,
    pub summary: ConversionSummary,
}

/// Converts every pixel of `frame`. Pixels outside the sensor-model domain
/// become NaN and invalid; pixels outside `range` keep their value but are
/// marked invalid.
pub fn convert_frame(
    frame: &ThermalFrame,
    params: &RadiometricParams,
    range: &MeasuringRange,
) -> Result<ConvertedFrame, RadiometryError> {
    params.validate()?;
    range.validate()?;
    let mut summary = ConversionSummary::default();
    let n = frame.dn().len();
    let mut celsius = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for &dn in frame.dn() {
        match temperature_of_dn(f64::from(dn), params) {
            Ok(t) if range.contains(t) => {
                celsius.push(t);
                valid.push(true);
            }
            Ok(t) => {
                summary.out_of_range += 1;
                celsius.push(t);
                valid.push(false);
            }
            Err(_) => {
                summary.domain_violations += 1;
                celsius.push(f64::NAN);
                valid.push(false);
            }
        }
    }
    summary.all_invalid = summary.domain_violations + summary.out_of_range == n;
    let map = TemperatureMap {
        width: frame.width(),
        height: frame.height(),
        celsius,
        valid,
    };
    Ok(ConvertedFrame { map, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FACTORY: RadiometricParams = RadiometricParams::flir_one_pro_factory();
    const RECAL: RadiometricParams = RadiometricParams::flir_one_pro_recalibrated();

    #[test]
    fn factory_reading_at_20000() {
        // Reference: 1435 / ln(18333.4 / (0.0125 * 17716) + 1) - 273.15,
        // evaluated with 50-digit mpmath: 50.902876052845...
        let t = temperature_of_dn(20000.0, &FACTORY).unwrap();
        assert!((t - 50.902_876_052_845).abs() < 1e-9, "{t}");
    }

    #[test]
    fn boiling_point_dn_for_recalibrated_params() {
        // mpmath (50 digits): dn(100 °C) = 28992.746830597..., T(28997) = 100.018121600...
        let dn = dn_of_temperature(100.0, &RECAL).unwrap();
        assert!((dn - 28_992.746_830_597).abs() < 1e-6, "{dn}");
        let t = temperature_of_dn(28997.0, &RECAL).unwrap();
        assert!((t - 100.018_121_600_4).abs() < 1e-9, "{t}");
    }

    #[test]
    fn round_trip_fixed_temperatures() {
        for params in [FACTORY, RECAL] {
            for t in [-10.0, 0.0, 25.0, 60.0, 100.0] {
                let dn = dn_of_temperature(t, &params).unwrap();
                let back = temperature_of_dn(dn, &params).unwrap();
                assert!((back - t).abs() < 1e-9, "{t} -> {back}");
            }
        }
    }

    #[test]
    fn inverse_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for t in -20..=120 {
            let dn = dn_of_temperature(t as f64, &RECAL).unwrap();
            assert!(dn > prev);
            prev = dn;
        }
    }

    #[test]
    fn domain_errors_name_the_failed_constraint() {
        assert!(matches!(
            temperature_of_dn(2284.0, &FACTORY),
            Err(RadiometryError::NonPositiveShiftedDn { .. })
        ));
        let odd = RadiometricParams { f: -1000.0, ..FACTORY };
        assert!(matches!(
            temperature_of_dn(20000.0, &odd),
            Err(RadiometryError::LogArgumentTooSmall { .. })
        ));
        assert!(matches!(
            dn_of_temperature(-300.0, &FACTORY),
            Err(RadiometryError::BelowAbsoluteZero { .. })
        ));
        let big_f = RadiometricParams { f: 1e9, ..FACTORY };
        assert!(matches!(
            dn_of_temperature(25.0, &big_f),
            Err(RadiometryError::InverseDomain { .. })
        ));
        assert!(RadiometricParams::new(0.0, 0.0125, 1435.0, 1.0, 0.0).is_err());
        assert!(MeasuringRange::new(5.0, 5.0).is_err());
    }

    #[test]
    fn uniform_frame_converts_to_uniform_map() {
        let dn = dn_of_temperature(25.0, &RECAL).unwrap().round() as u16;
        let frame = ThermalFrame::new(4, 4, vec![dn; 16]).unwrap();
        let out = convert_frame(&frame, &RECAL, &MeasuringRange::default()).unwrap();
        let expected = temperature_of_dn(f64::from(dn), &RECAL).unwrap();
        assert!((expected - 25.0).abs() < 0.05);
        assert_eq!(out.map.valid_count(), 16);
        assert!(out.map.celsius().iter().all(|&c| c == expected));
        assert!(!out.summary.all_invalid);
    }

    #[test]
    fn domain_pixel_masked() {
        let mut dn = vec![20000u16; 9];
        dn[4] = 1000; // 1000 - 2284 < 0
        let frame = ThermalFrame::new(3, 3, dn).unwrap();
        let out = convert_frame(&frame, &FACTORY, &MeasuringRange::default()).unwrap();
        assert_eq!(out.map.valid_count(), 8);
        assert!(!out.map.valid()[4]);
        assert!(out.map.celsius()[4].is_nan());
        assert_eq!(out.summary.domain_violations, 1);
    }

    #[test]
    fn all_invalid_sets_flag() {
        let frame = ThermalFrame::new(2, 1, vec![0, 1]).unwrap();
        let out = convert_frame(&frame, &FACTORY, &MeasuringRange::default()).unwrap();
        assert!(out.summary.all_invalid);
        assert_eq!(out.map.mean_valid(), None);
    }

    #[test]
    fn out_of_range_is_masked_not_clamped() {
        let hot = dn_of_temperature(150.0, &RECAL).unwrap().round() as u16;
        let frame = ThermalFrame::new(1, 1, vec![hot]).unwrap();
        let out = convert_frame(&frame, &RECAL, &MeasuringRange::default()).unwrap();
        assert!(!out.map.valid()[0]);
        assert!(out.map.celsius()[0] > 149.0);
        assert_eq!(out.summary.out_of_range, 1);
    }

    #[test]
    fn params_json_schema() {
        let json = serde_json::to_value(FACTORY).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"r1": 18333.4, "r2": 0.0125, "b": 1435.0, "f": 1.0, "o": -2284.0})
        );
        let range: MeasuringRange = serde_json::from_str(r#"{"min_c": -20, "max_c": 120}"#).unwrap();
        assert_eq!(range, MeasuringRange::default());
    }
}
