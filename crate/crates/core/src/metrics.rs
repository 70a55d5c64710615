//! Evaluation metrics: RMSE in °C, coefficient of determination, PSNR, SSIM
//! and a gradient-energy sharpness proxy.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::imaging::GrayImage;
use crate::radiometry::TemperatureMap;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no jointly valid samples")]
    Empty,
    #[error("reference values have zero variance")]
    ZeroVariance,
    #[error("peak / dynamic range must be positive")]
    InvalidPeak,
    #[error("image {width}x{height} is smaller than {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("no fully valid SSIM window")]
    NoValidWindow,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

pub fn rmse_values(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((sse / a.len() as f64).sqrt())
}

/// RMSE over pixels valid in both maps.
pub fn rmse_celsius(a: &TemperatureMap, b: &TemperatureMap) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let (sse, n) = a
        .celsius()
        .iter()
        .zip(b.celsius())
        .zip(a.valid().iter().zip(b.valid()))
        .filter(|(_, (&va, &vb))| va && vb)
        .fold((0.0, 0usize), |(s, n), ((x, y), _)| (s + (x - y).powi(2), n + 1));
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    Ok((sse / n as f64).sqrt())
}

/// `1 − SS_res / SS_tot` against the mean of `reference`.
pub fn r_squared(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(MetricsError::LengthMismatch(predicted.len(), reference.len()));
    }
    if reference.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let ss_res: f64 = predicted
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn same_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    Ok(())
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_dims(a, b)?;
    let sse: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    Ok(sse / a.values().len() as f64)
}

/// `10·log10(peak² / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &GrayImage, b: &GrayImage, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(MetricsError::InvalidPeak);
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            w[y * SSIM_WINDOW + x] = g[x] * g[y] / (total * total);
        }
    }
    w
}

/// Mean SSIM over all fully-inside 11×11 Gaussian windows.
pub fn ssim(a: &GrayImage, b: &GrayImage, dynamic_range: f64) -> Result<f64> {
    same_dims(a, b)?;
    ssim_masked(a, b, None, dynamic_range)
}

/// SSIM that skips any window touching a pixel where `mask` is false.
pub fn ssim_masked(a: &GrayImage, b: &GrayImage, mask: Option<&[bool]>, dynamic_range: f64) -> Result<f64> {
    same_dims(a, b)?;
    if !(dynamic_range > 0.0) {
        return Err(MetricsError::InvalidPeak);
    }
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            width: w,
            height: h,
            min: SSIM_WINDOW,
        });
    }
    if let Some(m) = mask {
        assert_eq!(m.len(), w * h, "mask length");
    }
    let weights = gaussian_window();
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let (av, bv) = (a.values(), b.values());

    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - SSIM_WINDOW {
        'window: for x0 in 0..=w - SSIM_WINDOW {
            if let Some(m) = mask {
                for dy in 0..SSIM_WINDOW {
                    let row = (y0 + dy) * w + x0;
                    if m[row..row + SSIM_WINDOW].iter().any(|&ok| !ok) {
                        continue 'window;
                    }
                }
            }
            let (mut mx, mut my) = (0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let k = dy * SSIM_WINDOW + dx;
                    let i = (y0 + dy) * w + x0 + dx;
                    mx += weights[k] * av[i];
                    my += weights[k] * bv[i];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let k = dy * SSIM_WINDOW + dx;
                    let i = (y0 + dy) * w + x0 + dx;
                    let (ex, ey) = (av[i] - mx, bv[i] - my);
                    vx += weights[k] * ex * ex;
                    vy += weights[k] * ey * ey;
                    cxy += weights[k] * ex * ey;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::NoValidWindow);
    }
    Ok(total / count as f64)
}

/// Mean of `gx² + gy²` over the `(w−1)×(h−1)` pixels where both forward
/// differences exist.
pub fn gradient_energy(img: &GrayImage) -> Result<f64> {
    let (w, h) = img.dims();
    if w < 2 || h < 2 {
        return Err(MetricsError::TooSmall {
            width: w,
            height: h,
            min: 2,
        });
    }
    let mut sum = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let v = img.get(x, y);
            let gx = img.get(x + 1, y) - v;
            let gy = img.get(x, y + 1) - v;
            sum += gx * gx + gy * gy;
        }
    }
    Ok(sum / ((w - 1) * (h - 1)) as f64)
}

mod sentinel {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "nan" => Ok(f64::NAN),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected number, \"inf\" or \"nan\", got {t:?}"))),
        }
    }
}

/// Per-image evaluation summary. `psnr_db` is `+∞` (serialized as `"inf"`)
/// for identical inputs; undefined values serialize as `"nan"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse_c: f64,
    #[serde(with = "sentinel")]
    pub r2: f64,
    #[serde(with = "sentinel")]
    pub psnr_db: f64,
    pub psnr_peak: f64,
    #[serde(with = "sentinel")]
    pub ssim: f64,
    #[serde(with = "sentinel")]
    pub gradient_energy_ratio: f64,
    pub n_pixels: usize,
}

/// Compares a candidate temperature map against ground truth on the joint
/// validity mask. `peak` is used for both PSNR and the SSIM dynamic range.
/// `r2` is NaN when the truth is constant, `ssim` is NaN when no fully valid
/// window exists.
pub fn evaluate(candidate: &TemperatureMap, truth: &TemperatureMap, peak: f64) -> Result<MetricReport> {
    if !(peak > 0.0) {
        return Err(MetricsError::InvalidPeak);
    }
    if candidate.dims() != truth.dims() {
        return Err(MetricsError::DimensionMismatch {
            a: candidate.dims(),
            b: truth.dims(),
        });
    }
    let joint: Vec<bool> = candidate
        .valid()
        .iter()
        .zip(truth.valid())
        .map(|(a, b)| *a && *b)
        .collect();
    let (mut pred, mut reference) = (Vec::new(), Vec::new());
    for ((&c, &t), &ok) in candidate.celsius().iter().zip(truth.celsius()).zip(&joint) {
        if ok {
            pred.push(c);
            reference.push(t);
        }
    }
    let rmse_c = rmse_celsius(candidate, truth)?;
    let r2 = match r_squared(&pred, &reference) {
        Ok(v) => v,
        Err(MetricsError::ZeroVariance) => f64::NAN,
        Err(e) => return Err(e),
    };
    let psnr_db = psnr_from_mse(rmse_c * rmse_c, peak);
    let a = candidate.to_gray_filled(0.0);
    let b = truth.to_gray_filled(0.0);
    let ssim = match ssim_masked(&a, &b, Some(&joint), peak) {
        Ok(v) => v,
        Err(MetricsError::TooSmall { .. } | MetricsError::NoValidWindow) => f64::NAN,
        Err(e) => return Err(e),
    };
    let ge_truth = gradient_energy(&b).unwrap_or(0.0);
    let ge_cand = gradient_energy(&a).unwrap_or(0.0);
    let gradient_energy_ratio = if ge_truth > 0.0 {
        ge_cand / ge_truth
    } else {
        f64::NAN
    };
    Ok(MetricReport {
        rmse_c,
        r2,
        psnr_db,
        psnr_peak: peak,
        ssim,
        gradient_energy_ratio,
        n_pixels: pred.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> GrayImage {
        GrayImage::from_fn(w, h, f).unwrap()
    }

    #[test]
    fn rmse_cases() {
        let a = TemperatureMap::new(2, 1, vec![0.0, 0.0], vec![true, true]).unwrap();
        let b = TemperatureMap::new(2, 1, vec![3.0, 4.0], vec![true, true]).unwrap();
        assert_eq!(rmse_celsius(&a, &a).unwrap(), 0.0);
        assert!((rmse_celsius(&a, &b).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);

        let masked = TemperatureMap::new(2, 1, vec![3.0, 400.0], vec![true, false]).unwrap();
        assert!((rmse_celsius(&a, &masked).unwrap() - 3.0).abs() < 1e-15);
        let none = TemperatureMap::new(2, 1, vec![0.0, 0.0], vec![false, false]).unwrap();
        assert_eq!(rmse_celsius(&a, &none).unwrap_err(), MetricsError::Empty);
    }

    #[test]
    fn r_squared_cases() {
        let r = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(r_squared(&r, &r).unwrap(), 1.0);
        assert_eq!(r_squared(&[3.5; 4], &r).unwrap(), 0.0);
        assert_eq!(r_squared(&r, &[2.0; 4]).unwrap_err(), MetricsError::ZeroVariance);
    }

    #[test]
    fn psnr_cases() {
        let a = img(4, 4, |x, y| (x * y) as f64);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &b, 0.0).unwrap_err(), MetricsError::InvalidPeak);
    }

    #[test]
    fn ssim_identity_and_luminance_shift() {
        let a = img(16, 16, |x, y| ((x * 7 + y * 13) % 17) as f64 * 10.0);
        assert_eq!(ssim(&a, &a, 255.0).unwrap(), 1.0);
        let shifted = a.map(|v| v + 255.0);
        assert!(ssim(&a, &shifted, 255.0).unwrap() < 0.9);
        let small = img(10, 16, |_, _| 0.0);
        assert!(matches!(
            ssim(&small, &small, 1.0),
            Err(MetricsError::TooSmall { .. })
        ));
    }

    #[test]
    fn gradient_energy_step() {
        // Step of height 5 between columns 3 and 4 of an 8×6 image: only
        // column 3 carries gx² = 25, on each of the 5 rows that are sampled.
        let step = img(8, 6, |x, _| if x >= 4 { 5.0 } else { 0.0 });
        let expected = 25.0 * 5.0 / (7.0 * 5.0);
        assert!((gradient_energy(&step).unwrap() - expected).abs() < 1e-12);
        assert_eq!(gradient_energy(&img(3, 3, |_, _| 2.0)).unwrap(), 0.0);
        assert!(gradient_energy(&img(1, 5, |_, _| 0.0)).is_err());
    }

    #[test]
    fn report_serializes_inf_psnr() {
        let m = TemperatureMap::from_gray(&img(12, 12, |x, y| (x + 2 * y) as f64));
        let r = evaluate(&m, &m, 140.0).unwrap();
        assert_eq!(r.rmse_c, 0.0);
        assert_eq!(r.ssim, 1.0);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["psnr_db"], "inf");
        let back: MetricReport = serde_json::from_value(json).unwrap();
        assert_eq!(back.psnr_db, f64::INFINITY);
    }

    #[test]
    fn report_round_trips_nan_fields() {
        let flat = TemperatureMap::from_gray(&img(12, 12, |_, _| 20.0));
        let r = evaluate(&flat, &flat, 140.0).unwrap();
        assert!(r.r2.is_nan() && r.gradient_energy_ratio.is_nan());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"r2\":\"nan\""));
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert!(back.r2.is_nan() && back.gradient_energy_ratio.is_nan());
        assert_eq!(back.psnr_db, f64::INFINITY);
    }
}
