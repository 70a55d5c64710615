//! RGB-guided thermal enhancement.
//!
//! The RGB guide is brought into the thermal intensity domain by a
//! grayscale + histogram-matching proxy, aligned to the low-resolution
//! thermal frame by a translation-only correlation search, and then fused
//! with the bilinear-upsampled thermal frame through the guided filter's
//! local linear model. The
//! generator/discriminator training losses are exposed as plain functions so
//! an external training loop can evaluate the same objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{downsample_area, histogram_match, resize_to, rgb_to_gray, upsample_bilinear, GrayImage, ImagingError, RgbFrame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnhanceError {
    #[error("no guide offset reached the threshold (best score {best_score:.4} at {best_offset:?})")]
    Unaligned {
        best_score: f64,
        best_offset: (i64, i64),
    },
    #[error("guide {guide:?} is not an integer multiple of thermal {thermal:?}")]
    GuideScale {
        guide: (usize, usize),
        thermal: (usize, usize),
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("discriminator output {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("non-finite loss component")]
    NonFinite,
    #[error("imaging: {0}")]
    Imaging(String),
}

impl From<ImagingError> for EnhanceError {
    fn from(e: ImagingError) -> Self {
        EnhanceError::Imaging(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EnhanceError>;

pub const DEFAULT_SEARCH_RADIUS: usize = 10;

/// Guide translated into the thermal intensity domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Proxy {
    pub image: GrayImage,
    /// The thermal reference was constant, so the proxy is too.
    pub degenerate: bool,
}

/// Grayscale of `guide`, histogram-matched to `thermal` and resized to the
/// thermal frame size.
pub fn domain_proxy(guide: &RgbFrame, thermal: &GrayImage) -> Result<Proxy> {
    let gray = rgb_to_gray(guide);
    let matched = histogram_match(&gray, thermal);
    let image = resize_to(&matched, thermal.width(), thermal.height())?;
    let (lo, hi) = thermal.min_max();
    Ok(Proxy {
        image,
        degenerate: lo == hi,
    })
}

/// Zero-mean correlation of `thermal(x, y)` with `proxy(x − dx, y − dy)`
/// over the overlapping region. Returns 0 when either side is flat there.
pub fn shifted_ncc(thermal: &GrayImage, proxy: &GrayImage, dx: i64, dy: i64) -> f64 {
    let (w, h) = (thermal.width() as i64, thermal.height() as i64);
    let x0 = dx.max(0);
    let x1 = (w + dx).min(w);
    let y0 = dy.max(0);
    let y1 = (h + dy).min(h);
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let (mut st, mut sp) = (0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            st += thermal.get(x as usize, y as usize);
            sp += proxy.get((x - dx) as usize, (y - dy) as usize);
        }
    }
    let (mt, mp) = (st / n, sp / n);
    let (mut cross, mut et, mut ep) = (0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let a = thermal.get(x as usize, y as usize) - mt;
            let b = proxy.get((x - dx) as usize, (y - dy) as usize) - mp;
            cross += a * b;
            et += a * a;
            ep += b * b;
        }
    }
    if et <= 0.0 || ep <= 0.0 {
        return 0.0;
    }
    (cross / (et * ep).sqrt()).clamp(-1.0, 1.0)
}

/// RGB guide registered to a low-resolution thermal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub thermal_lo: GrayImage,
    /// Guide shifted into alignment, same size as the input guide.
    pub guide_rgb: RgbFrame,
    /// Proxy shifted into alignment, at thermal resolution.
    pub proxy: GrayImage,
    /// Shift applied to the guide, in thermal pixels.
    pub offset: (i64, i64),
    pub score: f64,
    /// Guide pixels per thermal pixel.
    pub guide_scale: usize,
}

fn guide_scale(guide: &RgbFrame, thermal: &GrayImage) -> Result<usize> {
    let (gw, gh) = (guide.width(), guide.height());
    let (tw, th) = thermal.dims();
    if gw % tw != 0 || gh % th != 0 || gw / tw != gh / th {
        return Err(EnhanceError::GuideScale {
            guide: (gw, gh),
            thermal: (tw, th),
        });
    }
    Ok(gw / tw)
}

fn shift_gray(img: &GrayImage, dx: i64, dy: i64) -> GrayImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let sx = (x as i64 - dx).clamp(0, w - 1) as usize;
        let sy = (y as i64 - dy).clamp(0, h - 1) as usize;
        img.get(sx, sy)
    })
    .expect("shift preserves finiteness")
}

/// Finds the translation in `[−r, r]²` (thermal pixels) that best aligns the
/// guide's proxy with `thermal`, and applies it to the guide.
///
/// Ties go to the offset with the smaller `|dx| + |dy|`, then smaller `dy`,
/// then smaller `dx`.
pub fn align_guide(guide: &RgbFrame, thermal: &GrayImage, search_radius: usize, threshold: f64) -> Result<AlignedPair> {
    let scale = guide_scale(guide, thermal)?;
    let proxy = domain_proxy(guide, thermal)?;
    let r = search_radius as i64;
    let mut offsets: Vec<(i64, i64)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    offsets.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));

    let mut best = ((0, 0), f64::NEG_INFINITY);
    for &(dx, dy) in &offsets {
        let s = shifted_ncc(thermal, &proxy.image, dx, dy);
        if s > best.1 {
            best = ((dx, dy), s);
        }
    }
    let ((dx, dy), score) = best;
    if score < threshold {
        return Err(EnhanceError::Unaligned {
            best_score: score,
            best_offset: (dx, dy),
        });
    }
    let k = scale as i64;
    Ok(AlignedPair {
        thermal_lo: thermal.clone(),
        guide_rgb: guide.shifted(dx * k, dy * k),
        proxy: shift_gray(&proxy.image, dx, dy),
        offset: (dx, dy),
        score,
        guide_scale: scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidedSrConfig {
    pub factor: usize,
    /// Box radius in high-res pixels.
    pub radius: usize,
    /// Regularization in squared guide-intensity units.
    pub epsilon: f64,
}

impl Default for GuidedSrConfig {
    /// Factor 4, radius 4·factor, epsilon 1e-3 of the squared 8-bit range.
    fn default() -> Self {
        Self {
            factor: 4,
            radius: 16,
            epsilon: 1e-3 * 255.0 * 255.0,
        }
    }
}

impl GuidedSrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factor < 1 {
            return Err(EnhanceError::InvalidConfig("factor must be >= 1"));
        }
        if self.radius < 1 {
            return Err(EnhanceError::InvalidConfig("radius must be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(EnhanceError::InvalidConfig("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Mean over the `(2r+1)²` box around each pixel, truncated at the border.
pub fn box_mean(img: &GrayImage, radius: usize) -> GrayImage {
    let (w, h) = img.dims();
    let stride = w + 1;
    let mut sat = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += img.get(x, y);
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
    GrayImage::from_fn(w, h, |x, y| {
        let x0 = x.saturating_sub(radius);
        let y0 = y.saturating_sub(radius);
        let x1 = (x + radius + 1).min(w);
        let y1 = (y + radius + 1).min(h);
        let s = sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0] + sat[y0 * stride + x0];
        s / ((x1 - x0) * (y1 - y0)) as f64
    })
    .expect("finite box means")
}

fn zip_map(a: &GrayImage, b: &GrayImage, f: impl Fn(f64, f64) -> f64) -> GrayImage {
    let values = a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect();
    GrayImage::new(a.width(), a.height(), values).expect("finite values")
}

/// Box-averaged coefficients `(mean(a), mean(b))` of the guided filter's
/// local linear model `q = a·I + b`, fitted per window with
/// `a = cov(I, p) / (var(I) + ε)` and `b = mean(p) − a·mean(I)`.
pub fn linear_coefficients(input: &GrayImage, guide: &GrayImage, radius: usize, epsilon: f64) -> (GrayImage, GrayImage) {
    assert_eq!(input.dims(), guide.dims(), "guided filter dims");
    let mean_i = box_mean(guide, radius);
    let mean_p = box_mean(input, radius);
    let corr_ip = box_mean(&zip_map(guide, input, |i, p| i * p), radius);
    let corr_ii = box_mean(&guide.map(|i| i * i), radius);

    let n = input.values().len();
    let mut a_vals = Vec::with_capacity(n);
    let mut b_vals = Vec::with_capacity(n);
    for k in 0..n {
        let (mi, mp) = (mean_i.values()[k], mean_p.values()[k]);
        let var = (corr_ii.values()[k] - mi * mi).max(0.0);
        let cov = corr_ip.values()[k] - mi * mp;
        let a = cov / (var + epsilon);
        a_vals.push(a);
        b_vals.push(mp - a * mi);
    }
    let (w, h) = input.dims();
    let a = GrayImage::new(w, h, a_vals).expect("finite");
    let b = GrayImage::new(w, h, b_vals).expect("finite");
    (box_mean(&a, radius), box_mean(&b, radius))
}

/// Classic guided filter: `mean(a)·I + mean(b)`.
pub fn guided_filter(input: &GrayImage, guide: &GrayImage, radius: usize, epsilon: f64) -> GrayImage {
    let (a, b) = linear_coefficients(input, guide, radius, epsilon);
    let values = (0..input.values().len())
        .map(|k| a.values()[k] * guide.values()[k] + b.values()[k])
        .collect();
    GrayImage::new(input.width(), input.height(), values).expect("finite")
}

/// Guided upsampling by detail transfer.
///
/// The local linear model between the guide and the thermal frame is fitted
/// at thermal resolution, against the guide area-averaged to the same grid,
/// so both sides carry the same sampling blur. Its slope is bilinearly
/// upsampled and applied to the guide detail that the
/// downsample/bilinear-upsample round trip removes:
///
/// `out = U(T) + U(mean(a)) · (I − U(D(I)))`
///
/// A flat guide (or `factor = 1`) leaves the bilinear result unchanged, and a
/// flat thermal frame gives `a = 0` and so stays flat. The window radius is
/// `config.radius / factor` thermal pixels, at least 1.
pub fn guided_upsample(thermal_lo: &GrayImage, pair: &AlignedPair, config: &GuidedSrConfig) -> Result<GrayImage> {
    config.validate()?;
    let k = config.factor;
    let base = upsample_bilinear(thermal_lo, k)?;
    let guide = resize_to(&rgb_to_gray(&pair.guide_rgb), base.width(), base.height())?;
    if k == 1 {
        return Ok(base);
    }
    let guide_lo = downsample_area(&guide, k)?;
    let radius_lo = (config.radius / k).max(1);
    let (a_lo, _) = linear_coefficients(thermal_lo, &guide_lo, radius_lo, config.epsilon);
    let slope = upsample_bilinear(&a_lo, k)?;
    let smooth_guide = upsample_bilinear(&guide_lo, k)?;
    let values = (0..base.values().len())
        .map(|i| base.values()[i] + slope.values()[i] * (guide.values()[i] - smooth_guide.values()[i]))
        .collect();
    Ok(GrayImage::new(base.width(), base.height(), values)?)
}

// ---------------------------------------------------------------------------
// training losses

fn dims3(img: &GrayImage) -> (usize, usize, usize) {
    (1, img.width(), img.height())
}

fn check_same(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(EnhanceError::ShapeMismatch(dims3(a), dims3(b)));
    }
    Ok(())
}

fn mean_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Mean absolute difference between an image and its round-trip
/// reconstruction.
pub fn cycle_consistency_loss(original: &GrayImage, reconstructed: &GrayImage) -> Result<f64> {
    check_same(original, reconstructed)?;
    Ok(mean_abs(original.values(), reconstructed.values()))
}

/// Mean squared difference between the high-res target and the translated
/// guide. The squared (L2) form is used.
pub fn identity_loss(target: &GrayImage, translated: &GrayImage) -> Result<f64> {
    check_same(target, translated)?;
    Ok(mean_sq(target.values(), translated.values()))
}

pub fn mse_loss(high_res: &GrayImage, generated: &GrayImage) -> Result<f64> {
    check_same(high_res, generated)?;
    Ok(mean_sq(high_res.values(), generated.values()))
}

/// Multi-channel feature stack, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(channels: usize, width: usize, height: usize, data: Vec<f64>) -> Option<Self> {
        (channels * width * height == data.len()).then_some(Self {
            channels,
            width,
            height,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.width, self.height)
    }
}

/// Feature extractor used by the content loss.
pub trait FeatureExtractor {
    fn extract(&self, img: &GrayImage) -> FeatureGrid;
}

impl<F: Fn(&GrayImage) -> FeatureGrid> FeatureExtractor for F {
    fn extract(&self, img: &GrayImage) -> FeatureGrid {
        self(img)
    }
}

/// Four fixed 3×3 edge detectors: horizontal, vertical and both diagonals.
/// Responses are computed on the interior `(w−2)×(h−2)` region.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeBank;

impl EdgeBank {
    pub const KERNELS: [[f64; 9]; 4] = [
        [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
        [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
        [-2.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 2.0],
        [0.0, -1.0, -2.0, 1.0, 0.0, -1.0, 2.0, 1.0, 0.0],
    ];
}

impl FeatureExtractor for EdgeBank {
    fn extract(&self, img: &GrayImage) -> FeatureGrid {
        let (w, h) = img.dims();
        let (ow, oh) = (w.saturating_sub(2), h.saturating_sub(2));
        let mut data = Vec::with_capacity(4 * ow * oh);
        for k in &Self::KERNELS {
            for y in 0..oh {
                for x in 0..ow {
                    let mut s = 0.0;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            s += k[ky * 3 + kx] * img.get(x + kx, y + ky);
                        }
                    }
                    data.push(s);
                }
            }
        }
        FeatureGrid {
            channels: 4,
            width: ow,
            height: oh,
            data,
        }
    }
}

/// Mean squared difference between two feature stacks.
pub fn content_loss(features_a: &FeatureGrid, features_b: &FeatureGrid) -> Result<f64> {
    if features_a.shape() != features_b.shape() {
        return Err(EnhanceError::ShapeMismatch(features_a.shape(), features_b.shape()));
    }
    if features_a.data.is_empty() {
        return Ok(0.0);
    }
    Ok(mean_sq(&features_a.data, &features_b.data))
}

/// Content loss between two images under a feature extractor.
pub fn content_loss_with(extractor: &dyn FeatureExtractor, high_res: &GrayImage, generated: &GrayImage) -> Result<f64> {
    check_same(high_res, generated)?;
    content_loss(&extractor.extract(high_res), &extractor.extract(generated))
}

/// `−ln p` for a discriminator output `p ∈ (0, 1]`.
pub fn adversarial_loss(discriminator_output: f64) -> Result<f64> {
    let p = discriminator_output;
    if !(p > 0.0 && p <= 1.0) {
        return Err(EnhanceError::InvalidProbability(p));
    }
    Ok(-p.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the adversarial term.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub cycle: f64,
    pub identity: f64,
    pub mse: f64,
    pub content: f64,
    pub adversarial: f64,
}

/// `(cycle + identity) + (mse + content + α·adversarial)`.
pub fn total_loss(c: &LossComponents, weights: &LossWeights) -> Result<f64> {
    let parts = [c.cycle, c.identity, c.mse, c.content, c.adversarial, weights.alpha];
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(EnhanceError::NonFinite);
    }
    Ok((c.cycle + c.identity) + (c.mse + c.content + weights.alpha * c.adversarial))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| (x * 3 + y * 5) as f64).unwrap()
    }

    fn gray_rgb(img: &GrayImage) -> RgbFrame {
        let rgb = img
            .values()
            .iter()
            .flat_map(|&v| {
                let b = v.round().clamp(0.0, 255.0) as u8;
                [b, b, b]
            })
            .collect();
        RgbFrame::new(img.width(), img.height(), rgb).unwrap()
    }

    #[test]
    fn proxy_of_matching_gray_reproduces_thermal() {
        let thermal = GrayImage::from_fn(16, 12, |x, y| ((x * 7 + y * 11) % 50) as f64 * 3.0).unwrap();
        let guide = gray_rgb(&thermal);
        let proxy = domain_proxy(&guide, &thermal).unwrap();
        let (lo, hi) = thermal.min_max();
        let bin = (hi - lo) / 256.0;
        for (p, t) in proxy.image.values().iter().zip(thermal.values()) {
            assert!((p - t).abs() <= bin + 1e-9);
        }
        assert!(!proxy.degenerate);
    }

    #[test]
    fn proxy_of_constant_thermal_is_constant() {
        let thermal = GrayImage::constant(8, 8, 21.5).unwrap();
        let guide = gray_rgb(&ramp(8, 8));
        let proxy = domain_proxy(&guide, &thermal).unwrap();
        assert!(proxy.degenerate);
        assert!(proxy.image.values().iter().all(|&v| v == 21.5));
    }

    #[test]
    fn box_mean_truncates_at_border() {
        let img = GrayImage::new(3, 1, vec![1.0, 2.0, 6.0]).unwrap();
        let m = box_mean(&img, 1);
        assert_eq!(m.values(), &[1.5, 3.0, 4.0]);
    }

    #[test]
    fn flat_guide_returns_bilinear() {
        let lo = ramp(6, 5);
        let guide = RgbFrame::new(24, 20, vec![90; 24 * 20 * 3]).unwrap();
        let pair = AlignedPair {
            thermal_lo: lo.clone(),
            guide_rgb: guide,
            proxy: lo.clone(),
            offset: (0, 0),
            score: 1.0,
            guide_scale: 4,
        };
        let cfg = GuidedSrConfig {
            factor: 4,
            radius: 3,
            epsilon: 10.0,
        };
        let out = guided_upsample(&lo, &pair, &cfg).unwrap();
        let bilinear = upsample_bilinear(&lo, 4).unwrap();
        for (a, b) in out.values().iter().zip(bilinear.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn flat_input_stays_flat() {
        let lo = GrayImage::constant(5, 5, 31.25).unwrap();
        let guide = gray_rgb(&GrayImage::from_fn(10, 10, |x, y| ((x * y * 37) % 255) as f64).unwrap());
        let pair = AlignedPair {
            thermal_lo: lo.clone(),
            guide_rgb: guide,
            proxy: lo.clone(),
            offset: (0, 0),
            score: 1.0,
            guide_scale: 2,
        };
        let cfg = GuidedSrConfig {
            factor: 2,
            radius: 2,
            epsilon: 1.0,
        };
        let out = guided_upsample(&lo, &pair, &cfg).unwrap();
        assert!(out.values().iter().all(|v| (v - 31.25).abs() < 1e-6));
    }

    #[test]
    fn identity_regime_with_large_epsilon() {
        let lo = ramp(7, 6);
        let pair = AlignedPair {
            thermal_lo: lo.clone(),
            guide_rgb: gray_rgb(&lo),
            proxy: lo.clone(),
            offset: (0, 0),
            score: 1.0,
            guide_scale: 1,
        };
        let cfg = GuidedSrConfig {
            factor: 1,
            radius: 2,
            epsilon: 1e12,
        };
        let out = guided_upsample(&lo, &pair, &cfg).unwrap();
        for (a, b) in out.values().iter().zip(lo.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn classic_filter_regimes() {
        let img = GrayImage::from_fn(12, 10, |x, y| ((x * 13 + y * 7) % 11) as f64).unwrap();
        // self-guided with tiny epsilon: a → 1, b → 0
        for (a, b) in guided_filter(&img, &img, 2, 1e-9).values().iter().zip(img.values()) {
            assert!((a - b).abs() < 1e-6);
        }
        // huge epsilon: a → 0, output is the double box mean
        let smooth = box_mean(&box_mean(&img, 2), 2);
        for (a, b) in guided_filter(&img, &img, 2, 1e12).values().iter().zip(smooth.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn config_validation() {
        assert!(GuidedSrConfig { factor: 0, ..Default::default() }.validate().is_err());
        assert!(GuidedSrConfig { radius: 0, ..Default::default() }.validate().is_err());
        assert!(GuidedSrConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
        let d = GuidedSrConfig::default();
        assert_eq!((d.factor, d.radius), (4, 16));
    }

    #[test]
    fn guide_must_be_integer_multiple() {
        let thermal = ramp(8, 6);
        let guide = RgbFrame::new(20, 18, vec![0; 20 * 18 * 3]).unwrap();
        assert!(matches!(
            align_guide(&guide, &thermal, 2, 0.5),
            Err(EnhanceError::GuideScale { .. })
        ));
    }

    #[test]
    fn losses_trivial_cases() {
        let a = ramp(4, 3);
        let b = a.map(|v| v + 2.0);
        assert_eq!(cycle_consistency_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(cycle_consistency_loss(&a, &b).unwrap(), 2.0);
        assert_eq!(identity_loss(&a, &b).unwrap(), 4.0);
        assert_eq!(mse_loss(&a, &a.map(|v| v - 3.0)).unwrap(), 9.0);
        assert!(mse_loss(&a, &ramp(3, 4)).is_err());

        let fa = FeatureGrid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let fb = FeatureGrid::new(2, 2, 1, vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(content_loss(&fa, &fa).unwrap(), 0.0);
        assert_eq!(content_loss(&fa, &fb).unwrap(), 1.0);
        let fc = FeatureGrid::new(1, 4, 1, vec![0.0; 4]).unwrap();
        assert!(content_loss(&fa, &fc).is_err());

        assert_eq!(adversarial_loss(1.0).unwrap(), 0.0);
        assert!((adversarial_loss(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((adversarial_loss((-2.0f64).exp()).unwrap() - 2.0).abs() < 1e-15);
        assert!(adversarial_loss(0.0).is_err());
        assert!(adversarial_loss(1.5).is_err());
    }

    #[test]
    fn total_loss_arithmetic() {
        let w = LossWeights { alpha: 0.1 };
        assert_eq!(total_loss(&LossComponents::default(), &w).unwrap(), 0.0);
        let ones = LossComponents {
            cycle: 1.0,
            identity: 1.0,
            mse: 1.0,
            content: 1.0,
            adversarial: 1.0,
        };
        assert!((total_loss(&ones, &w).unwrap() - 4.1).abs() < 1e-15);
        let no_adv = LossComponents {
            adversarial: 123.0,
            ..ones
        };
        assert_eq!(total_loss(&no_adv, &LossWeights { alpha: 0.0 }).unwrap(), 4.0);
        let bad = LossComponents {
            mse: f64::NAN,
            ..ones
        };
        assert_eq!(total_loss(&bad, &w).unwrap_err(), EnhanceError::NonFinite);
    }

    #[test]
    fn edge_bank_responds_to_edges_only() {
        let flat = GrayImage::constant(6, 6, 3.0).unwrap();
        let f = EdgeBank.extract(&flat);
        assert_eq!(f.shape(), (4, 4, 4));
        assert!(f.data.iter().all(|&v| v == 0.0));
        let step = GrayImage::from_fn(6, 6, |x, _| if x >= 3 { 1.0 } else { 0.0 }).unwrap();
        let f = EdgeBank.extract(&step);
        // vertical-edge channel fires, horizontal-edge channel does not
        assert!(f.data[16..32].iter().any(|&v| v > 0.0));
        assert!(f.data[..16].iter().all(|&v| v == 0.0));
    }
}
