//! Scale-swept zero-mean normalized cross-correlation template matching.
//!
//! The high-resolution frame is the template; it is resized to each
//! candidate scale and slid over the low-resolution search frame. The best
//! `(scale, x, y)` by correlation coefficient wins, ties going to the smaller
//! scale, then the smaller `y`, then the smaller `x`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{resize_bilinear, GrayImage, Rect};

/// Default acceptance threshold on the correlation score.
pub const DEFAULT_NCC_THRESHOLD: f64 = 0.75;
pub const DEFAULT_PADDING: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchingError {
    #[error("template {template:?} larger than search image {search:?}")]
    TemplateTooLarge {
        template: (usize, usize),
        search: (usize, usize),
    },
    #[error("template has zero variance")]
    DegenerateTemplate,
    #[error("no scales given")]
    NoScales,
    #[error("invalid scale {0}")]
    InvalidScale(f64),
    #[error("no scale yields a template that fits the search image")]
    NoScaleFits,
    #[error("match score {score:.4} is below the acceptance threshold")]
    NotAccepted { score: f64 },
}

pub type Result<T> = std::result::Result<T, MatchingError>;

fn centered(values: &[f64]) -> (Vec<f64>, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let c: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let energy = c.iter().map(|v| v * v).sum();
    (c, energy)
}

/// Squared-deviation sums at or below this fraction of the window's squared
/// magnitude count as zero variance.
const FLAT_WINDOW_RTOL: f64 = 1e-24;

/// Correlation-coefficient map of size `(W − w + 1) × (H − h + 1)`.
///
/// Each entry is `Σ T'·I' / sqrt(Σ T'² · Σ I'²)` where primes denote the
/// template and window with their means removed. Windows with no variance
/// score 0.
pub fn ncc_map(search: &GrayImage, template: &GrayImage) -> Result<GrayImage> {
    let (sw, sh) = search.dims();
    let (tw, th) = template.dims();
    if tw > sw || th > sh {
        return Err(MatchingError::TemplateTooLarge {
            template: (tw, th),
            search: (sw, sh),
        });
    }
    let (t, t_energy) = centered(template.values());
    let t_scale = template.values().iter().map(|v| v * v).sum::<f64>();
    if t_energy <= FLAT_WINDOW_RTOL.sqrt() * t_scale || t_energy == 0.0 {
        return Err(MatchingError::DegenerateTemplate);
    }

    // Summed-area table for window means.
    let stride = sw + 1;
    let mut sat = vec![0.0; stride * (sh + 1)];
    for y in 0..sh {
        let mut row = 0.0;
        for x in 0..sw {
            row += search.get(x, y);
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }

    let (mw, mh) = (sw - tw + 1, sh - th + 1);
    let n = (tw * th) as f64;
    let s = search.values();
    let mut out = Vec::with_capacity(mw * mh);
    for y in 0..mh {
        for x in 0..mw {
            let sum = sat[(y + th) * stride + x + tw] - sat[y * stride + x + tw]
                - sat[(y + th) * stride + x]
                + sat[y * stride + x];
            let mean = sum / n;
            let (mut cross, mut energy, mut magnitude) = (0.0, 0.0, 0.0);
            for dy in 0..th {
                let row = &s[(y + dy) * sw + x..(y + dy) * sw + x + tw];
                let trow = &t[dy * tw..(dy + 1) * tw];
                for (iv, tv) in row.iter().zip(trow) {
                    let d = iv - mean;
                    cross += tv * d;
                    energy += d * d;
                    magnitude += iv * iv;
                }
            }
            let score = if energy <= FLAT_WINDOW_RTOL * magnitude || energy == 0.0 {
                0.0
            } else {
                (cross / (t_energy * energy).sqrt()).clamp(-1.0, 1.0)
            };
            out.push(score);
        }
    }
    Ok(GrayImage::new(mw, mh, out).expect("finite scores"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub x_star: usize,
    pub y_star: usize,
    pub scale: f64,
    pub score: f64,
    pub accepted: bool,
    /// Template size after resizing to `scale`.
    pub template_width: usize,
    pub template_height: usize,
}

/// Template size for a scale, rounded to the nearest pixel (at least 1).
pub fn scaled_dims(width: usize, height: usize, scale: f64) -> (usize, usize) {
    let w = ((width as f64 * scale).round() as usize).max(1);
    let h = ((height as f64 * scale).round() as usize).max(1);
    (w, h)
}

/// Nine scales spanning ±10% around `nominal`; the middle entry is exactly
/// `nominal`.
pub fn default_scales(nominal: f64) -> Vec<f64> {
    (0..9)
        .map(|k| nominal * (1.0 + 0.1 * (k as f64 - 4.0) / 4.0))
        .collect()
}

fn argmax(map: &GrayImage) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for y in 0..map.height() {
        for x in 0..map.width() {
            let v = map.get(x, y);
            if v > best.2 {
                best = (x, y, v);
            }
        }
    }
    best
}

/// Searches every scale and offset for the highest correlation.
///
/// Scales whose resized template does not fit, or resizes to a flat image,
/// are skipped.
pub fn best_match(search: &GrayImage, template: &GrayImage, scales: &[f64], threshold: f64) -> Result<MatchResult> {
    if scales.is_empty() {
        return Err(MatchingError::NoScales);
    }
    if let Some(&bad) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(MatchingError::InvalidScale(bad));
    }
    let mut ordered = scales.to_vec();
    ordered.sort_by(f64::total_cmp);
    ordered.dedup();

    let per_scale: Vec<Option<MatchResult>> = ordered
        .par_iter()
        .map(|&scale| {
            let (tw, th) = scaled_dims(template.width(), template.height(), scale);
            if tw > search.width() || th > search.height() {
                return None;
            }
            let resized = resize_bilinear(template, tw, th).ok()?;
            let map = ncc_map(search, &resized).ok()?;
            let (x, y, score) = argmax(&map);
            Some(MatchResult {
                x_star: x,
                y_star: y,
                scale,
                score,
                accepted: score >= threshold,
                template_width: tw,
                template_height: th,
            })
        })
        .collect();

    // `ordered` is ascending, so a strict comparison keeps the smallest scale
    // on ties; within a scale `argmax` already prefers smaller y, then x.
    let mut best: Option<MatchResult> = None;
    for m in per_scale.into_iter().flatten() {
        if best.is_none_or(|b| m.score > b.score) {
            best = Some(m);
        }
    }
    best.ok_or(MatchingError::NoScaleFits)
}

/// Crop rectangles for one accepted match, each in its image's original
/// pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub rect_lo: Rect,
    pub rect_hi: Rect,
    pub rect_rgb: Option<Rect>,
    pub padding: usize,
}

fn clamp_rect(x0: f64, y0: f64, x1: f64, y1: f64, width: usize, height: usize) -> Rect {
    let cx0 = x0.floor().clamp(0.0, width as f64) as usize;
    let cy0 = y0.floor().clamp(0.0, height as f64) as usize;
    let cx1 = x1.ceil().clamp(0.0, width as f64) as usize;
    let cy1 = y1.ceil().clamp(0.0, height as f64) as usize;
    Rect::new(cx0, cy0, cx1.saturating_sub(cx0), cy1.saturating_sub(cy0))
}

/// Derives paired crops from a match.
///
/// The resized-template footprint in the low-res frame is grown by
/// `padding` on every side. That padded box, clamped to the low-res frame,
/// is `rect_lo`. The unclamped box is mapped back through the per-axis
/// template scale to the high-res frame and clamped there to give `rect_hi`.
/// `rect_rgb` is `rect_lo` scaled by the RGB:low-res size ratio.
pub fn derive_crops(
    m: &MatchResult,
    lo_dims: (usize, usize),
    hi_dims: (usize, usize),
    rgb_dims: Option<(usize, usize)>,
    padding: usize,
) -> Result<CropSpec> {
    if !m.accepted {
        return Err(MatchingError::NotAccepted { score: m.score });
    }
    let pad = padding as f64;
    let (x, y) = (m.x_star as f64, m.y_star as f64);
    let (bx0, by0) = (x - pad, y - pad);
    let (bx1, by1) = (
        x + m.template_width as f64 + pad,
        y + m.template_height as f64 + pad,
    );
    let rect_lo = clamp_rect(bx0, by0, bx1, by1, lo_dims.0, lo_dims.1);

    let sx = m.template_width as f64 / hi_dims.0 as f64;
    let sy = m.template_height as f64 / hi_dims.1 as f64;
    let rect_hi = clamp_rect(
        (bx0 - x) / sx,
        (by0 - y) / sy,
        (bx1 - x) / sx,
        (by1 - y) / sy,
        hi_dims.0,
        hi_dims.1,
    );

    let rect_rgb = rgb_dims.map(|(rw, rh)| {
        let kx = rw as f64 / lo_dims.0 as f64;
        let ky = rh as f64 / lo_dims.1 as f64;
        clamp_rect(
            rect_lo.x as f64 * kx,
            rect_lo.y as f64 * ky,
            (rect_lo.x + rect_lo.width) as f64 * kx,
            (rect_lo.y + rect_lo.height) as f64 * ky,
            rw,
            rh,
        )
    });

    Ok(CropSpec {
        rect_lo,
        rect_hi,
        rect_rgb,
        padding,
    })
}
