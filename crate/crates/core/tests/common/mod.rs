//! Brute-force oracles and helpers shared by the integration tests. These
//! are written independently of the library code paths they check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermforge::enhance::{align_guide, guided_upsample, GuidedSrConfig, DEFAULT_SEARCH_RADIUS};
use thermforge::imaging::{resize_bilinear, upsample_bilinear, GrayImage};
use thermforge::matching::{scaled_dims, DEFAULT_NCC_THRESHOLD};
use thermforge::radiometry::{convert_frame, MeasuringRange};
use thermforge::synth::SyntheticScene;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> GrayImage {
    let values = (0..w * h).map(|_| rng.random_range(lo..hi)).collect();
    GrayImage::new(w, h, values).unwrap()
}

/// Zero-mean NCC of `template` against the window of `search` at `(x, y)`,
/// straight from the definition. Flat windows score 0.
pub fn ncc_at(search: &GrayImage, template: &GrayImage, x: usize, y: usize) -> f64 {
    let (tw, th) = template.dims();
    let n = (tw * th) as f64;
    let mut sum_s = 0.0;
    let mut sum_t = 0.0;
    for j in 0..th {
        for i in 0..tw {
            sum_s += search.get(x + i, y + j);
            sum_t += template.get(i, j);
        }
    }
    let (ms, mt) = (sum_s / n, sum_t / n);
    let (mut num, mut ss, mut tt) = (0.0, 0.0, 0.0);
    for j in 0..th {
        for i in 0..tw {
            let ds = search.get(x + i, y + j) - ms;
            let dt = template.get(i, j) - mt;
            num += ds * dt;
            ss += ds * ds;
            tt += dt * dt;
        }
    }
    if ss == 0.0 || tt == 0.0 {
        0.0
    } else {
        num / (ss * tt).sqrt()
    }
}

/// Exhaustive best `(scale, x, y, score)`. Ties keep the smallest scale,
/// then the smallest y, then the smallest x.
pub fn exhaustive_match(search: &GrayImage, template: &GrayImage, scales: &[f64]) -> Option<(f64, usize, usize, f64)> {
    let mut sorted = scales.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut best: Option<(f64, usize, usize, f64)> = None;
    for &s in &sorted {
        let (w, h) = scaled_dims(template.width(), template.height(), s);
        if w > search.width() || h > search.height() {
            continue;
        }
        let scaled = resize_bilinear(template, w, h).unwrap();
        for y in 0..=search.height() - h {
            for x in 0..=search.width() - w {
                let v = ncc_at(search, &scaled, x, y);
                if best.is_none_or(|b| v > b.3) {
                    best = Some((s, x, y, v));
                }
            }
        }
    }
    best
}

/// Separable-free SSIM: every window's Gaussian weights are rebuilt from
/// the 2-D formula, moments use E[x²] − μ².
pub fn ssim_oracle(a: &GrayImage, b: &GrayImage, dynamic_range: f64) -> f64 {
    let win = 11usize;
    let sigma: f64 = 1.5;
    let c = 5.0;
    let mut weights = vec![0.0; win * win];
    for j in 0..win {
        for i in 0..win {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            weights[j * win + i] = (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let (w, h) = a.dims();
    let mut acc = 0.0;
    let mut n = 0;
    for y0 in 0..=h - win {
        for x0 in 0..=w - win {
            let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..win {
                for i in 0..win {
                    let wt = weights[j * win + i];
                    let (p, q) = (a.get(x0 + i, y0 + j), b.get(x0 + i, y0 + j));
                    mx += wt * p;
                    my += wt * q;
                    mxx += wt * p * p;
                    myy += wt * q * q;
                    mxy += wt * p * q;
                }
            }
            let vx = mxx - mx * mx;
            let vy = myy - my * my;
            let cov = mxy - mx * my;
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            n += 1;
        }
    }
    acc / n as f64
}

pub fn mse_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s / a.len() as f64
}

pub fn r2_oracle(pred: &[f64], truth: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let mut res = 0.0;
    let mut tot = 0.0;
    for i in 0..truth.len() {
        res += (truth[i] - pred[i]).powi(2);
        tot += (truth[i] - mean).powi(2);
    }
    1.0 - res / tot
}

pub fn gradient_energy_oracle(img: &GrayImage) -> f64 {
    let (w, h) = img.dims();
    let mut s = 0.0;
    let mut n = 0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            s += (img.get(x + 1, y) - img.get(x, y)).powi(2) + (img.get(x, y + 1) - img.get(x, y)).powi(2);
            n += 1;
        }
    }
    s / n as f64
}

/// Bilinear and guided reconstructions of a synthetic scene, in °C.
pub struct Reconstruction {
    pub bilinear: GrayImage,
    pub guided: GrayImage,
    pub truth: GrayImage,
}

pub fn reconstruct(scene: &SyntheticScene, cfg: &thermforge::synth::SynthConfig) -> Reconstruction {
    let range = MeasuringRange::default();
    let converted = convert_frame(&scene.thermal_lo, &cfg.params, &range).unwrap();
    let thermal = converted.map.to_gray_filled(0.0);
    let sr = GuidedSrConfig {
        factor: cfg.factor,
        ..GuidedSrConfig::default()
    };
    let pair = align_guide(&scene.rgb, &thermal, DEFAULT_SEARCH_RADIUS, DEFAULT_NCC_THRESHOLD).unwrap();
    Reconstruction {
        bilinear: upsample_bilinear(&thermal, cfg.factor).unwrap(),
        guided: guided_upsample(&thermal, &pair, &sr).unwrap(),
        truth: scene.truth_hi.to_gray_filled(0.0),
    }
}

pub fn rmse(a: &GrayImage, b: &GrayImage) -> f64 {
    mse_oracle(a.values(), b.values()).sqrt()
}

/// Column-averaged profile of an image.
pub fn column_profile(img: &GrayImage) -> Vec<f64> {
    let (w, h) = img.dims();
    (0..w).map(|x| (0..h).map(|y| img.get(x, y)).sum::<f64>() / h as f64).collect()
}

/// 10–90 % transition width, in pixels, of a monotone step around
/// `edge` in `profile`. Plateaus are sampled `margin` pixels either side.
pub fn edge_width(profile: &[f64], edge: usize, margin: usize) -> f64 {
    let left = profile[edge - margin];
    let right = profile[edge + margin - 1];
    let span = right - left;
    let level = |frac: f64| left + frac * span;
    let crossing = |target: f64| -> f64 {
        for x in edge - margin..edge + margin - 1 {
            let (a, b) = (profile[x] - target, profile[x + 1] - target);
            if a == 0.0 {
                return x as f64;
            }
            if a.signum() != b.signum() {
                return x as f64 + a / (a - b);
            }
        }
        (edge + margin - 1) as f64
    };
    (crossing(level(0.9)) - crossing(level(0.1))).abs()
}
