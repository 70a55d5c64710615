//! Seeded synthetic scenes: canopy-over-soil temperature fields with
//! matching RGB guides and simulated sensor frames.
//!
//! Every random draw comes from a ChaCha stream selected by
//! `(seed, domain, index)`, so any scene can be regenerated on its own.
//!
//! Forward sensor model for the low-resolution frame: per high-res sample,
//! `t + N(0, σ_noise)` is converted to a real DN, blurred by a Gaussian
//! point-spread function, block-averaged by the resolution factor and rounded
//! to an integer count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imaging::{downsample_area, GrayImage, Rect, RgbFrame, ThermalFrame};
use crate::optimize::ReferencePair;
use crate::radiometry::{dn_of_temperature, RadiometricParams, TemperatureMap};

const DOMAIN_SCENE: u64 = 1;
const DOMAIN_DECOY: u64 = 2;
const DOMAIN_WATER_BATH: u64 = 3;
const DOMAIN_STEP_EDGE: u64 = 4;

/// Independent random stream for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 40) | index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub lo_width: usize,
    pub lo_height: usize,
    /// High-res pixels per low-res pixel.
    pub factor: usize,
    /// Size of the high-resolution camera frame (the matching template).
    pub hi_width: usize,
    pub hi_height: usize,
    pub min_leaves: usize,
    pub max_leaves: usize,
    /// Leaf semi-axis range in high-res pixels.
    pub leaf_axis: (f64, f64),
    /// Leaf temperature depression below the soil, °C.
    pub leaf_delta: (f64, f64),
    pub background_c: (f64, f64),
    /// Peak-to-peak amplitude of the smooth background variation, °C.
    pub background_swing: f64,
    /// Per-sample sensor noise, °C.
    pub noise_c: f64,
    /// Gaussian PSF sigma in high-res pixels.
    pub blur_sigma: f64,
    /// RGB sensor noise, 8-bit levels.
    pub rgb_noise: f64,
    /// Maximum RGB/thermal misregistration, low-res pixels.
    pub max_rgb_shift: i64,
    pub decoys: usize,
    pub params: RadiometricParams,
    pub base_timestamp: f64,
    pub frame_interval: f64,
    /// Maximum timestamp skew between the two thermal cameras, seconds.
    pub timestamp_jitter: f64,
    pub water_bath_samples: usize,
    pub water_bath_noise_c: f64,
    pub water_bath_span: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lo_width: 40,
            lo_height: 32,
            factor: 4,
            hi_width: 96,
            hi_height: 80,
            min_leaves: 3,
            max_leaves: 6,
            leaf_axis: (10.0, 26.0),
            leaf_delta: (2.0, 8.0),
            background_c: (22.0, 32.0),
            background_swing: 1.5,
            noise_c: 0.07,
            blur_sigma: 0.5,
            rgb_noise: 1.5,
            max_rgb_shift: 2,
            decoys: 0,
            params: RadiometricParams::flir_one_pro_recalibrated(),
            base_timestamp: 1_656_633_600.0,
            frame_interval: 2.0,
            timestamp_jitter: 0.2,
            water_bath_samples: 200,
            water_bath_noise_c: 0.5,
            water_bath_span: (4.0, 100.0),
        }
    }
}

impl SynthConfig {
    pub fn canvas_dims(&self) -> (usize, usize) {
        (self.lo_width * self.factor, self.lo_height * self.factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Leaf {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
    delta: f64,
    green: [f64; 3],
}

impl Leaf {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// One generated scene with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub id: String,
    pub index: usize,
    /// Ground-truth temperatures over the full low-res field of view, at
    /// `factor ×` resolution.
    pub truth_hi: TemperatureMap,
    pub thermal_lo: ThermalFrame,
    /// High-resolution camera frame (a window of the canvas).
    pub hi_frame: ThermalFrame,
    /// RGB guide covering the low-res field of view at canvas resolution,
    /// misregistered by `rgb_shift`.
    pub rgb: RgbFrame,
    /// Top-left of the high-res frame in low-res pixels.
    pub true_offset: (usize, usize),
    /// Template scale that maps the high-res frame onto the low-res grid.
    pub true_scale: f64,
    /// Displacement of the RGB content relative to the thermal frame, in
    /// low-res pixels; aligning undoes it.
    pub rgb_shift: (i64, i64),
    pub lo_timestamp: f64,
    pub hi_timestamp: f64,
    /// The low-res frame is unrelated noise rather than a view of the scene.
    pub decoy: bool,
}

struct Canvas {
    width: usize,
    height: usize,
    temp: Vec<f64>,
    rgb: Vec<f64>,
}

/// Smooth soil temperature field and its base level.
fn background(rng: &mut ChaCha8Rng, cfg: &SynthConfig, width: usize, height: usize) -> (Vec<f64>, f64) {
    let base = rng.random_range(cfg.background_c.0..=cfg.background_c.1);
    let gx = rng.random_range(-1.0..=1.0);
    let gy = rng.random_range(-1.0..=1.0);
    let fx = rng.random_range(0.5..2.0) * std::f64::consts::TAU / width as f64;
    let fy = rng.random_range(0.5..2.0) * std::f64::consts::TAU / height as f64;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let half = cfg.background_swing / 2.0;
    let mut temp = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f64 / width as f64 - 0.5, y as f64 / height as f64 - 0.5);
            let smooth = 0.5 * (gx * u + gy * v) + 0.5 * (fx * x as f64 + fy * y as f64 + phase).sin();
            temp.push(base + half * smooth);
        }
    }
    (temp, base)
}

fn render_canvas(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Canvas {
    let (width, height) = cfg.canvas_dims();
    let (mut temp, base) = background(rng, cfg, width, height);
    let count = rng.random_range(cfg.min_leaves..=cfg.max_leaves.max(cfg.min_leaves));
    let leaves: Vec<Leaf> = (0..count)
        .map(|_| {
            let delta = rng.random_range(cfg.leaf_delta.0..=cfg.leaf_delta.1);
            // cooler (more transpiring) leaves render darker
            let shade = 1.05 - 0.06 * delta;
            Leaf {
                cx: rng.random_range(0.0..width as f64),
                cy: rng.random_range(0.0..height as f64),
                a: rng.random_range(cfg.leaf_axis.0..=cfg.leaf_axis.1),
                b: rng.random_range(cfg.leaf_axis.0..=cfg.leaf_axis.1),
                angle: rng.random_range(0.0..std::f64::consts::PI),
                delta,
                green: [
                    shade * 45.0 + rng.random_range(-5.0..5.0),
                    shade * 150.0 + rng.random_range(-5.0..5.0),
                    shade * 45.0 + rng.random_range(-5.0..5.0),
                ],
            }
        })
        .collect();
    let soil = [
        rng.random_range(150.0..170.0),
        rng.random_range(112.0..128.0),
        rng.random_range(78.0..92.0),
    ];
    let mut rgb = Vec::with_capacity(3 * width * height);
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let i = y * width + x;
            match leaves.iter().rev().find(|l| l.contains(px, py)) {
                Some(l) => {
                    temp[i] -= l.delta;
                    rgb.extend_from_slice(&l.green);
                }
                None => {
                    // warmer soil is drier and brighter
                    let gain = 1.0 + 0.04 * (temp[i] - base);
                    rgb.extend(soil.iter().map(|c| c * gain));
                }
            }
        }
    }
    Canvas {
        width,
        height,
        temp,
        rgb,
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return img.clone();
    }
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let horizontal = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, wgt)| wgt * img.get((x as i64 + k as i64 - r).clamp(0, w - 1) as usize, y))
            .sum()
    })
    .expect("finite");
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, wgt)| wgt * horizontal.get(x, (y as i64 + k as i64 - r).clamp(0, h - 1) as usize))
            .sum()
    })
    .expect("finite")
}

fn to_dn_counts(values: &[f64]) -> Vec<u16> {
    values.iter().map(|v| v.round().clamp(0.0, 65535.0) as u16).collect()
}

/// Applies the sensor forward model to a high-res temperature field and
/// returns the low-res DN frame.
pub fn forward_model(
    truth: &GrayImage,
    params: &RadiometricParams,
    noise_c: f64,
    blur_sigma: f64,
    factor: usize,
    rng: &mut impl Rng,
) -> ThermalFrame {
    let normal = Normal::new(0.0, noise_c.max(0.0)).expect("valid sigma");
    let dn = truth.map(|t| {
        let noisy = if noise_c > 0.0 { t + normal.sample(rng) } else { t };
        dn_of_temperature(noisy, params).expect("scene temperatures are in the sensor domain")
    });
    let blurred = gaussian_blur(&dn, blur_sigma);
    let lo = downsample_area(&blurred, factor).expect("canvas is a multiple of the factor");
    ThermalFrame::new(lo.width(), lo.height(), to_dn_counts(lo.values())).expect("non-empty")
}

fn noisy_rgb(canvas: &Canvas, rng: &mut ChaCha8Rng, sigma: f64) -> RgbFrame {
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let rgb = canvas
        .rgb
        .iter()
        .map(|&v| {
            let n = if sigma > 0.0 { normal.sample(rng) } else { 0.0 };
            (v + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    RgbFrame::new(canvas.width, canvas.height, rgb).expect("canvas dims")
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

/// Generates scene `index` of the corpus for `seed`. Indices at or beyond
/// `count` (when `cfg.decoys > 0`) are produced by [`generate_corpus`] as
/// decoys.
pub fn generate_scene(seed: u64, index: usize, cfg: &SynthConfig) -> SyntheticScene {
    build_scene(seed, index, cfg, false)
}

fn build_scene(seed: u64, index: usize, cfg: &SynthConfig, decoy: bool) -> SyntheticScene {
    let domain = if decoy { DOMAIN_DECOY } else { DOMAIN_SCENE };
    let mut rng = stream(seed, domain, index as u64);
    let canvas = render_canvas(&mut rng, cfg);
    let truth = GrayImage::new(canvas.width, canvas.height, canvas.temp.clone()).expect("finite");

    let thermal_lo = if decoy {
        let base = dn_of_temperature(truth.mean(), &cfg.params).expect("in domain");
        let spread = (dn_of_temperature(truth.mean() + 4.0, &cfg.params).expect("in domain") - base).abs();
        let dn: Vec<f64> = (0..cfg.lo_width * cfg.lo_height)
            .map(|_| base + rng.random_range(-spread..=spread))
            .collect();
        ThermalFrame::new(cfg.lo_width, cfg.lo_height, to_dn_counts(&dn)).expect("non-empty")
    } else {
        forward_model(&truth, &cfg.params, cfg.noise_c, cfg.blur_sigma, cfg.factor, &mut rng)
    };

    let max_x = cfg.lo_width.saturating_sub(cfg.hi_width.div_ceil(cfg.factor));
    let max_y = cfg.lo_height.saturating_sub(cfg.hi_height.div_ceil(cfg.factor));
    let ox = rng.random_range(0..=max_x);
    let oy = rng.random_range(0..=max_y);
    let window = truth.crop(Rect::new(ox * cfg.factor, oy * cfg.factor, cfg.hi_width, cfg.hi_height));
    let hi_noise = Normal::new(0.0, cfg.noise_c.max(1e-12)).expect("valid sigma");
    let hi_dn = window.map(|t| dn_of_temperature(t + hi_noise.sample(&mut rng), &cfg.params).expect("in domain"));
    let hi_frame = ThermalFrame::new(cfg.hi_width, cfg.hi_height, to_dn_counts(hi_dn.values())).expect("non-empty");

    let shift = (
        rng.random_range(-cfg.max_rgb_shift..=cfg.max_rgb_shift),
        rng.random_range(-cfg.max_rgb_shift..=cfg.max_rgb_shift),
    );
    let k = cfg.factor as i64;
    let rgb = noisy_rgb(&canvas, &mut rng, cfg.rgb_noise).shifted(shift.0 * k, shift.1 * k);

    let lo_timestamp = cfg.base_timestamp + index as f64 * cfg.frame_interval;
    let hi_timestamp = lo_timestamp + rng.random_range(-cfg.timestamp_jitter..=cfg.timestamp_jitter);
    let id = scene_id(index);
    SyntheticScene {
        id: id.clone(),
        index,
        truth_hi: TemperatureMap::from_gray(&truth),
        thermal_lo: thermal_lo.with_capture_id(id.clone()).with_timestamp(lo_timestamp),
        hi_frame: hi_frame.with_capture_id(id.clone()).with_timestamp(hi_timestamp),
        rgb: rgb.with_capture_id(id),
        true_offset: (ox, oy),
        true_scale: 1.0 / cfg.factor as f64,
        rgb_shift: shift,
        lo_timestamp,
        hi_timestamp,
        decoy,
    }
}

/// `count` regular scenes followed by `cfg.decoys` decoy scenes.
pub fn generate_corpus(seed: u64, count: usize, cfg: &SynthConfig) -> Vec<SyntheticScene> {
    use rayon::prelude::*;
    (0..count + cfg.decoys)
        .into_par_iter()
        .map(|i| build_scene(seed, i, cfg, i >= count))
        .collect()
}

/// A straight vertical soil/leaf boundary with co-located RGB edge, no
/// misregistration. Returns the scene and the edge column in canvas pixels.
pub fn step_edge_scene(seed: u64, index: usize, cfg: &SynthConfig) -> (SyntheticScene, usize) {
    let mut rng = stream(seed, DOMAIN_STEP_EDGE, index as u64);
    let (width, height) = cfg.canvas_dims();
    let lo_w = cfg.lo_width;
    // edge on a low-res block boundary in the middle half of the frame
    let edge = cfg.factor * rng.random_range(lo_w / 4..=3 * lo_w / 4);
    let soil_t = rng.random_range(cfg.background_c.0..=cfg.background_c.1);
    let delta = rng.random_range(cfg.leaf_delta.0..=cfg.leaf_delta.1);
    let truth = GrayImage::from_fn(width, height, |x, _| if x >= edge { soil_t - delta } else { soil_t })
        .expect("finite");
    let rgb_canvas = Canvas {
        width,
        height,
        temp: truth.values().to_vec(),
        rgb: (0..width * height)
            .flat_map(|i| {
                if i % width >= edge {
                    [45.0, 140.0, 45.0]
                } else {
                    [155.0, 115.0, 80.0]
                }
            })
            .collect(),
    };
    let thermal_lo = forward_model(&truth, &cfg.params, cfg.noise_c, cfg.blur_sigma, cfg.factor, &mut rng);
    let rgb = noisy_rgb(&rgb_canvas, &mut rng, cfg.rgb_noise);
    let id = format!("edge_{index:04}");
    let hi_frame = thermal_lo.clone();
    let scene = SyntheticScene {
        id: id.clone(),
        index,
        truth_hi: TemperatureMap::from_gray(&truth),
        thermal_lo: thermal_lo.with_capture_id(id.clone()),
        hi_frame,
        rgb: rgb.with_capture_id(id),
        true_offset: (0, 0),
        true_scale: 1.0,
        rgb_shift: (0, 0),
        lo_timestamp: 0.0,
        hi_timestamp: 0.0,
        decoy: false,
    };
    (scene, edge)
}

/// Simulated water-bath log: reference temperatures sweeping linearly across
/// `cfg.water_bath_span`, the camera DN from the true parameters (rounded),
/// and Gaussian thermocouple noise on the reference.
pub fn water_bath(seed: u64, cfg: &SynthConfig) -> Vec<(f64, ReferencePair)> {
    let mut rng = stream(seed, DOMAIN_WATER_BATH, 0);
    let n = cfg.water_bath_samples.max(2);
    let normal = Normal::new(0.0, cfg.water_bath_noise_c.max(0.0)).expect("valid sigma");
    let (t0, t1) = cfg.water_bath_span;
    (0..n)
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
            let dn = dn_of_temperature(t, &cfg.params).expect("bath temperature in domain").round();
            let noise = if cfg.water_bath_noise_c > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            let timestamp = cfg.base_timestamp + 10.0 * i as f64;
            (timestamp, ReferencePair::new(dn, t + noise))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radiometry::temperature_of_dn;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: u64 = stream(7, 1, 0).random();
        let b: u64 = stream(7, 1, 0).random();
        let c: u64 = stream(7, 1, 1).random();
        let d: u64 = stream(7, 2, 0).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn scene_is_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate_scene(11, 3, &cfg);
        let b = generate_scene(11, 3, &cfg);
        assert_eq!(a, b);
        assert_ne!(a.thermal_lo, generate_scene(12, 3, &cfg).thermal_lo);
    }

    #[test]
    fn scene_geometry() {
        let cfg = SynthConfig::default();
        let s = generate_scene(5, 0, &cfg);
        assert_eq!((s.thermal_lo.width(), s.thermal_lo.height()), (40, 32));
        assert_eq!(s.truth_hi.dims(), (160, 128));
        assert_eq!((s.rgb.width(), s.rgb.height()), (160, 128));
        assert_eq!((s.hi_frame.width(), s.hi_frame.height()), (96, 80));
        assert!(s.true_offset.0 + 24 <= 40 && s.true_offset.1 + 20 <= 32);
        assert!((s.hi_timestamp - s.lo_timestamp).abs() <= cfg.timestamp_jitter);
    }

    #[test]
    fn forward_model_inverts_to_block_means() {
        // The sensor noise floor is 70 mK per sample; the decoded low-res frame
        // must sit within 3× that of the block-averaged truth.
        let cfg = SynthConfig::default();
        for index in 0..5 {
            let s = generate_scene(21, index, &cfg);
            let truth = s.truth_hi.to_gray_filled(0.0);
            let block = downsample_area(&truth, cfg.factor).unwrap();
            let mut sse = 0.0;
            for (dn, t) in s.thermal_lo.dn().iter().zip(block.values()) {
                let back = temperature_of_dn(f64::from(*dn), &cfg.params).unwrap();
                sse += (back - t).powi(2);
            }
            let rmse = (sse / block.values().len() as f64).sqrt();
            assert!(rmse <= 3.0 * cfg.noise_c, "scene {index}: rmse {rmse}");
        }
    }

    #[test]
    fn water_bath_spans_the_sweep() {
        let cfg = SynthConfig::default();
        let log = water_bath(3, &cfg);
        assert_eq!(log.len(), 200);
        let dn_first = log[0].1.dn;
        let dn_last = log[199].1.dn;
        assert!(dn_first < dn_last);
        assert!((log[0].1.t_ref - 4.0).abs() < 2.5);
        assert!((log[199].1.t_ref - 100.0).abs() < 2.5);
    }
}
