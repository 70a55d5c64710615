//! Alignment and fusion behaviour on generated scenes.

mod common;

use common::*;
use rand::Rng;
use thermforge::enhance::{align_guide, domain_proxy, guided_upsample, shifted_ncc, EnhanceError, GuidedSrConfig};
use thermforge::imaging::{upsample_bilinear, GrayImage, RgbFrame};
use thermforge::matching::ncc_map;
use thermforge::radiometry::{convert_frame, MeasuringRange};
use thermforge::synth::{generate_corpus, generate_scene, SynthConfig};

fn aligned_config() -> SynthConfig {
    SynthConfig {
        max_rgb_shift: 0,
        ..SynthConfig::default()
    }
}

fn thermal_of(scene: &thermforge::synth::SyntheticScene, cfg: &SynthConfig) -> GrayImage {
    convert_frame(&scene.thermal_lo, &cfg.params, &MeasuringRange::default())
        .unwrap()
        .map
        .to_gray_filled(0.0)
}

#[test]
fn proxy_correlates_with_thermal_on_co_located_scenes() {
    let cfg = aligned_config();
    for i in 0..10 {
        let scene = generate_scene(3, i, &cfg);
        let thermal = thermal_of(&scene, &cfg);
        let proxy = domain_proxy(&scene.rgb, &thermal).unwrap();
        let score = ncc_map(&thermal, &proxy.image).unwrap().get(0, 0);
        assert!(score >= 0.8, "scene {i}: NCC {score}");
        assert!((shifted_ncc(&thermal, &proxy.image, 0, 0) - score).abs() < 1e-12);
    }
}

#[test]
fn aligned_guide_gives_zero_offset() {
    let cfg = aligned_config();
    let scene = generate_scene(4, 0, &cfg);
    let thermal = thermal_of(&scene, &cfg);
    let pair = align_guide(&scene.rgb, &thermal, 10, 0.75).unwrap();
    assert_eq!(pair.offset, (0, 0));
    assert_eq!(pair.guide_scale, 4);
    assert!(pair.score >= 0.75);
}

#[test]
fn constructed_shift_is_undone() {
    let cfg = aligned_config();
    for i in 0..5 {
        let scene = generate_scene(5, i, &cfg);
        let thermal = thermal_of(&scene, &cfg);
        let shifted = scene.rgb.shifted(3 * 4, -2 * 4);
        let pair = align_guide(&shifted, &thermal, 10, 0.75).unwrap();
        assert_eq!(pair.offset, (-3, 2), "scene {i}");
    }
}

#[test]
fn generated_misregistration_is_recovered() {
    let cfg = SynthConfig::default();
    for scene in generate_corpus(6, 12, &cfg) {
        let thermal = thermal_of(&scene, &cfg);
        let pair = align_guide(&scene.rgb, &thermal, 10, 0.75).unwrap();
        assert_eq!(pair.offset, (-scene.rgb_shift.0, -scene.rgb_shift.1), "{}", scene.id);
    }
}

#[test]
fn white_noise_guide_is_unaligned() {
    let cfg = SynthConfig::default();
    let mut rng = rng(17);
    for i in 0..5 {
        let scene = generate_scene(7, i, &cfg);
        let thermal = thermal_of(&scene, &cfg);
        let noise: Vec<u8> = (0..160 * 128 * 3).map(|_| rng.random()).collect();
        let guide = RgbFrame::new(160, 128, noise).unwrap();
        match align_guide(&guide, &thermal, 10, 0.75) {
            Err(EnhanceError::Unaligned { best_score, .. }) => assert!(best_score < 0.75),
            other => panic!("expected unaligned, got {other:?}"),
        }
    }
}

#[test]
fn fusion_keeps_global_temperature() {
    let cfg = SynthConfig::default();
    for scene in generate_corpus(8, 20, &cfg) {
        let rec = reconstruct(&scene, &cfg);
        let shift = (rec.guided.mean() - rec.bilinear.mean()).abs();
        assert!(shift <= 0.5, "{}: mean shift {shift}", scene.id);
    }
}

#[test]
fn constant_thermal_stays_constant_for_any_guide() {
    let cfg = SynthConfig::default();
    let scene = generate_scene(9, 0, &cfg);
    let thermal = GrayImage::constant(40, 32, 24.5).unwrap();
    let pair = thermforge::AlignedPair {
        thermal_lo: thermal.clone(),
        guide_rgb: scene.rgb.clone(),
        proxy: thermal.clone(),
        offset: (0, 0),
        score: 1.0,
        guide_scale: 4,
    };
    let out = guided_upsample(&thermal, &pair, &GuidedSrConfig::default()).unwrap();
    assert!(out.values().iter().all(|v| (v - 24.5).abs() <= 1e-6));
}

#[test]
fn guided_output_dims_follow_factor() {
    let cfg = SynthConfig::default();
    let scene = generate_scene(10, 0, &cfg);
    let thermal = thermal_of(&scene, &cfg);
    let pair = align_guide(&scene.rgb, &thermal, 10, 0.75).unwrap();
    for factor in [1, 2, 4] {
        let sr = GuidedSrConfig {
            factor,
            ..GuidedSrConfig::default()
        };
        let out = guided_upsample(&thermal, &pair, &sr).unwrap();
        assert_eq!(out.dims(), (40 * factor, 32 * factor));
        if factor == 1 {
            assert_eq!(out, upsample_bilinear(&thermal, 1).unwrap());
        }
    }
}
