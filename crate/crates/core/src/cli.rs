//! The `thermforge` command-line tool.
//!
//! Exit status: 0 on success, 1 on input or configuration errors, 2 when a
//! command completed but some items failed.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enhance::{
    align_guide, content_loss_with, guided_upsample, mse_loss, total_loss, EdgeBank, GuidedSrConfig, LossComponents,
    LossWeights, DEFAULT_SEARCH_RADIUS,
};
use crate::imaging::{load_pgm16, load_ppm, save_pgm16, save_ppm, upsample_bilinear, ImagingError};
use crate::matching::{best_match, default_scales, derive_crops, CropSpec, MatchResult, DEFAULT_NCC_THRESHOLD, DEFAULT_PADDING};
use crate::metrics::{evaluate, MetricReport};
use crate::optimize::{calibrate, CalibrationReport, ReferencePair, SimplexConfig};
use crate::radiometry::{convert_frame, MeasuringRange, RadiometricParams, TemperatureMap};
use crate::store::{self, load_temperature_map, save_temperature_map, write_json, StoreError};
use crate::synth::{generate_corpus, water_bath, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    InputError = 1,
    CompletedWithFailures = 2,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn load_frame(path: &Path) -> Result<crate::imaging::ThermalFrame> {
    load_pgm16(path).map_err(|e| file_err(path, e))
}

fn imaging_err(path: &Path) -> impl FnOnce(ImagingError) -> CliError + '_ {
    move |e| file_err(path, e)
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub params_path: Option<PathBuf>,
    pub range: MeasuringRange,
    pub ncc_threshold: f64,
    pub scales: Vec<f64>,
    pub padding: usize,
    pub sr: GuidedSrConfig,
    /// Adversarial weight; no default, required only for the loss report.
    pub weights: Option<LossWeights>,
    pub seed: u64,
    /// Maximum timestamp difference for frames to be paired, seconds.
    pub pair_window_s: f64,
    /// Guide alignment search radius, low-res pixels.
    pub search_radius: usize,
    pub simplex: SimplexConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            params_path: None,
            range: MeasuringRange::default(),
            ncc_threshold: DEFAULT_NCC_THRESHOLD,
            scales: default_scales(0.25),
            padding: DEFAULT_PADDING,
            sr: GuidedSrConfig::default(),
            weights: None,
            seed: 0,
            pair_window_s: 0.5,
            search_radius: DEFAULT_SEARCH_RADIUS,
            simplex: SimplexConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ncc_threshold > 0.0 && self.ncc_threshold <= 1.0) {
            return Err(CliError::Config("ncc_threshold must be in (0, 1]".into()));
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(CliError::Config("scales must be a non-empty list of positive numbers".into()));
        }
        if !(self.pair_window_s >= 0.0) {
            return Err(CliError::Config("pair_window_s must be non-negative".into()));
        }
        self.range.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.sr.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.simplex.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(w) = &self.weights {
            if !w.alpha.is_finite() || w.alpha < 0.0 {
                return Err(CliError::Config("weights.alpha must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

fn load_params(path: &Path) -> Result<RadiometricParams> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let params: RadiometricParams = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    params.validate().map_err(|e| file_err(path, e))?;
    Ok(params)
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    Ok(write_json(path, value)?)
}

// ---------------------------------------------------------------------------
// calibrate

#[derive(Debug, Deserialize)]
struct LogRow {
    #[allow(dead_code)]
    timestamp: f64,
    dn: f64,
    t_ref_c: f64,
}

/// Reads a `timestamp,dn,t_ref_c` CSV log.
pub fn read_reference_log(path: &Path) -> Result<Vec<ReferencePair>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["timestamp", "dn", "t_ref_c"] {
        return Err(CliError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "expected header `timestamp,dn,t_ref_c`".into(),
        });
    }
    let mut pairs = Vec::new();
    for row in reader.deserialize::<LogRow>() {
        let row = row.map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        pairs.push(ReferencePair::new(row.dn, row.t_ref_c));
    }
    Ok(pairs)
}

pub fn write_reference_log(path: &Path, rows: &[(f64, ReferencePair)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| file_err(path, e))?;
    writer
        .write_record(["timestamp", "dn", "t_ref_c"])
        .map_err(|e| file_err(path, e))?;
    for (ts, p) in rows {
        writer
            .write_record([format!("{ts:.3}"), format!("{}", p.dn), format!("{:.4}", p.t_ref)])
            .map_err(|e| file_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))
}

pub fn cmd_calibrate(log_csv: &Path, initial_json: &Path, out_json: &Path, cfg: &PipelineConfig) -> Result<ExitStatus> {
    let pairs = read_reference_log(log_csv)?;
    let initial = load_params(initial_json)?;
    let report: CalibrationReport = calibrate(&pairs, &initial, &cfg.simplex).map_err(|e| file_err(log_csv, e))?;
    save_json(out_json, &report)?;
    Ok(if report.converged {
        ExitStatus::Success
    } else {
        ExitStatus::CompletedWithFailures
    })
}

// ---------------------------------------------------------------------------
// convert

pub fn cmd_convert(
    frame_pgm: &Path,
    params_json: &Path,
    out_pgm: &Path,
    out_sidecar: &Path,
    cfg: &PipelineConfig,
) -> Result<ExitStatus> {
    let frame = load_frame(frame_pgm)?;
    let params = load_params(params_json)?;
    let converted = convert_frame(&frame, &params, &cfg.range).map_err(|e| CliError::Config(e.to_string()))?;
    save_temperature_map(&converted.map, &cfg.range, Some(converted.summary), out_pgm, out_sidecar)?;
    if converted.summary.all_invalid {
        eprintln!("warning: {}: no pixel converted to a valid temperature", frame_pgm.display());
    }
    Ok(ExitStatus::Success)
}

// ---------------------------------------------------------------------------
// pair

#[derive(Debug, Clone)]
struct Stamped {
    timestamp: f64,
    path: PathBuf,
    stem: String,
}

fn list_stamped(dir: &Path, ext: &str, warnings: &mut Vec<String>) -> Result<Vec<Stamped>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        match stem.parse::<f64>() {
            Ok(timestamp) if timestamp.is_finite() => out.push(Stamped { timestamp, path, stem }),
            _ => warnings.push(format!("{}: file name is not a timestamp, skipped", path.display())),
        }
    }
    out.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then_with(|| a.stem.cmp(&b.stem)));
    Ok(out)
}

fn nearest(items: &[Stamped], timestamp: f64, window: f64) -> Option<&Stamped> {
    items
        .iter()
        .filter(|s| (s.timestamp - timestamp).abs() <= window)
        .min_by(|a, b| {
            (a.timestamp - timestamp)
                .abs()
                .total_cmp(&(b.timestamp - timestamp).abs())
                .then_with(|| a.stem.cmp(&b.stem))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub lo_file: String,
    pub hi_file: String,
    pub rgb_file: Option<String>,
    #[serde(rename = "match")]
    pub matched: MatchResult,
    pub crops: Option<CropSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub candidates: usize,
    pub accepted: Vec<PairRecord>,
    pub rejected: Vec<PairRecord>,
    pub failed: Vec<String>,
    pub unpaired_hi: Vec<String>,
    pub acceptance_rate: f64,
    pub warnings: Vec<String>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_pair(lo_dir: &Path, hi_dir: &Path, rgb_dir: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<ExitStatus> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let lo = list_stamped(lo_dir, "pgm", &mut warnings)?;
    let hi = list_stamped(hi_dir, "pgm", &mut warnings)?;
    let rgb = list_stamped(rgb_dir, "ppm", &mut warnings)?;
    if lo.is_empty() || hi.is_empty() {
        return Err(CliError::Input(format!(
            "no timestamped frames in {} or {}",
            lo_dir.display(),
            hi_dir.display()
        )));
    }
    if rgb.is_empty() {
        warnings.push(format!("no RGB frames in {}; crops produced without RGB", rgb_dir.display()));
    }

    let mut unpaired_hi = Vec::new();
    let mut candidates = Vec::new();
    for h in &hi {
        match nearest(&lo, h.timestamp, cfg.pair_window_s) {
            Some(l) => candidates.push((l.clone(), h.clone(), nearest(&rgb, l.timestamp, cfg.pair_window_s).cloned())),
            None => unpaired_hi.push(file_name(&h.path)),
        }
    }

    let pairs_dir = out_dir.join("pairs");
    mkdir(&pairs_dir)?;
    let outcomes: Vec<std::result::Result<(bool, PairRecord), String>> = candidates
        .par_iter()
        .map(|(l, h, r)| process_pair(l, h, r.as_ref(), &pairs_dir, cfg).map_err(|e| e.to_string()))
        .collect();

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut failed = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((true, rec)) => accepted.push(rec),
            Ok((false, rec)) => rejected.push(rec),
            Err(e) => failed.push(e),
        }
    }
    let summary = PairSummary {
        candidates: candidates.len(),
        acceptance_rate: if candidates.is_empty() {
            0.0
        } else {
            accepted.len() as f64 / candidates.len() as f64
        },
        accepted,
        rejected,
        failed,
        unpaired_hi,
        warnings,
    };
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    save_json(&out_dir.join("summary.json"), &summary)?;
    Ok(if summary.failed.is_empty() {
        ExitStatus::Success
    } else {
        ExitStatus::CompletedWithFailures
    })
}

fn process_pair(
    lo: &Stamped,
    hi: &Stamped,
    rgb: Option<&Stamped>,
    pairs_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<(bool, PairRecord)> {
    let lo_frame = load_frame(&lo.path)?;
    let hi_frame = load_frame(&hi.path)?;
    let m = best_match(&lo_frame.to_gray(), &hi_frame.to_gray(), &cfg.scales, cfg.ncc_threshold)
        .map_err(|e| file_err(&hi.path, e))?;
    let mut record = PairRecord {
        id: lo.stem.clone(),
        lo_file: file_name(&lo.path),
        hi_file: file_name(&hi.path),
        rgb_file: rgb.map(|r| file_name(&r.path)),
        matched: m,
        crops: None,
    };
    if !m.accepted {
        return Ok((false, record));
    }
    let rgb_frame = match rgb {
        Some(r) => Some(load_ppm(&r.path).map_err(imaging_err(&r.path))?),
        None => None,
    };
    let crops = derive_crops(
        &m,
        (lo_frame.width(), lo_frame.height()),
        (hi_frame.width(), hi_frame.height()),
        rgb_frame.as_ref().map(|f| (f.width(), f.height())),
        cfg.padding,
    )
    .map_err(|e| file_err(&hi.path, e))?;
    record.crops = Some(crops);

    let dir = pairs_dir.join(&record.id);
    mkdir(&dir)?;
    let lo_path = dir.join("lo.pgm");
    save_pgm16(&lo_frame.crop(crops.rect_lo), &lo_path).map_err(imaging_err(&lo_path))?;
    let hi_path = dir.join("hi.pgm");
    save_pgm16(&hi_frame.crop(crops.rect_hi), &hi_path).map_err(imaging_err(&hi_path))?;
    if let (Some(frame), Some(rect)) = (&rgb_frame, crops.rect_rgb) {
        let rgb_path = dir.join("rgb.ppm");
        save_ppm(&frame.crop(rect), &rgb_path).map_err(imaging_err(&rgb_path))?;
    }
    save_json(&dir.join("match.json"), &record)?;
    Ok((true, record))
}

// ---------------------------------------------------------------------------
// enhance

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceMetrics {
    pub bilinear: MetricReport,
    pub guided: MetricReport,
    pub mse_loss: f64,
    pub content_loss: f64,
    /// Weighted SR loss when `weights` is configured.
    pub sr_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceRecord {
    pub id: String,
    pub offset: (i64, i64),
    pub score: f64,
    pub factor: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EnhanceMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceSummary {
    pub processed: Vec<EnhanceRecord>,
    pub skipped: Vec<SkippedPair>,
    /// Pairs with ground truth where the guided RMSE is at most the bilinear RMSE.
    pub guided_not_worse: usize,
    pub with_truth: usize,
}

fn pair_root(pair_dir: &Path) -> PathBuf {
    let nested = pair_dir.join("pairs");
    if nested.is_dir() {
        nested
    } else {
        pair_dir.to_path_buf()
    }
}

fn resolve_params(explicit: Option<&Path>, cfg: &PipelineConfig, pair_dir: &Path) -> Result<RadiometricParams> {
    let candidates: Vec<PathBuf> = explicit
        .map(Path::to_path_buf)
        .into_iter()
        .chain(cfg.params_path.clone())
        .chain([pair_dir.join("params.json"), pair_dir.join("..").join("params.json")])
        .collect();
    for c in &candidates {
        if explicit.is_some() || cfg.params_path.is_some() || c.is_file() {
            return load_params(c);
        }
    }
    Err(CliError::Config(format!(
        "no radiometric parameters: pass --params, set params_path, or place params.json in {}",
        pair_dir.display()
    )))
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn cmd_enhance(pair_dir: &Path, out_dir: &Path, params: Option<&Path>, cfg: &PipelineConfig) -> Result<ExitStatus> {
    cfg.validate()?;
    if !pair_dir.is_dir() {
        return Err(CliError::Input(format!("{}: not a directory", pair_dir.display())));
    }
    let params = resolve_params(params, cfg, pair_dir)?;
    let pairs: Vec<PathBuf> = subdirs(&pair_root(pair_dir))?
        .into_iter()
        .filter(|d| d.join("lo.pgm").is_file())
        .collect();
    if pairs.is_empty() {
        return Err(CliError::Input(format!("{}: no pair directories with lo.pgm", pair_dir.display())));
    }
    for sub in ["bilinear", "guided", "reports"] {
        mkdir(&out_dir.join(sub))?;
    }

    let results: Vec<std::result::Result<EnhanceRecord, SkippedPair>> =
        pairs.par_iter().map(|dir| enhance_one(dir, out_dir, &params, cfg)).collect();

    let mut summary = EnhanceSummary {
        processed: Vec::new(),
        skipped: Vec::new(),
        guided_not_worse: 0,
        with_truth: 0,
    };
    for r in results {
        match r {
            Ok(rec) => {
                if let Some(m) = &rec.metrics {
                    summary.with_truth += 1;
                    if m.guided.rmse_c <= m.bilinear.rmse_c {
                        summary.guided_not_worse += 1;
                    }
                }
                summary.processed.push(rec);
            }
            Err(skip) => summary.skipped.push(skip),
        }
    }
    save_json(&out_dir.join("summary.json"), &summary)?;
    Ok(if summary.processed.is_empty() {
        ExitStatus::CompletedWithFailures
    } else {
        ExitStatus::Success
    })
}

fn enhance_one(
    dir: &Path,
    out_dir: &Path,
    params: &RadiometricParams,
    cfg: &PipelineConfig,
) -> std::result::Result<EnhanceRecord, SkippedPair> {
    let id = file_name(dir);
    let skip = |reason: String| SkippedPair { id: id.clone(), reason };
    let lo_path = dir.join("lo.pgm");
    let frame = load_pgm16(&lo_path).map_err(|e| skip(e.to_string()))?;
    let converted = convert_frame(&frame, params, &cfg.range).map_err(|e| skip(e.to_string()))?;
    if converted.summary.all_invalid {
        return Err(skip("no valid temperatures in low-res frame".into()));
    }
    let thermal = converted.map.to_gray_filled(0.0);
    let rgb_path = dir.join("rgb.ppm");
    if !rgb_path.is_file() {
        return Err(skip("no RGB guide".into()));
    }
    let guide = load_ppm(&rgb_path).map_err(|e| skip(e.to_string()))?;
    let pair = align_guide(&guide, &thermal, cfg.search_radius, cfg.ncc_threshold).map_err(|e| skip(e.to_string()))?;
    let guided = guided_upsample(&thermal, &pair, &cfg.sr).map_err(|e| skip(e.to_string()))?;
    let bilinear = upsample_bilinear(&thermal, cfg.sr.factor).map_err(|e| skip(e.to_string()))?;
    let guided_map = TemperatureMap::from_gray(&guided);
    let bilinear_map = TemperatureMap::from_gray(&bilinear);

    let write = |kind: &str, map: &TemperatureMap| -> std::result::Result<(), SkippedPair> {
        let pgm = out_dir.join(kind).join(format!("{id}.pgm"));
        save_temperature_map(map, &cfg.range, None, &pgm, &store::sidecar_path(&pgm))
            .map(|_| ())
            .map_err(|e| skip(e.to_string()))
    };
    write("bilinear", &bilinear_map)?;
    write("guided", &guided_map)?;

    let truth_pgm = dir.join("truth.pgm");
    let metrics = if truth_pgm.is_file() {
        let truth = load_temperature_map(&truth_pgm, &store::sidecar_path(&truth_pgm)).map_err(|e| skip(e.to_string()))?;
        if truth.dims() == guided_map.dims() {
            let peak = cfg.range.span();
            let b = evaluate(&bilinear_map, &truth, peak).map_err(|e| skip(e.to_string()))?;
            let g = evaluate(&guided_map, &truth, peak).map_err(|e| skip(e.to_string()))?;
            let truth_gray = truth.to_gray_filled(0.0);
            let mse = mse_loss(&truth_gray, &guided).map_err(|e| skip(e.to_string()))?;
            let content = content_loss_with(&EdgeBank, &truth_gray, &guided).map_err(|e| skip(e.to_string()))?;
            let sr_loss = cfg.weights.as_ref().and_then(|w| {
                let parts = LossComponents {
                    mse,
                    content,
                    ..Default::default()
                };
                total_loss(&parts, w).ok()
            });
            Some(EnhanceMetrics {
                bilinear: b,
                guided: g,
                mse_loss: mse,
                content_loss: content,
                sr_loss,
            })
        } else {
            None
        }
    } else {
        None
    };

    let record = EnhanceRecord {
        id: id.clone(),
        offset: pair.offset,
        score: pair.score,
        factor: cfg.sr.factor,
        metrics,
    };
    write_json(&out_dir.join("reports").join(format!("{id}.json")), &record).map_err(|e| skip(e.to_string()))?;
    Ok(record)
}

// ---------------------------------------------------------------------------
// evaluate

fn find_truth(truth_dir: &Path, stem: &str) -> Option<PathBuf> {
    [
        truth_dir.join(format!("{stem}.pgm")),
        truth_dir.join(stem).join("truth.pgm"),
        truth_dir.join("pairs").join(stem).join("truth.pgm"),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

pub const EVALUATE_COLUMNS: [&str; 9] = [
    "id",
    "rmse_c",
    "r2",
    "psnr_db",
    "psnr_peak",
    "ssim",
    "gradient_energy_ratio",
    "n_pixels",
    "status",
];

pub fn cmd_evaluate(candidate_dir: &Path, truth_dir: &Path, out_csv: &Path, cfg: &PipelineConfig) -> Result<ExitStatus> {
    cfg.range.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut candidates = Vec::new();
    for entry in fs::read_dir(candidate_dir).map_err(io_err(candidate_dir))? {
        let path = entry.map_err(io_err(candidate_dir))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            candidates.push(path);
        }
    }
    candidates.sort();
    if candidates.is_empty() {
        return Err(CliError::Input(format!("{}: no candidate .pgm files", candidate_dir.display())));
    }
    let peak = cfg.range.span();
    let rows: Vec<(String, std::result::Result<MetricReport, String>)> = candidates
        .par_iter()
        .map(|cand| {
            let stem = cand.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let result = (|| {
                let truth_path = find_truth(truth_dir, &stem).ok_or_else(|| "missing_truth".to_string())?;
                let c = load_temperature_map(cand, &store::sidecar_path(cand)).map_err(|e| format!("candidate_error: {e}"))?;
                let t = load_temperature_map(&truth_path, &store::sidecar_path(&truth_path))
                    .map_err(|e| format!("truth_error: {e}"))?;
                if c.dims() != t.dims() {
                    return Err(format!(
                        "dimension_mismatch: {}x{} vs {}x{}",
                        c.width(),
                        c.height(),
                        t.width(),
                        t.height()
                    ));
                }
                evaluate(&c, &t, peak).map_err(|e| format!("metric_error: {e}"))
            })();
            (stem, result)
        })
        .collect();

    if let Some(parent) = out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    let mut writer = csv::Writer::from_path(out_csv).map_err(|e| file_err(out_csv, e))?;
    writer.write_record(EVALUATE_COLUMNS).map_err(|e| file_err(out_csv, e))?;
    let mut ok_reports = Vec::new();
    let mut failures = 0;
    for (id, result) in &rows {
        let record = match result {
            Ok(r) => {
                ok_reports.push(r.clone());
                vec![
                    id.clone(),
                    fmt_metric(r.rmse_c),
                    fmt_metric(r.r2),
                    fmt_metric(r.psnr_db),
                    fmt_metric(r.psnr_peak),
                    fmt_metric(r.ssim),
                    fmt_metric(r.gradient_energy_ratio),
                    r.n_pixels.to_string(),
                    "ok".into(),
                ]
            }
            Err(status) => {
                failures += 1;
                let mut v = vec![id.clone()];
                v.extend(std::iter::repeat_n(String::new(), 7));
                v.push(status.clone());
                v
            }
        };
        writer.write_record(&record).map_err(|e| file_err(out_csv, e))?;
    }
    if !ok_reports.is_empty() {
        let n = ok_reports.len() as f64;
        let mean = |f: fn(&MetricReport) -> f64| ok_reports.iter().map(f).sum::<f64>() / n;
        let pixels: usize = ok_reports.iter().map(|r| r.n_pixels).sum();
        writer
            .write_record([
                "MEAN".to_string(),
                fmt_metric(mean(|r| r.rmse_c)),
                fmt_metric(mean(|r| r.r2)),
                fmt_metric(mean(|r| r.psnr_db)),
                fmt_metric(peak),
                fmt_metric(mean(|r| r.ssim)),
                fmt_metric(mean(|r| r.gradient_energy_ratio)),
                pixels.to_string(),
                format!("{}/{} ok", ok_reports.len(), rows.len()),
            ])
            .map_err(|e| file_err(out_csv, e))?;
    }
    writer.flush().map_err(io_err(out_csv))?;
    Ok(if failures > 0 {
        ExitStatus::CompletedWithFailures
    } else {
        ExitStatus::Success
    })
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub lo_file: String,
    pub hi_file: String,
    pub rgb_file: String,
    pub lo_timestamp: f64,
    pub hi_timestamp: f64,
    /// Top-left of the high-res frame in low-res pixels.
    pub true_offset: (usize, usize),
    pub true_scale: f64,
    pub rgb_shift: (i64, i64),
    pub decoy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub count: usize,
    pub decoys: usize,
    pub params: RadiometricParams,
    pub config: SynthConfig,
    pub water_bath_csv: String,
    pub scenes: Vec<ManifestEntry>,
}

pub fn timestamp_name(ts: f64) -> String {
    format!("{ts:.3}")
}

pub fn cmd_synth(out_dir: &Path, count: usize, cfg: &PipelineConfig) -> Result<ExitStatus> {
    let synth = &cfg.synth;
    if synth.lo_width == 0 || synth.lo_height == 0 || synth.factor == 0 {
        return Err(CliError::Config("synth dimensions must be positive".into()));
    }
    if synth.hi_width > synth.lo_width * synth.factor || synth.hi_height > synth.lo_height * synth.factor {
        return Err(CliError::Config("synth hi frame must fit inside the canvas".into()));
    }
    synth.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    for sub in ["lo", "hi", "rgb", "pairs"] {
        mkdir(&out_dir.join(sub))?;
    }
    let scenes = generate_corpus(cfg.seed, count, synth);
    let entries: Vec<Result<ManifestEntry>> = scenes
        .par_iter()
        .map(|s| {
            let lo_name = format!("{}.pgm", timestamp_name(s.lo_timestamp));
            let hi_name = format!("{}.pgm", timestamp_name(s.hi_timestamp));
            let rgb_name = format!("{}.ppm", timestamp_name(s.lo_timestamp));
            let lo_path = out_dir.join("lo").join(&lo_name);
            save_pgm16(&s.thermal_lo, &lo_path).map_err(imaging_err(&lo_path))?;
            let hi_path = out_dir.join("hi").join(&hi_name);
            save_pgm16(&s.hi_frame, &hi_path).map_err(imaging_err(&hi_path))?;
            let rgb_path = out_dir.join("rgb").join(&rgb_name);
            save_ppm(&s.rgb, &rgb_path).map_err(imaging_err(&rgb_path))?;
            if !s.decoy {
                let dir = out_dir.join("pairs").join(&s.id);
                mkdir(&dir)?;
                let p = dir.join("lo.pgm");
                save_pgm16(&s.thermal_lo, &p).map_err(imaging_err(&p))?;
                let p = dir.join("rgb.ppm");
                save_ppm(&s.rgb, &p).map_err(imaging_err(&p))?;
                save_temperature_map(&s.truth_hi, &cfg.range, None, &dir.join("truth.pgm"), &dir.join("truth.json"))?;
            }
            Ok(ManifestEntry {
                id: s.id.clone(),
                lo_file: lo_name,
                hi_file: hi_name,
                rgb_file: rgb_name,
                lo_timestamp: s.lo_timestamp,
                hi_timestamp: s.hi_timestamp,
                true_offset: s.true_offset,
                true_scale: s.true_scale,
                rgb_shift: s.rgb_shift,
                decoy: s.decoy,
            })
        })
        .collect();
    let scenes = entries.into_iter().collect::<Result<Vec<_>>>()?;

    let csv_name = "water_bath.csv".to_string();
    write_reference_log(&out_dir.join(&csv_name), &water_bath(cfg.seed, synth))?;
    save_json(&out_dir.join("params.json"), &synth.params)?;
    let manifest = Manifest {
        seed: cfg.seed,
        count,
        decoys: synth.decoys,
        params: synth.params,
        config: synth.clone(),
        water_bath_csv: csv_name,
        scenes,
    };
    save_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(ExitStatus::Success)
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(name = "thermforge", version, about = "Thermal camera calibration, pairing and enhancement")]
pub struct Cli {
    /// Pipeline configuration JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refit R1 and O against a `timestamp,dn,t_ref_c` reference log.
    Calibrate(CalibrateArgs),
    /// Convert a raw DN frame to an encoded temperature map.
    Convert(ConvertArgs),
    /// Match low/high-resolution frames by timestamp and template matching.
    Pair(PairArgs),
    /// RGB-guided upsampling of paired frames.
    Enhance(EnhanceArgs),
    /// Score candidate temperature maps against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub initial: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub frame: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sidecar path (default: output path with `.json`).
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub lo_dir: PathBuf,
    #[arg(long)]
    pub hi_dir: PathBuf,
    #[arg(long)]
    pub rgb_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// NCC acceptance threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub pair_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub candidate_dir: PathBuf,
    #[arg(long)]
    pub truth_dir: PathBuf,
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long)]
    pub decoys: Option<usize>,
}

fn execute(cli: Cli) -> Result<ExitStatus> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        // a second build in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match cli.command {
        Command::Calibrate(a) => {
            if let Some(t) = a.tolerance {
                cfg.simplex.tolerance = t;
            }
            if let Some(n) = a.max_iterations {
                cfg.simplex.max_iterations = n;
            }
            cfg.simplex.validate().map_err(|e| CliError::Config(e.to_string()))?;
            cmd_calibrate(&a.log, &a.initial, &a.out, &cfg)
        }
        Command::Convert(a) => {
            let sidecar = a.sidecar.unwrap_or_else(|| store::sidecar_path(&a.out));
            cmd_convert(&a.frame, &a.params, &a.out, &sidecar, &cfg)
        }
        Command::Pair(a) => {
            if let Some(t) = a.threshold {
                cfg.ncc_threshold = t;
            }
            cmd_pair(&a.lo_dir, &a.hi_dir, &a.rgb_dir, &a.out_dir, &cfg)
        }
        Command::Enhance(a) => {
            if let Some(t) = a.threshold {
                cfg.ncc_threshold = t;
            }
            cmd_enhance(&a.pair_dir, &a.out_dir, a.params.as_deref(), &cfg)
        }
        Command::Evaluate(a) => cmd_evaluate(&a.candidate_dir, &a.truth_dir, &a.out_csv, &cfg),
        Command::Synth(a) => {
            if let Some(d) = a.decoys {
                cfg.synth.decoys = d;
            }
            cmd_synth(&a.out_dir, a.count, &cfg)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitStatus::InputError as i32 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(status) => status as i32,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitStatus::InputError as i32
        }
    }
}
