//! Calibration, alignment and enhancement toolkit for low-cost radiometric
//! thermal cameras.
//!
//! * [`radiometry`] converts raw digital numbers to °C and back.
//! * [`optimize`] refits a camera's gain/offset constants against
//!   thermocouple logs with a Nelder-Mead simplex.
//! * [`matching`] pairs low- and high-resolution frames with scale-swept
//!   normalized cross-correlation.
//! * [`enhance`] aligns an RGB guide to a thermal frame and fuses them with a
//!   guided filter; it also carries the SR training losses.
//! * [`metrics`] provides RMSE, R², PSNR, SSIM and a sharpness proxy.
//! * [`synth`] generates seeded synthetic scenes for end-to-end checks.
//! * [`cli`] implements the `thermforge` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod enhance;
pub mod imaging;
pub mod matching;
pub mod metrics;
pub mod optimize;
pub mod radiometry;
pub mod store;
pub mod synth;

pub use enhance::{AlignedPair, GuidedSrConfig, LossWeights};
pub use imaging::{GrayImage, Rect, RgbFrame, ThermalFrame};
pub use matching::{CropSpec, MatchResult};
pub use metrics::MetricReport;
pub use optimize::{CalibrationReport, ReferencePair, SimplexConfig};
pub use radiometry::{MeasuringRange, RadiometricParams, TemperatureMap};
