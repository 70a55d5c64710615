//! Python bindings. Images cross the boundary as lists of rows
//! (`list[list[float]]`); RGB guides as `(width, height, bytes)` with
//! interleaved 8-bit RGB.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use thermforge::enhance::{self, LossComponents};
use thermforge::imaging::{self, GrayImage, RgbFrame};
use thermforge::matching::{self, default_scales, DEFAULT_NCC_THRESHOLD};
use thermforge::metrics;
use thermforge::optimize::{self, ReferencePair, SimplexConfig};
use thermforge::radiometry::{self, MeasuringRange};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_gray(rows: Vec<Vec<f64>>) -> PyResult<GrayImage> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    GrayImage::new(width, height, rows.concat()).map_err(value_err)
}

fn to_rows(img: &GrayImage) -> Vec<Vec<f64>> {
    img.values().chunks(img.width()).map(<[f64]>::to_vec).collect()
}

#[pyclass(name = "RadiometricParams", module = "thermforge", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: radiometry::RadiometricParams,
}

#[pymethods]
impl PyParams {
    #[new]
    fn new(r1: f64, r2: f64, b: f64, f: f64, o: f64) -> PyResult<Self> {
        let inner = radiometry::RadiometricParams::new(r1, r2, b, f, o).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Published factory constants of the FLIR One Pro.
    #[staticmethod]
    fn factory() -> Self {
        Self {
            inner: radiometry::RadiometricParams::flir_one_pro_factory(),
        }
    }

    /// Constants after water-bath recalibration of R1 and O.
    #[staticmethod]
    fn recalibrated() -> Self {
        Self {
            inner: radiometry::RadiometricParams::flir_one_pro_recalibrated(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: radiometry::RadiometricParams = serde_json::from_str(text).map_err(value_err)?;
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("params serialize")
    }

    #[getter]
    fn r1(&self) -> f64 {
        self.inner.r1
    }
    #[getter]
    fn r2(&self) -> f64 {
        self.inner.r2
    }
    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }
    #[getter]
    fn f(&self) -> f64 {
        self.inner.f
    }
    #[getter]
    fn o(&self) -> f64 {
        self.inner.o
    }

    fn temperature_of_dn(&self, dn: f64) -> PyResult<f64> {
        radiometry::temperature_of_dn(dn, &self.inner).map_err(value_err)
    }

    fn dn_of_temperature(&self, celsius: f64) -> PyResult<f64> {
        radiometry::dn_of_temperature(celsius, &self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("RadiometricParams(r1={}, r2={}, b={}, f={}, o={})", p.r1, p.r2, p.b, p.f, p.o)
    }
}

/// Converts a DN frame (rows of counts) to °C. Pixels that cannot be
/// converted or fall outside `[min_c, max_c]` come back as NaN.
#[pyfunction]
#[pyo3(signature = (dn_rows, params, min_c = -20.0, max_c = 120.0))]
fn convert_frame(dn_rows: Vec<Vec<u16>>, params: &PyParams, min_c: f64, max_c: f64) -> PyResult<Vec<Vec<f64>>> {
    let height = dn_rows.len();
    let width = dn_rows.first().map_or(0, Vec::len);
    if dn_rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let frame = imaging::ThermalFrame::new(width, height, dn_rows.concat()).map_err(value_err)?;
    let range = MeasuringRange::new(min_c, max_c).map_err(value_err)?;
    let converted = radiometry::convert_frame(&frame, &params.inner, &range).map_err(value_err)?;
    let map = converted.map;
    let values: Vec<f64> = map
        .celsius()
        .iter()
        .zip(map.valid())
        .map(|(&c, &ok)| if ok { c } else { f64::NAN })
        .collect();
    Ok(values.chunks(width).map(<[f64]>::to_vec).collect())
}

#[pyclass(name = "CalibrationReport", module = "thermforge", frozen, skip_from_py_object)]
struct PyCalibrationReport {
    inner: optimize::CalibrationReport,
}

#[pymethods]
impl PyCalibrationReport {
    #[getter]
    fn params_before(&self) -> PyParams {
        PyParams {
            inner: self.inner.params_before,
        }
    }
    #[getter]
    fn params_after(&self) -> PyParams {
        PyParams {
            inner: self.inner.params_after,
        }
    }
    #[getter]
    fn rmse_before(&self) -> f64 {
        self.inner.rmse_before
    }
    #[getter]
    fn rmse_after(&self) -> f64 {
        self.inner.rmse_after
    }
    #[getter]
    fn r2_before(&self) -> f64 {
        self.inner.r2_before
    }
    #[getter]
    fn r2_after(&self) -> f64 {
        self.inner.r2_after
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("report serializes")
    }
}

/// Refits R1 and O against `(dn, reference °C)` pairs.
#[pyfunction]
#[pyo3(signature = (pairs, initial, tolerance = 1e-6, max_iterations = 2000))]
fn calibrate(
    pairs: Vec<(f64, f64)>,
    initial: &PyParams,
    tolerance: f64,
    max_iterations: usize,
) -> PyResult<PyCalibrationReport> {
    let pairs: Vec<ReferencePair> = pairs.into_iter().map(|(dn, t)| ReferencePair::new(dn, t)).collect();
    let config = SimplexConfig {
        tolerance,
        max_iterations,
        ..SimplexConfig::default()
    };
    let inner = optimize::calibrate(&pairs, &initial.inner, &config).map_err(value_err)?;
    Ok(PyCalibrationReport { inner })
}

#[pyfunction]
fn ncc_map(search: Vec<Vec<f64>>, template: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let map = matching::ncc_map(&to_gray(search)?, &to_gray(template)?).map_err(value_err)?;
    Ok(to_rows(&map))
}

#[pyclass(name = "MatchResult", module = "thermforge", frozen, get_all, skip_from_py_object)]
struct PyMatchResult {
    x_star: usize,
    y_star: usize,
    scale: f64,
    score: f64,
    accepted: bool,
}

#[pymethods]
impl PyMatchResult {
    fn __repr__(&self) -> String {
        format!(
            "MatchResult(x_star={}, y_star={}, scale={}, score={:.6}, accepted={})",
            self.x_star,
            self.y_star,
            self.scale,
            self.score,
            if self.accepted { "True" } else { "False" }
        )
    }
}

/// Scale-swept template search. `scales` defaults to nine steps of ±10 %
/// around 0.25.
#[pyfunction]
#[pyo3(signature = (search, template, scales = None, threshold = DEFAULT_NCC_THRESHOLD))]
fn best_match(
    search: Vec<Vec<f64>>,
    template: Vec<Vec<f64>>,
    scales: Option<Vec<f64>>,
    threshold: f64,
) -> PyResult<PyMatchResult> {
    let scales = scales.unwrap_or_else(|| default_scales(0.25));
    let m = matching::best_match(&to_gray(search)?, &to_gray(template)?, &scales, threshold).map_err(value_err)?;
    Ok(PyMatchResult {
        x_star: m.x_star,
        y_star: m.y_star,
        scale: m.scale,
        score: m.score,
        accepted: m.accepted,
    })
}

/// Aligns an RGB guide to a low-res thermal frame and returns
/// `(guided, bilinear, (dx, dy), score)`.
#[pyfunction]
#[pyo3(signature = (thermal, guide_width, guide_height, guide_rgb, factor = 4, radius = 16, epsilon = 65.025, search_radius = 10, threshold = DEFAULT_NCC_THRESHOLD))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn guided_upsample(
    thermal: Vec<Vec<f64>>,
    guide_width: usize,
    guide_height: usize,
    guide_rgb: Vec<u8>,
    factor: usize,
    radius: usize,
    epsilon: f64,
    search_radius: usize,
    threshold: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, (i64, i64), f64)> {
    let thermal = to_gray(thermal)?;
    let guide = RgbFrame::new(guide_width, guide_height, guide_rgb).map_err(value_err)?;
    let pair = enhance::align_guide(&guide, &thermal, search_radius, threshold).map_err(value_err)?;
    let config = enhance::GuidedSrConfig {
        factor,
        radius,
        epsilon,
    };
    let guided = enhance::guided_upsample(&thermal, &pair, &config).map_err(value_err)?;
    let bilinear = imaging::upsample_bilinear(&thermal, factor).map_err(value_err)?;
    Ok((to_rows(&guided), to_rows(&bilinear), pair.offset, pair.score))
}

#[pyfunction]
fn rmse(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::rmse_values(&a, &b).map_err(value_err)
}

#[pyfunction]
fn r_squared(predicted: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    metrics::r_squared(&predicted, &reference).map_err(value_err)
}

#[pyfunction]
fn psnr(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, peak: f64) -> PyResult<f64> {
    metrics::psnr(&to_gray(a)?, &to_gray(b)?, peak).map_err(value_err)
}

#[pyfunction]
fn ssim(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, dynamic_range: f64) -> PyResult<f64> {
    metrics::ssim(&to_gray(a)?, &to_gray(b)?, dynamic_range).map_err(value_err)
}

#[pyfunction]
fn gradient_energy(img: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::gradient_energy(&to_gray(img)?).map_err(value_err)
}

#[pyfunction]
fn cycle_consistency_loss(original: Vec<Vec<f64>>, reconstructed: Vec<Vec<f64>>) -> PyResult<f64> {
    enhance::cycle_consistency_loss(&to_gray(original)?, &to_gray(reconstructed)?).map_err(value_err)
}

#[pyfunction]
fn identity_loss(target: Vec<Vec<f64>>, translated: Vec<Vec<f64>>) -> PyResult<f64> {
    enhance::identity_loss(&to_gray(target)?, &to_gray(translated)?).map_err(value_err)
}

#[pyfunction]
fn mse_loss(high_res: Vec<Vec<f64>>, generated: Vec<Vec<f64>>) -> PyResult<f64> {
    enhance::mse_loss(&to_gray(high_res)?, &to_gray(generated)?).map_err(value_err)
}

/// Content loss under the built-in 3×3 edge-response bank.
#[pyfunction]
fn content_loss(high_res: Vec<Vec<f64>>, generated: Vec<Vec<f64>>) -> PyResult<f64> {
    enhance::content_loss_with(&enhance::EdgeBank, &to_gray(high_res)?, &to_gray(generated)?).map_err(value_err)
}

#[pyfunction]
fn adversarial_loss(discriminator_output: f64) -> PyResult<f64> {
    enhance::adversarial_loss(discriminator_output).map_err(value_err)
}

#[pyfunction]
fn total_loss(cycle: f64, identity: f64, mse: f64, content: f64, adversarial: f64, alpha: f64) -> PyResult<f64> {
    let parts = LossComponents {
        cycle,
        identity,
        mse,
        content,
        adversarial,
    };
    enhance::total_loss(&parts, &enhance::LossWeights { alpha }).map_err(value_err)
}

/// Reads a 16-bit binary PGM as rows of counts.
#[pyfunction]
fn load_pgm16(path: &str) -> PyResult<Vec<Vec<u16>>> {
    let frame = imaging::load_pgm16(std::path::Path::new(path)).map_err(value_err)?;
    Ok(frame.dn().chunks(frame.width()).map(<[u16]>::to_vec).collect())
}

#[pymodule]
#[pyo3(name = "thermforge")]
fn thermforge_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyCalibrationReport>()?;
    m.add_class::<PyMatchResult>()?;
    m.add_function(wrap_pyfunction!(convert_frame, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(ncc_map, m)?)?;
    m.add_function(wrap_pyfunction!(best_match, m)?)?;
    m.add_function(wrap_pyfunction!(guided_upsample, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(r_squared, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_energy, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_consistency_loss, m)?)?;
    m.add_function(wrap_pyfunction!(identity_loss, m)?)?;
    m.add_function(wrap_pyfunction!(mse_loss, m)?)?;
    m.add_function(wrap_pyfunction!(content_loss, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(load_pgm16, m)?)?;
    Ok(())
}
