//! Nelder-Mead simplex minimization and the (R1, O) radiometric refit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;
use crate::radiometry::{temperature_of_dn, RadiometricParams, RadiometryError};

/// Cost added per reference pair whose DN cannot be converted under the
/// proposed parameters.
pub const DOMAIN_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("start point is empty")]
    EmptyStart,
    #[error("objective is not finite at the start point")]
    NonFiniteStart,
    #[error("invalid simplex configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no reference pairs")]
    NoPairs,
    #[error("reference pair {index} invalid: {reason}")]
    InvalidPair { index: usize, reason: &'static str },
    #[error("ill-posed fit: need at least 2 pairs spanning 2 distinct reference temperatures")]
    IllPosed,
    #[error(transparent)]
    Radiometry(#[from] RadiometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 2000,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

impl SimplexConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if !(self.tolerance > 0.0) {
            return Err(OptimizeError::InvalidConfig("tolerance must be positive"));
        }
        if !(self.reflection > 0.0) {
            return Err(OptimizeError::InvalidConfig("reflection must be positive"));
        }
        if !(self.expansion > 1.0) {
            return Err(OptimizeError::InvalidConfig("expansion must exceed 1"));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(OptimizeError::InvalidConfig("contraction must be in (0, 1)"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(OptimizeError::InvalidConfig("shrink must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best vertex value after each iteration (entry 0 is the initial simplex).
    pub trace: Vec<TraceEntry>,
}

/// Minimizes `objective` starting from `start`.
///
/// The initial simplex perturbs each coordinate by 5% (0.00025 when it is
/// zero). Iteration stops once the spread of vertex values and the simplex
/// diameter (max ∞-norm distance to the best vertex) are both within
/// `config.tolerance`, or after `config.max_iterations`. Non-finite objective
/// values inside the loop count as +∞.
pub fn nelder_mead<F>(mut objective: F, start: &[f64], config: &SimplexConfig) -> Result<Minimum, OptimizeError>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    let n = start.len();
    if n == 0 {
        return Err(OptimizeError::EmptyStart);
    }
    let f0 = objective(start);
    if !f0.is_finite() {
        return Err(OptimizeError::NonFiniteStart);
    }
    let mut eval = |x: &[f64]| {
        let v = objective(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    values.push(f0);
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] = if v[i] != 0.0 { v[i] * 1.05 } else { 0.00025 };
        values.push(eval(&v));
        simplex.push(v);
    }

    let (alpha, gamma, rho, sigma) = (
        config.reflection,
        config.expansion,
        config.contraction,
        config.shrink,
    );
    let mut order: Vec<usize> = (0..=n).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        // stable sort keeps earlier vertices first among equal values
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted_simplex: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = sorted_simplex;
        values = sorted_values;
        for (k, o) in order.iter_mut().enumerate() {
            *o = k;
        }
        trace.push(TraceEntry {
            iteration: iterations,
            best_value: values[0],
        });

        let spread = values[1..]
            .iter()
            .map(|v| (v - values[0]).abs())
            .fold(0.0, f64::max);
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= config.tolerance && diameter <= config.tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(alpha);
        let f_r = eval(&reflected);
        if f_r < values[0] {
            let expanded = along(alpha * gamma);
            let f_e = eval(&expanded);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[n] {
            let c = along(alpha * rho);
            let f = eval(&c);
            (c, f)
        } else {
            let c = along(-rho);
            let f = eval(&c);
            (c, f)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            let shrunk: Vec<f64> = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            values[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    }

    Ok(Minimum {
        point: simplex[0].clone(),
        value: values[0],
        iterations,
        converged,
        trace,
    })
}

/// A thermocouple reading paired with the sensor DN observed at the same time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub dn: f64,
    pub t_ref: f64,
}

impl ReferencePair {
    pub fn new(dn: f64, t_ref: f64) -> Self {
        Self { dn, t_ref }
    }
}

fn check_pairs(pairs: &[ReferencePair]) -> Result<(), OptimizeError> {
    if pairs.is_empty() {
        return Err(OptimizeError::NoPairs);
    }
    for (index, p) in pairs.iter().enumerate() {
        if !(p.dn >= 0.0 && p.dn <= 65535.0) {
            return Err(OptimizeError::InvalidPair {
                index,
                reason: "dn outside [0, 65535]",
            });
        }
        if !p.t_ref.is_finite() {
            return Err(OptimizeError::InvalidPair {
                index,
                reason: "non-finite reference temperature",
            });
        }
    }
    Ok(())
}

/// Sum of squared temperature residuals for the given R1 and O, with the
/// remaining constants taken from `fixed`. Pairs outside the model domain
/// cost [`DOMAIN_PENALTY`] each.
pub fn calibration_objective(
    r1: f64,
    o: f64,
    fixed: &RadiometricParams,
    pairs: &[ReferencePair],
) -> Result<f64, OptimizeError> {
    check_pairs(pairs)?;
    Ok(sse(&fixed.with_gain_offset(r1, o), pairs))
}

fn sse(params: &RadiometricParams, pairs: &[ReferencePair]) -> f64 {
    pairs
        .iter()
        .map(|p| match temperature_of_dn(p.dn, params) {
            Ok(t) => (t - p.t_ref).powi(2),
            Err(_) => DOMAIN_PENALTY,
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params_before: RadiometricParams,
    pub params_after: RadiometricParams,
    pub rmse_before: f64,
    pub rmse_after: f64,
    pub r2_before: f64,
    pub r2_after: f64,
    /// Pairs left out of the RMSE/R² because their DN was unconvertible.
    pub excluded_before: usize,
    pub excluded_after: usize,
    pub objective_before: f64,
    pub objective_after: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_pairs: usize,
    pub trace: Vec<TraceEntry>,
}

struct FitQuality {
    rmse: f64,
    r2: f64,
    excluded: usize,
}

fn fit_quality(params: &RadiometricParams, pairs: &[ReferencePair]) -> FitQuality {
    let mut predicted = Vec::with_capacity(pairs.len());
    let mut reference = Vec::with_capacity(pairs.len());
    for p in pairs {
        if let Ok(t) = temperature_of_dn(p.dn, params) {
            predicted.push(t);
            reference.push(p.t_ref);
        }
    }
    let excluded = pairs.len() - predicted.len();
    let rmse = metrics::rmse_values(&predicted, &reference).unwrap_or(f64::NAN);
    let r2 = metrics::r_squared(&predicted, &reference).unwrap_or(f64::NAN);
    FitQuality { rmse, r2, excluded }
}

/// Refits R1 and O against reference pairs, holding R2, B and F at the
/// values in `initial`.
pub fn calibrate(
    pairs: &[ReferencePair],
    initial: &RadiometricParams,
    config: &SimplexConfig,
) -> Result<CalibrationReport, OptimizeError> {
    check_pairs(pairs)?;
    initial.validate()?;
    let first = pairs[0].t_ref;
    if pairs.len() < 2 || pairs.iter().all(|p| p.t_ref == first) {
        return Err(OptimizeError::IllPosed);
    }

    let objective = |x: &[f64]| sse(&initial.with_gain_offset(x[0], x[1]), pairs);
    let objective_before = objective(&[initial.r1, initial.o]);
    let min = nelder_mead(objective, &[initial.r1, initial.o], config)?;
    let params_after = initial.with_gain_offset(min.point[0], min.point[1]);

    let before = fit_quality(initial, pairs);
    let after = fit_quality(&params_after, pairs);
    Ok(CalibrationReport {
        params_before: *initial,
        params_after,
        rmse_before: before.rmse,
        rmse_after: after.rmse,
        r2_before: before.r2,
        r2_after: after.r2,
        excluded_before: before.excluded,
        excluded_after: after.excluded,
        objective_before,
        objective_after: min.value,
        iterations: min.iterations,
        converged: min.converged,
        n_pairs: pairs.len(),
        trace: min.trace,
    })
}
