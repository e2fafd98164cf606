//! Emission pattern, survival, and decay-rate extraction.
//!
//! The directional emission rate of a state `beta` into direction `n` is
//! `(gamma1 / |beta|^2) |sum_j beta_j exp(i k0 (n0 - n) . r_j)|^2`. Its
//! average over the sphere (`dOmega / 4pi`) is the instantaneous total
//! decay rate `<beta|Gamma|beta> / |beta|^2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cloud::{AtomicCloud, Vec3};
use crate::dynamics::{AmplitudeState, Frame};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{GridSpec, SphereGrid};
use crate::stats::linear_fit;

/// Default forward cap, in units of `1/(k0 R0)`.
pub const DEFAULT_CAP_FACTOR: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct AngularPattern {
    pub directions: Vec<Vec3>,
    /// Quadrature weights in units of `dOmega / 4pi`.
    pub weights: Vec<f64>,
    pub intensity: Vec<f64>,
    pub cap_angle: f64,
    /// Share of the emitted power within `cap_angle` of `n0`.
    pub forward_fraction: f64,
    /// Quadrature sphere average of the intensity.
    pub total_rate: f64,
}

/// Pattern quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    /// `None` picks an order from the cloud extent.
    pub grid: Option<GridSpec>,
    /// Forward cap half-angle in units of `1/(k0 R0)`.
    pub cap_factor: f64,
}

impl Default for PatternSpec {
    fn default() -> Self {
        Self { grid: None, cap_factor: DEFAULT_CAP_FACTOR }
    }
}

fn beta_amplitudes(state: &AmplitudeState, cloud: &AtomicCloud) -> Result<(Vec<Complex64>, f64)> {
    let beta = state.to_frame(cloud, Frame::Beta)?.beta;
    let norm2: f64 = beta.iter().map(|b| b.norm_sqr()).sum();
    if !(norm2 > 0.0) {
        return Err(Error::Normalization("state has zero norm".into()));
    }
    Ok((beta, norm2))
}

/// Structure-factor intensity in each direction.
pub fn directional_intensity(
    beta: &[Complex64],
    norm2: f64,
    cloud: &AtomicCloud,
    directions: &[Vec3],
) -> Vec<f64> {
    let p = &cloud.params;
    directions
        .iter()
        .map(|n| {
            let q = p.k0 * (p.n0 - n);
            let amp: Complex64 = beta
                .iter()
                .zip(&cloud.positions)
                .map(|(b, r)| b * Complex64::from_polar(1.0, q.dot(r)))
                .sum();
            p.gamma1 * amp.norm_sqr() / norm2
        })
        .collect()
}

pub fn angular_pattern(
    state: &AmplitudeState,
    cloud: &AtomicCloud,
    spec: &PatternSpec,
) -> Result<AngularPattern> {
    let (beta, norm2) = beta_amplitudes(state, cloud)?;
    let p = &cloud.params;
    if !(spec.cap_factor > 0.0 && spec.cap_factor.is_finite()) {
        return Err(invalid("cap_factor", format!("must be positive, got {}", spec.cap_factor)));
    }
    // Small samples have lobes wider than the sphere.
    let cap_angle = (spec.cap_factor / p.k0r0()).min(std::f64::consts::PI);
    // The structure factor varies on the scale k0 |r_j| around the sphere.
    let grid_spec = spec.grid.unwrap_or_else(|| GridSpec::for_extent(p.k0 * cloud.max_radius()));
    let grid = SphereGrid::new(p.n0, grid_spec, Some(cap_angle))?;
    let intensity = directional_intensity(&beta, norm2, cloud, &grid.directions);
    let total_rate = grid.integrate(&intensity);
    let forward: f64 = grid
        .weights
        .iter()
        .zip(&intensity)
        .zip(&grid.polar_angles)
        .filter(|(_, &theta)| theta <= cap_angle)
        .map(|((w, i), _)| w * i)
        .sum();
    Ok(AngularPattern {
        directions: grid.directions,
        weights: grid.weights,
        intensity,
        cap_angle,
        forward_fraction: forward / total_rate,
        total_rate,
    })
}

/// Emitted power within `cap_angle` of `n0`, divided by `total_rate`.
///
/// Only the cap is sampled, so this is cheap when the total rate is known
/// independently (for instance from the quadratic form).
pub fn forward_fraction_cap(
    state: &AmplitudeState,
    cloud: &AtomicCloud,
    cap_angle: f64,
    total_rate: f64,
    polar: usize,
    azimuth: usize,
) -> Result<f64> {
    let (beta, norm2) = beta_amplitudes(state, cloud)?;
    let grid = SphereGrid::cap(cloud.params.n0, cap_angle, polar, azimuth)?;
    let intensity = directional_intensity(&beta, norm2, cloud, &grid.directions);
    Ok(grid.integrate(&intensity) / total_rate)
}

/// Half width at half maximum of the forward lobe, from the azimuthally
/// averaged intensity sampled on `samples` polar angles up to `max_angle`.
pub fn forward_lobe_half_width(
    state: &AmplitudeState,
    cloud: &AtomicCloud,
    max_angle: f64,
    samples: usize,
    azimuth: usize,
) -> Result<f64> {
    let (beta, norm2) = beta_amplitudes(state, cloud)?;
    let n0 = cloud.params.n0;
    let (e1, e2) = crate::quadrature::orthonormal_pair(&n0);
    let profile = |theta: f64| -> f64 {
        let dirs: Vec<Vec3> = (0..azimuth)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / azimuth as f64;
                theta.cos() * n0 + theta.sin() * (phi.cos() * e1 + phi.sin() * e2)
            })
            .collect();
        let vals = directional_intensity(&beta, norm2, cloud, &dirs);
        vals.iter().sum::<f64>() / azimuth as f64
    };
    let peak = profile(0.0);
    let mut prev = (0.0, peak);
    for i in 1..=samples {
        let theta = max_angle * i as f64 / samples as f64;
        let v = profile(theta);
        if v <= 0.5 * peak {
            let frac = (prev.1 - 0.5 * peak) / (prev.1 - v);
            return Ok(prev.0 + frac * (theta - prev.0));
        }
        prev = (theta, v);
    }
    Err(Error::Fit(format!("intensity stays above half maximum out to {max_angle} rad")))
}

/// Half width at half maximum of the Gaussian-cloud structure factor
/// `exp(-(k0 R0)^2 (1 - cos theta))`.
pub fn gaussian_lobe_half_width(k0r0: f64) -> f64 {
    (1.0 - std::f64::consts::LN_2 / (k0r0 * k0r0)).acos()
}

/// Probability that the excitation is still in the atoms.
pub fn survival_probability(state: &AmplitudeState) -> f64 {
    state.norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub stderr: f64,
}

/// Fits `values ~ exp(-rate t)` by least squares on `ln(values)`.
pub fn fit_rate(times: &[f64], values: &[f64], weights: Option<&[f64]>) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::Fit("times and values differ in length".into()));
    }
    if times.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", times.len())));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Fit(format!("values must be positive, found {v}")));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(times, &logs, weights)?;
    Ok(RateFit { rate: -fit.slope, stderr: fit.slope_stderr })
}

/// Fits only the samples with `lo <= t <= hi`.
pub fn fit_rate_window(times: &[f64], values: &[f64], lo: f64, hi: f64) -> Result<RateFit> {
    let (t, v): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, v)| (*t, *v))
        .unzip();
    fit_rate(&t, &v, None)
}
