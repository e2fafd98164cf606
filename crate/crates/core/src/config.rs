//! TOML run configuration.
//!
//! Lengths are in units of `1/k0`, times in units of `1/gamma1` and rates in
//! units of `gamma1`; each key carries its unit as a suffix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{CloudParams, Vec3};
use crate::error::{invalid, Error, Result};
use crate::quadrature::GridSpec;
use crate::sweep::SweepSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    Sweep,
    Acceptance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub cloud: CloudSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub single: SingleSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub acceptance: AcceptanceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSection {
    pub n_atoms: usize,
    /// Gaussian size `R0` in units of `1/k0`, i.e. `k0 R0`.
    pub r0_inv_k0: f64,
    /// Incident direction; normalized on load.
    #[serde(default = "default_direction")]
    pub direction: [f64; 3],
    /// Realization index of the sampled cloud.
    #[serde(default)]
    pub realization: u64,
}

fn default_direction() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl Default for CloudSection {
    fn default() -> Self {
        Self { n_atoms: 64, r0_inv_k0: 5.0, direction: default_direction(), realization: 0 }
    }
}

/// Output time grid. Missing bounds default to
/// `[1e-2 / gamma_col, 10 / gamma_r]` from the large-sample formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub start_inv_gamma1: Option<f64>,
    pub stop_inv_gamma1: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

fn default_points() -> usize {
    200
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { start_inv_gamma1: None, stop_inv_gamma1: None, points: default_points(), spacing: Spacing::Log }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    /// Polar and azimuthal node counts of the emission-pattern grid; both
    /// or neither.
    pub sphere_polar: Option<usize>,
    pub sphere_azimuth: Option<usize>,
    /// Forward cap half-angle in units of `1/(k0 R0)`.
    #[serde(default = "default_cap")]
    pub forward_cap_inv_k0r0: f64,
}

fn default_cap() -> f64 {
    crate::observables::DEFAULT_CAP_FACTOR
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self { sphere_polar: None, sphere_azimuth: None, forward_cap_inv_k0r0: default_cap() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleSection {
    #[serde(default = "yes")]
    pub angular_pattern: bool,
    #[serde(default = "yes")]
    pub perturbative: bool,
    #[serde(default)]
    pub export_positions: bool,
    #[serde(default)]
    pub export_amplitudes: bool,
    /// Rate-fit windows in units of `1/gamma1`; missing windows default to
    /// `[0.1, 1] / gamma_col` and the last decade of the time grid.
    pub early_window_inv_gamma1: Option<[f64; 2]>,
    pub late_window_inv_gamma1: Option<[f64; 2]>,
}

fn yes() -> bool {
    true
}

impl Default for SingleSection {
    fn default() -> Self {
        Self {
            angular_pattern: true,
            perturbative: true,
            export_positions: false,
            export_amplitudes: false,
            early_window_inv_gamma1: None,
            late_window_inv_gamma1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n_atoms: Vec<usize>,
    pub n_axis_r0_inv_k0: f64,
    pub r0_inv_k0: Vec<f64>,
    pub r0_axis_n_atoms: usize,
    pub realizations: usize,
    #[serde(default = "yes")]
    pub forward_fraction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSection {
    /// Criteria to run; empty runs all of them.
    #[serde(default)]
    pub criteria: Vec<u8>,
}

pub fn parse(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

impl RunConfig {
    /// Checks every parameter the selected mode will use.
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Single => {
                self.cloud_params()?.validate()?;
                self.time_grid()?;
                self.grid_spec()?;
                self.cap()?;
            }
            Mode::Sweep => {
                self.sweep_spec()?.validate()?;
                self.cap()?;
            }
            Mode::Acceptance => {
                if let Some(id) = self.acceptance.criteria.iter().find(|id| !(1..=10).contains(*id)) {
                    return Err(invalid("acceptance.criteria", format!("no criterion {id}")));
                }
            }
        }
        Ok(())
    }

    pub fn cloud_params(&self) -> Result<CloudParams> {
        let d = Vec3::from(self.cloud.direction);
        let norm = d.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(invalid("cloud.direction", "must be a nonzero finite vector"));
        }
        let mut p = CloudParams::natural(self.cloud.n_atoms, self.cloud.r0_inv_k0, self.seed);
        p.n0 = d / norm;
        p.validate()?;
        Ok(p)
    }

    fn cap(&self) -> Result<f64> {
        let c = self.quadrature.forward_cap_inv_k0r0;
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("quadrature.forward_cap_inv_k0r0", "must be positive"));
        }
        Ok(c)
    }

    pub fn grid_spec(&self) -> Result<Option<GridSpec>> {
        match (self.quadrature.sphere_polar, self.quadrature.sphere_azimuth) {
            (None, None) => Ok(None),
            (Some(polar), Some(azimuth)) if polar >= 2 && azimuth >= 1 => {
                Ok(Some(GridSpec { polar, azimuth }))
            }
            (Some(_), Some(_)) => Err(invalid("quadrature", "need sphere_polar >= 2 and sphere_azimuth >= 1")),
            _ => Err(invalid("quadrature", "give both sphere_polar and sphere_azimuth or neither")),
        }
    }

    /// Output times in units of `1/gamma1`.
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        let p = self.cloud_params()?;
        let t = &self.time;
        let n = p.n_atoms as f64;
        let a = p.k0r0() * p.k0r0();
        let start = t.start_inv_gamma1.unwrap_or(1e-2 * a / n);
        let stop = t.stop_inv_gamma1.unwrap_or(10.0 * 2.0 * a * a / n);
        if t.points < 2 {
            return Err(invalid("time.points", "need at least two points"));
        }
        if !(start.is_finite() && stop.is_finite() && start >= 0.0 && stop > start) {
            return Err(invalid("time", format!("need 0 <= start < stop, got [{start}, {stop}]")));
        }
        let last = (t.points - 1) as f64;
        Ok(match t.spacing {
            Spacing::Linear => (0..t.points).map(|k| start + (stop - start) * k as f64 / last).collect(),
            Spacing::Log => {
                if start == 0.0 {
                    return Err(invalid("time.start_inv_gamma1", "log spacing needs a positive start"));
                }
                let (l0, l1) = (start.ln(), stop.ln());
                (0..t.points).map(|k| (l0 + (l1 - l0) * k as f64 / last).exp()).collect()
            }
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| invalid("sweep", "mode = \"sweep\" needs a [sweep] table"))?;
        Ok(SweepSpec {
            n_axis: s.n_atoms.clone(),
            n_axis_k0r0: s.n_axis_r0_inv_k0,
            kr_axis: s.r0_inv_k0.clone(),
            kr_axis_n: s.r0_axis_n_atoms,
            realizations: s.realizations,
            seed: self.seed,
            forward_cap_factor: s.forward_fraction.then_some(self.quadrature.forward_cap_inv_k0r0),
        })
    }
}
