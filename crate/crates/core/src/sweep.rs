//! Ensemble sweeps over atom number and sample size with log–log exponent
//! fits of the collective and afterglow rates.
//!
//! Rates are split into the incoherent single-atom part (`gamma1` times the
//! squared norm, the diagonal of the kernel) and the cooperative part built
//! from atom pairs. The large-sample power laws `gamma_col ~ N (k0 R0)^-2`
//! and `gamma_r ~ N (k0 R0)^-4` describe the cooperative part, so exponents
//! are fitted on it; totals are fitted as well and reported alongside.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{sample_cloud_stream, CloudParams};
use crate::dynamics::{afterglow_state, initial_state};
use crate::error::{invalid, Result};
use crate::kernel::kernel_forms_many;
use crate::observables::forward_fraction_cap;
use crate::stats::{log_log_fit, mean, median, std_error, LinearFit};

pub const MIN_POINTS_PER_AXIS: usize = 3;
pub const MIN_REALIZATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Atom numbers swept at fixed `k0 R0 = n_axis_k0r0`.
    pub n_axis: Vec<usize>,
    pub n_axis_k0r0: f64,
    /// Sample sizes `k0 R0` swept at fixed `N = kr_axis_n`.
    pub kr_axis: Vec<f64>,
    pub kr_axis_n: usize,
    pub realizations: usize,
    pub seed: u64,
    /// Forward cap in units of `1/(k0 R0)`; `None` skips the forward fraction.
    pub forward_cap_factor: Option<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_axis.len() < MIN_POINTS_PER_AXIS || self.kr_axis.len() < MIN_POINTS_PER_AXIS {
            return Err(invalid(
                "sweep",
                format!("need at least {MIN_POINTS_PER_AXIS} points on each axis"),
            ));
        }
        if self.realizations < MIN_REALIZATIONS {
            return Err(invalid(
                "realizations",
                format!("need at least {MIN_REALIZATIONS} per point, got {}", self.realizations),
            ));
        }
        if self.n_axis.iter().chain([&self.kr_axis_n]).any(|&n| n < 2) {
            return Err(invalid("n_atoms", "sweep points need at least two atoms"));
        }
        if self.kr_axis.iter().chain([&self.n_axis_k0r0]).any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(invalid("k0r0", "sample sizes must be positive"));
        }
        Ok(())
    }

    /// `(axis, N, k0 R0)` for every point, N axis first.
    pub fn points(&self) -> Vec<(Axis, usize, f64)> {
        self.n_axis
            .iter()
            .map(|&n| (Axis::AtomNumber, n, self.n_axis_k0r0))
            .chain(self.kr_axis.iter().map(|&k| (Axis::SampleSize, self.kr_axis_n, k)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    AtomNumber,
    SampleSize,
}

/// Observables of one cloud realization, rates in units of `gamma1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub realization: usize,
    pub gamma_col: f64,
    /// `<h|Gamma|h>` of the mean-subtracted afterglow state.
    pub gamma_r: f64,
    /// Same form with `h_j` proportional to `k0 n0 . r_j` (no mean subtraction).
    pub gamma_r_uncentered: f64,
    pub forward_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            stderr: std_error(xs),
            median: median(xs),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub axis: Axis,
    pub n_atoms: usize,
    pub k0r0: f64,
    pub realizations: usize,
    pub optical_density: f64,
    pub gamma_col: Moments,
    /// `gamma_col - gamma1`.
    pub gamma_col_coop: Moments,
    pub gamma_r: Moments,
    /// `gamma_r - gamma1`.
    pub gamma_r_coop: Moments,
    pub gamma_r_uncentered_coop: Moments,
    pub forward_fraction: Option<Moments>,
    /// `N (k0 R0)^-2`.
    pub analytic_gamma_col: f64,
    /// `N / (2 (k0 R0)^4)`.
    pub analytic_gamma_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub quantity: String,
    pub axis: Axis,
    pub expected: f64,
    /// `None` when a point mean is not positive.
    pub fit: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub summary: PointSummary,
    pub records: Vec<RealizationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub spec: SweepSpec,
    pub points: Vec<PointReport>,
    pub fits: Vec<ExponentFit>,
}

/// Observables of realization `index` of the cloud `params`.
pub fn realization_record(
    params: &CloudParams,
    index: usize,
    stream: u64,
    cap_factor: Option<f64>,
) -> Result<RealizationRecord> {
    let cloud = sample_cloud_stream(params, stream)?;
    let n = cloud.len();
    let sym = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
    let h = afterglow_state(&cloud)?.h;
    let x = cloud.forward_phases();
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h_unc: Vec<Complex64> = x.iter().map(|v| Complex64::new(0.0, v / xn)).collect();
    let forms = kernel_forms_many(&cloud, &[&sym, &h, &h_unc]);
    let g1 = params.gamma1;
    let forward_fraction = match cap_factor {
        Some(f) => Some(forward_fraction_cap(
            &initial_state(&cloud),
            &cloud,
            (f / params.k0r0()).min(std::f64::consts::PI),
            forms[0],
            24,
            64,
        )?),
        None => None,
    };
    Ok(RealizationRecord {
        realization: index,
        gamma_col: forms[0] / g1,
        gamma_r: forms[1] / g1,
        gamma_r_uncentered: forms[2] / g1,
        forward_fraction,
    })
}

/// Stream id of realization `r` at sweep point `p`.
pub fn stream_id(point: usize, realization: usize) -> u64 {
    ((point as u64) << 32) | realization as u64
}

pub fn scaling_sweep(spec: &SweepSpec) -> Result<EnsembleReport> {
    spec.validate()?;
    let points = spec.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.realizations).map(move |r| (p, r)))
        .collect();
    let records: Vec<RealizationRecord> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let (_, n, kr) = points[p];
            let params = CloudParams::natural(n, kr, spec.seed);
            realization_record(&params, r, stream_id(p, r), spec.forward_cap_factor)
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(points.len());
    for (p, chunk) in records.chunks(spec.realizations).enumerate() {
        let (axis, n, kr) = points[p];
        let pick = |f: &dyn Fn(&RealizationRecord) -> f64| -> Vec<f64> { chunk.iter().map(f).collect() };
        let summary = PointSummary {
            axis,
            n_atoms: n,
            k0r0: kr,
            realizations: chunk.len(),
            optical_density: n as f64 / (kr * kr),
            gamma_col: Moments::of(&pick(&|r| r.gamma_col)),
            gamma_col_coop: Moments::of(&pick(&|r| r.gamma_col - 1.0)),
            gamma_r: Moments::of(&pick(&|r| r.gamma_r)),
            gamma_r_coop: Moments::of(&pick(&|r| r.gamma_r - 1.0)),
            gamma_r_uncentered_coop: Moments::of(&pick(&|r| r.gamma_r_uncentered - 1.0)),
            forward_fraction: spec
                .forward_cap_factor
                .map(|_| Moments::of(&pick(&|r| r.forward_fraction.unwrap_or(f64::NAN)))),
            analytic_gamma_col: n as f64 / (kr * kr),
            analytic_gamma_r: n as f64 / (2.0 * kr.powi(4)),
        };
        reports.push(PointReport { summary, records: chunk.to_vec() });
    }
    let fits = exponent_fits(&reports);
    Ok(EnsembleReport { spec: spec.clone(), points: reports, fits })
}

fn exponent_fits(points: &[PointReport]) -> Vec<ExponentFit> {
    type Getter = fn(&PointSummary) -> &Moments;
    let quantities: [(&str, Getter, f64, f64); 5] = [
        ("gamma_col_coop", |s| &s.gamma_col_coop, 1.0, -2.0),
        ("gamma_r_coop", |s| &s.gamma_r_coop, 1.0, -4.0),
        ("gamma_r_uncentered_coop", |s| &s.gamma_r_uncentered_coop, 1.0, -4.0),
        ("gamma_col", |s| &s.gamma_col, 1.0, -2.0),
        ("gamma_r", |s| &s.gamma_r, 1.0, -4.0),
    ];
    let mut fits = Vec::new();
    for (name, get, n_exp, kr_exp) in quantities {
        for (axis, expected) in [(Axis::AtomNumber, n_exp), (Axis::SampleSize, kr_exp)] {
            let sel: Vec<&PointSummary> =
                points.iter().map(|p| &p.summary).filter(|s| s.axis == axis).collect();
            let xs: Vec<f64> = sel
                .iter()
                .map(|s| match axis {
                    Axis::AtomNumber => s.n_atoms as f64,
                    Axis::SampleSize => s.k0r0,
                })
                .collect();
            let ys: Vec<f64> = sel.iter().map(|s| get(s).mean).collect();
            let se: Vec<f64> = sel.iter().map(|s| get(s).stderr).collect();
            let weights_ok = se.iter().all(|s| *s > 0.0 && s.is_finite());
            let fit = log_log_fit(&xs, &ys, weights_ok.then_some(se.as_slice())).ok();
            fits.push(ExponentFit { quantity: name.to_string(), axis, expected, fit });
        }
    }
    fits
}

impl EnsembleReport {
    pub fn fit(&self, quantity: &str, axis: Axis) -> Option<&ExponentFit> {
        self.fits.iter().find(|f| f.quantity == quantity && f.axis == axis)
    }

    /// One JSON object per line: realization records, point summaries, fits.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (p, point) in self.points.iter().enumerate() {
            for r in &point.records {
                let line = serde_json::json!({"kind": "realization", "point": p,
                    "n_atoms": point.summary.n_atoms, "k0r0": point.summary.k0r0, "record": r});
                writeln!(out, "{line}")?;
            }
        }
        for (p, point) in self.points.iter().enumerate() {
            let line = serde_json::json!({"kind": "point", "point": p, "summary": point.summary});
            writeln!(out, "{line}")?;
        }
        for f in &self.fits {
            writeln!(out, "{}", serde_json::json!({"kind": "fit", "fit": f}))?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let slope = |q: &str, a: Axis| {
            self.fit(q, a).and_then(|f| f.fit).map_or(f64::NAN, |f| f.slope)
        };
        let exps = [
            slope("gamma_col_coop", Axis::AtomNumber),
            slope("gamma_col_coop", Axis::SampleSize),
            slope("gamma_r_coop", Axis::AtomNumber),
            slope("gamma_r_coop", Axis::SampleSize),
        ];
        writeln!(
            out,
            "N,k0R0,optical_density,mean_gamma_col,se_gamma_col,mean_gamma_col_coop,se_gamma_col_coop,\
             mean_gamma_r,se_gamma_r,mean_gamma_r_coop,se_gamma_r_coop,forward_fraction,\
             slope_N_gamma_col,slope_k0R0_gamma_col,slope_N_gamma_r,slope_k0R0_gamma_r"
        )?;
        for p in &self.points {
            let s = &p.summary;
            let ff = s.forward_fraction.as_ref().map_or(f64::NAN, |m| m.mean);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.n_atoms,
                s.k0r0,
                s.optical_density,
                s.gamma_col.mean,
                s.gamma_col.stderr,
                s.gamma_col_coop.mean,
                s.gamma_col_coop.stderr,
                s.gamma_r.mean,
                s.gamma_r.stderr,
                s.gamma_r_coop.mean,
                s.gamma_r_coop.stderr,
                ff,
                exps[0],
                exps[1],
                exps[2],
                exps[3]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            n_axis: vec![4, 8, 16],
            n_axis_k0r0: 3.0,
            kr_axis: vec![2.0, 3.0, 5.0],
            kr_axis_n: 8,
            realizations: 50,
            seed: 11,
            forward_cap_factor: Some(3.0),
        }
    }

    #[test]
    fn rejects_short_axes_and_few_realizations() {
        let mut s = small_spec();
        s.n_axis.pop();
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.realizations = 49;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.kr_axis[0] = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn coincident_atoms_give_unit_slope() {
        let spec = SweepSpec {
            n_axis: vec![2, 4, 8, 16],
            n_axis_k0r0: 1e-9,
            kr_axis: vec![1e-9, 2e-9, 4e-9],
            kr_axis_n: 8,
            realizations: 50,
            seed: 3,
            forward_cap_factor: None,
        };
        let rep = scaling_sweep(&spec).unwrap();
        for p in rep.points.iter().filter(|p| p.summary.axis == Axis::AtomNumber) {
            let n = p.summary.n_atoms as f64;
            assert!((p.summary.gamma_col.mean - n).abs() < 1e-9 * n);
            assert!(p.summary.gamma_col.stderr < 1e-9);
        }
        let total = rep.fit("gamma_col", Axis::AtomNumber).unwrap().fit.unwrap();
        assert!((total.slope - 1.0).abs() < 1e-9, "{}", total.slope);
    }

    #[test]
    fn aggregates_bracket_records_and_output_is_deterministic() {
        let spec = small_spec();
        let a = scaling_sweep(&spec).unwrap();
        for p in &a.points {
            let s = &p.summary;
            for m in [&s.gamma_col, &s.gamma_r, s.forward_fraction.as_ref().unwrap()] {
                assert!(m.min <= m.mean && m.mean <= m.max);
                assert!(m.min <= m.median && m.median <= m.max);
            }
            assert_eq!(p.records.len(), spec.realizations);
        }
        let b = scaling_sweep(&spec).unwrap();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        a.write_jsonl(&mut ja).unwrap();
        b.write_jsonl(&mut jb).unwrap();
        assert_eq!(ja, jb);
        let mut csv = Vec::new();
        a.write_summary_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), 1 + a.points.len());
        assert!(csv.starts_with("N,k0R0,"));
    }

    #[test]
    fn record_matches_dense_matrix_forms() {
        use crate::dynamics::gamma_r;
        use crate::kernel::build_decay_matrix;
        let params = CloudParams::natural(12, 2.5, 5);
        let rec = realization_record(&params, 0, stream_id(1, 7), None).unwrap();
        let cloud = sample_cloud_stream(&params, stream_id(1, 7)).unwrap();
        let dm = build_decay_matrix(&cloud).unwrap();
        let ag = afterglow_state(&cloud).unwrap();
        let g = gamma_r(&cloud, &ag, &dm).unwrap();
        assert!((rec.gamma_r - g.hermitian).abs() < 1e-12);
        let sym = initial_state(&cloud);
        assert!((rec.gamma_col - dm.expectation(&sym.beta).re).abs() < 1e-12);
    }
}
