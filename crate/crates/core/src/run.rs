//! Config-driven runs: computes a mode's results in memory, then writes the
//! artifacts with temp-file-and-rename so a failed run leaves no partial
//! report behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::acceptance::{self, AcceptConfig};
use crate::cloud::sample_cloud_stream;
use crate::config::{Mode, RunConfig};
use crate::dicke::{build_basis, project_vector, BasisMode};
use crate::dynamics::{
    afterglow_state, analytic_gamma_col, build_perturbative_model, gamma_r, initial_state,
    solve_perturbative, AmplitudeState, DickeAmplitudes, Frame, PerturbativeMethod,
    SpectralPropagator,
};
use crate::error::Result;
use crate::kernel::build_decay_matrix;
use crate::observables::{angular_pattern, directional_intensity, fit_rate_window, PatternSpec};
use crate::sweep::scaling_sweep;

/// Largest system for which the coupled Dicke equations are integrated
/// numerically; larger systems get the first-order solution only.
pub const FULL_LINEAR_MAX_ATOMS: usize = 256;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// Human-readable report, also written to `summary.txt`.
    pub text: String,
    pub failed_criteria: usize,
}

pub fn regime_warnings(k0r0: f64, optical_density: f64) -> Vec<String> {
    let mut w = Vec::new();
    if k0r0 <= 1.0 {
        w.push(format!(
            "k0R0 = {k0r0} <= 1: the sample is not much larger than the resonant wavelength"
        ));
    }
    if optical_density <= 1.0 {
        w.push(format!(
            "N (k0R0)^-2 = {optical_density} <= 1: few atoms per forward cylinder, cooperative emission is weak"
        ));
    }
    w
}

struct Artifacts {
    files: Vec<(&'static str, Vec<u8>)>,
    text: String,
    failed: usize,
}

pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let art = match config.mode {
        Mode::Single => run_single(config)?,
        Mode::Sweep => run_sweep(config)?,
        Mode::Acceptance => run_acceptance(config)?,
    };
    let mut files = Vec::new();
    let mut all = art.files;
    all.push(("summary.txt", art.text.clone().into_bytes()));
    for (name, bytes) in all {
        files.push(write_atomic(out_dir, name, &bytes)?);
    }
    Ok(RunSummary { files, text: art.text, failed_criteria: art.failed })
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let path = dir.join(name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

fn line(buf: &mut Vec<u8>, v: serde_json::Value) {
    buf.extend_from_slice(v.to_string().as_bytes());
    buf.push(b'\n');
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn run_single(config: &RunConfig) -> Result<Artifacts> {
    let params = config.cloud_params()?;
    let times = config.time_grid()?;
    let cloud = sample_cloud_stream(&params, config.cloud.realization)?;
    let n = cloud.len();
    let warnings = regime_warnings(params.k0r0(), params.optical_density());

    let dm = build_decay_matrix(&cloud)?;
    let state = initial_state(&cloud);
    let gamma_col = dm.expectation(&state.beta).re;
    let prop = SpectralPropagator::new(&state, &dm)?;
    let basis = if n >= 2 { Some(build_basis(n, BasisMode::Exact)?) } else { None };

    let mut jsonl = Vec::new();
    line(
        &mut jsonl,
        json!({"kind": "run", "mode": "single", "seed": config.seed, "n_atoms": n,
            "k0r0": params.k0r0(), "optical_density": params.optical_density(),
            "direction": [params.n0.x, params.n0.y, params.n0.z],
            "realization": config.cloud.realization, "warnings": warnings}),
    );

    let afterglow = if n >= 2 { Some(afterglow_state(&cloud)?) } else { None };
    let gr = match &afterglow {
        Some(ag) => Some(gamma_r(&cloud, ag, &dm)?),
        None => None,
    };
    line(
        &mut jsonl,
        json!({"kind": "rates", "gamma_col": gamma_col, "gamma_col_analytic": analytic_gamma_col(&cloud),
            "gamma_r": gr, "afterglow_a_norm": afterglow.as_ref().map(|a| a.a_norm),
            "afterglow_a_norm_analytic": afterglow.as_ref().map(|a| a.a_norm_analytic),
            "lambda_min": dm.lambda_min(), "lambda_max": dm.lambda_max()}),
    );

    let (first, full) = match (&basis, config.single.perturbative) {
        (Some(b), true) => {
            let model = build_perturbative_model(&dm, b)?;
            let first = solve_perturbative(&model, &times, PerturbativeMethod::FirstOrder)?;
            let full = if n <= FULL_LINEAR_MAX_ATOMS {
                Some(solve_perturbative(&model, &times, PerturbativeMethod::FullLinear)?)
            } else {
                None
            };
            (Some(first), full)
        }
        _ => (None, None),
    };
    let pick = |sol: &Option<Vec<DickeAmplitudes>>, k: usize| {
        sol.as_ref().map(|s| (s[k].c_sym.norm(), s[k].f_weight()))
    };

    let mut csv = String::from(
        "t,survival,abs_c_sym,f_weight,first_order_abs_c_sym,first_order_f_weight,full_linear_abs_c_sym,full_linear_f_weight\n",
    );
    let mut amps = String::from("t,j,re_beta,im_beta\n");
    let mut survival = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let b = prop.at(t)?;
        let p = b.norm_sqr();
        survival.push(p);
        let proj = match &basis {
            Some(basis) => Some(project_vector(&b.beta, basis)?),
            None => None,
        };
        let c_sym = proj.as_ref().map(|q| q.c_sym.norm());
        let f_weight = proj.as_ref().map(|q| q.f_weight());
        let fo = pick(&first, k);
        let fl = pick(&full, k);
        line(
            &mut jsonl,
            json!({"kind": "time", "t": t, "survival": p, "abs_c_sym": c_sym, "f_weight": f_weight,
                "first_order_abs_c_sym": fo.map(|x| x.0), "first_order_f_weight": fo.map(|x| x.1),
                "full_linear_abs_c_sym": fl.map(|x| x.0), "full_linear_f_weight": fl.map(|x| x.1)}),
        );
        writeln!(
            csv,
            "{t},{p},{},{},{},{},{},{}",
            opt(c_sym),
            opt(f_weight),
            opt(fo.map(|x| x.0)),
            opt(fo.map(|x| x.1)),
            opt(fl.map(|x| x.0)),
            opt(fl.map(|x| x.1))
        )
        .expect("writing to a String");
        if config.single.export_amplitudes {
            for (j, v) in b.beta.iter().enumerate() {
                writeln!(amps, "{t},{j},{},{}", v.re, v.im).expect("writing to a String");
            }
        }
    }

    let stop = *times.last().expect("grid has points");
    let early = config.single.early_window_inv_gamma1.unwrap_or([0.1 / gamma_col, 1.0 / gamma_col]);
    let late = config.single.late_window_inv_gamma1.unwrap_or([0.1 * stop, stop]);
    let mut fit_text = String::new();
    for (name, [lo, hi]) in [("early", early), ("late", late)] {
        match fit_rate_window(&times, &survival, lo, hi) {
            Ok(f) => {
                line(&mut jsonl, json!({"kind": "fit", "window": name, "lo": lo, "hi": hi,
                    "rate": f.rate, "stderr": f.stderr}));
                writeln!(fit_text, "  {name} window [{lo:.4e}, {hi:.4e}]: survival decay rate {:.6e} +- {:.2e}", f.rate, f.stderr)
                    .expect("writing to a String");
            }
            Err(e) => {
                line(&mut jsonl, json!({"kind": "fit", "window": name, "lo": lo, "hi": hi,
                    "error": e.to_string()}));
                writeln!(fit_text, "  {name} window [{lo:.4e}, {hi:.4e}]: {e}").expect("writing to a String");
            }
        }
    }

    let mut pattern_text = String::new();
    if config.single.angular_pattern {
        let spec = PatternSpec { grid: config.grid_spec()?, cap_factor: config.quadrature.forward_cap_inv_k0r0 };
        let mut states = vec![("initial", state.clone(), gamma_col)];
        if let (Some(ag), Some(g)) = (&afterglow, &gr) {
            let s = AmplitudeState { beta: ag.h.clone(), t: 0.0, frame: Frame::Beta };
            states.push(("afterglow", s, g.hermitian));
        }
        for (name, s, rate) in states {
            let pat = angular_pattern(&s, &cloud, &spec)?;
            let peak = directional_intensity(&s.beta, s.norm_sqr(), &cloud, &[params.n0])[0];
            let isotropic = 0.5 * (1.0 - pat.cap_angle.cos());
            line(
                &mut jsonl,
                json!({"kind": "pattern", "state": name, "cap_angle": pat.cap_angle,
                    "forward_fraction": pat.forward_fraction, "isotropic_fraction": isotropic,
                    "total_rate": pat.total_rate, "quadratic_form_rate": rate,
                    "closure_rel_error": (pat.total_rate - rate).abs() / rate,
                    "forward_intensity": peak, "directions": pat.directions.len()}),
            );
            writeln!(
                pattern_text,
                "  {name}: forward fraction {:.4} within {:.4} rad (isotropic {:.2e}), intensity along n0 {:.6e}",
                pat.forward_fraction, pat.cap_angle, isotropic, peak
            )
            .expect("writing to a String");
        }
    }

    let mut text = header(&config.mode, config.seed);
    writeln!(text, "N = {n}, k0R0 = {}, N (k0R0)^-2 = {}", params.k0r0(), params.optical_density())
        .expect("writing to a String");
    push_warnings(&mut text, &warnings);
    writeln!(text, "gamma_col = {gamma_col:.6e} gamma1 (large-sample formula {:.6e})", analytic_gamma_col(&cloud))
        .expect("writing to a String");
    if let Some(g) = &gr {
        writeln!(
            text,
            "gamma_r = <h|Gamma|h> = {:.6e} gamma1 (unconjugated form {:.6e}{:+.2e}i, large-sample formula {:.6e})",
            g.hermitian, g.unconjugated.re, g.unconjugated.im, g.analytic
        )
        .expect("writing to a String");
    }
    if first.is_some() && full.is_none() {
        writeln!(text, "coupled Dicke equations skipped for N > {FULL_LINEAR_MAX_ATOMS}").expect("writing to a String");
    }
    writeln!(text, "time grid: {} points on [{:.4e}, {:.4e}] / gamma1", times.len(), times[0], stop)
        .expect("writing to a String");
    writeln!(text, "rate fits:\n{fit_text}").expect("writing to a String");
    if !pattern_text.is_empty() {
        writeln!(text, "angular patterns:\n{pattern_text}").expect("writing to a String");
    }

    let mut files = vec![("results.jsonl", jsonl), ("summary.csv", csv.into_bytes())];
    if config.single.export_positions {
        let mut buf = Vec::new();
        cloud.write_positions_csv(&mut buf)?;
        files.push(("positions.csv", buf));
    }
    if config.single.export_amplitudes {
        files.push(("amplitudes.csv", amps.into_bytes()));
    }
    Ok(Artifacts { files, text, failed: 0 })
}

fn run_sweep(config: &RunConfig) -> Result<Artifacts> {
    let spec = config.sweep_spec()?;
    let report = scaling_sweep(&spec)?;
    let mut jsonl = Vec::new();
    line(&mut jsonl, json!({"kind": "run", "mode": "sweep", "seed": config.seed, "spec": spec}));
    report.write_jsonl(&mut jsonl)?;
    let mut csv = Vec::new();
    report.write_summary_csv(&mut csv)?;

    let mut text = header(&config.mode, config.seed);
    writeln!(text, "{} realizations per point", spec.realizations).expect("writing to a String");
    writeln!(text, "{:>6} {:>8} {:>12} {:>14} {:>14}", "N", "k0R0", "N(k0R0)^-2", "<gamma_col>", "<gamma_r>")
        .expect("writing to a String");
    let mut warnings = Vec::new();
    for p in &report.points {
        let s = &p.summary;
        writeln!(
            text,
            "{:>6} {:>8} {:>12.4} {:>14.6e} {:>14.6e}",
            s.n_atoms, s.k0r0, s.optical_density, s.gamma_col.mean, s.gamma_r.mean
        )
        .expect("writing to a String");
        for w in regime_warnings(s.k0r0, s.optical_density) {
            warnings.push(format!("N = {}, k0R0 = {}: {w}", s.n_atoms, s.k0r0));
        }
    }
    push_warnings(&mut text, &warnings);
    writeln!(text, "log-log exponents (cooperative parts exclude the single-atom gamma1):").expect("writing to a String");
    for f in &report.fits {
        let (slope, ci) = f.fit.map_or((f64::NAN, f64::NAN), |x| (x.slope, x.slope_ci95));
        writeln!(text, "  {} vs {:?}: {slope:.4} +- {ci:.4} (large-sample {})", f.quantity, f.axis, f.expected)
            .expect("writing to a String");
    }
    Ok(Artifacts { files: vec![("results.jsonl", jsonl), ("summary.csv", csv)], text, failed: 0 })
}

fn run_acceptance(config: &RunConfig) -> Result<Artifacts> {
    let outcomes = acceptance::run_all(&AcceptConfig {
        seed: config.seed,
        criteria: config.acceptance.criteria.clone(),
    });
    let mut jsonl = Vec::new();
    line(&mut jsonl, json!({"kind": "run", "mode": "acceptance", "seed": config.seed}));
    acceptance::write_jsonl(&outcomes, &mut jsonl)?;
    let mut csv = Vec::new();
    acceptance::write_summary_csv(&outcomes, &mut csv)?;

    let mut text = header(&config.mode, config.seed);
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    for o in &outcomes {
        writeln!(text, "[{}] criterion {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.title)
            .expect("writing to a String");
        let kr = o.metrics.get("k0r0");
        let od = o.metrics.get("optical_density");
        if let (Some(&kr), Some(&od)) = (kr, od) {
            writeln!(text, "    k0R0 = {kr}, N (k0R0)^-2 = {od}").expect("writing to a String");
            for w in regime_warnings(kr, od) {
                writeln!(text, "    warning: {w}").expect("writing to a String");
            }
        }
        if let (Some(lo), Some(hi)) = (o.metrics.get("optical_density_min"), o.metrics.get("optical_density_max")) {
            writeln!(text, "    N (k0R0)^-2 from {lo} to {hi} across the sweep").expect("writing to a String");
        }
        for note in &o.notes {
            writeln!(text, "    {note}").expect("writing to a String");
        }
    }
    writeln!(text, "{} of {} criteria passed", outcomes.len() - failed, outcomes.len()).expect("writing to a String");
    Ok(Artifacts { files: vec![("results.jsonl", jsonl), ("summary.csv", csv)], text, failed })
}

fn header(mode: &Mode, seed: u64) -> String {
    format!("mode: {mode:?}\nseed: {seed}\n")
}

fn push_warnings(text: &mut String, warnings: &[String]) {
    for w in warnings {
        writeln!(text, "warning: {w}").expect("writing to a String");
    }
}

/// Survival curve of a single atom, `exp(-2 gamma1 t)`.
pub fn single_atom_survival(t: f64) -> f64 {
    (-2.0 * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    #[test]
    fn single_atom_survival_curve() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse(
            "mode = \"single\"\n[cloud]\nn_atoms = 1\nr0_inv_k0 = 3.0\n[time]\nstart_inv_gamma1 = 0.0\nstop_inv_gamma1 = 4.0\npoints = 9\nspacing = \"linear\"\n",
        )
        .unwrap();
        let s = run(&c, dir.path()).unwrap();
        assert!(s.text.contains("k0R0 = 3"));
        let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        for row in csv.lines().skip(1) {
            let cols: Vec<f64> = row.split(',').take(2).map(|x| x.parse().unwrap()).collect();
            assert!((cols[1] - single_atom_survival(cols[0])).abs() < 1e-14);
        }
    }

    #[test]
    fn small_sample_warns_but_runs() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse("mode = \"single\"\n[cloud]\nn_atoms = 6\nr0_inv_k0 = 0.5\n").unwrap();
        let s = run(&c, dir.path()).unwrap();
        assert!(s.text.contains("warning: k0R0 = 0.5 <= 1"));
        let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert_eq!(summary, s.text);
        let first = std::fs::read_to_string(dir.path().join("results.jsonl")).unwrap();
        assert!(first.lines().next().unwrap().contains("\"warnings\":[\"k0R0 = 0.5"));
    }

    #[test]
    fn failed_validation_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let c = parse("mode = \"single\"\n[cloud]\nn_atoms = 0\nr0_inv_k0 = 3.0\n").unwrap();
        assert_eq!(run(&c, &out).unwrap_err().exit_code(), 3);
        assert!(!out.exists());
    }

    #[test]
    fn sweep_mode_reports_exponents() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse(
            "mode = \"sweep\"\nseed = 4\n[sweep]\nn_atoms = [16, 32, 64]\nn_axis_r0_inv_k0 = 3.0\nr0_inv_k0 = [2.0, 3.0, 4.0]\nr0_axis_n_atoms = 32\nrealizations = 50\n",
        )
        .unwrap();
        let s = run(&c, dir.path()).unwrap();
        assert!(s.text.contains("gamma_col_coop vs AtomNumber"));
        let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(csv.lines().next().unwrap().contains("slope_N_gamma_col"));
        assert_eq!(csv.lines().count(), 7);
    }
}
