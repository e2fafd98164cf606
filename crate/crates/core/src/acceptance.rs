//! The acceptance suite: numbered criteria, each evaluated at fixed sizes and
//! tolerances and reported as a pass/fail outcome with its metrics.
//!
//! Outcomes are deterministic functions of the seed. Wall-clock time is kept
//! on the outcome but never serialized.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{min_pair_distance, sample_cloud_stream, AtomicCloud, CloudParams};
use crate::dicke::{build_basis, project_vector, symmetry_check, BasisMode};
use crate::dynamics::{
    build_perturbative_model, collective_couplings_direct, initial_state, solve_perturbative,
    PerturbativeMethod, SpectralPropagator,
};
use crate::error::Result;
use crate::kernel::{build_alpha_matrix, build_decay_matrix, decay_matrix_retarded, DEFAULT_RETARDED_ORDER};
use crate::observables::{
    angular_pattern, directional_intensity, forward_lobe_half_width, gaussian_lobe_half_width,
    PatternSpec,
};
use crate::ode;
use crate::stats::{log_log_fit, mean, pearson};
use crate::sweep::{scaling_sweep, Axis, EnsembleReport, SweepSpec};

pub const CRITERIA: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptConfig {
    pub seed: u64,
    /// Criteria to run; empty means all.
    #[serde(default)]
    pub criteria: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CriterionOutcome {
    fn new(id: u8, title: &str) -> Self {
        Self {
            id,
            title: title.to_string(),
            passed: true,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    fn require(&mut self, what: impl Into<String>, ok: bool) {
        let what = what.into();
        if ok {
            self.notes.push(format!("ok: {what}"));
        } else {
            self.passed = false;
            self.notes.push(format!("FAILED: {what}"));
        }
    }

    fn regime(&mut self, params: &CloudParams) {
        self.metric("k0r0", params.k0r0());
        self.metric("optical_density", params.optical_density());
    }
}

/// Seed of criterion `id` derived from the run seed.
pub fn criterion_seed(seed: u64, id: u8) -> u64 {
    seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "kernel matches brute-force double loop",
        2 => "alpha and beta frame spectra agree",
        3 => "Dicke basis orthonormal and transposition invariant",
        4 => "spectral evolution matches ODE integration",
        5 => "collective rate scaling",
        6 => "perturbative chain",
        7 => "mixing amplitude",
        8 => "afterglow rate scaling",
        9 => "forward directivity",
        10 => "retardation buildup",
        _ => "unknown criterion",
    }
}

/// Runs one criterion. Numerical errors become failed outcomes so the report
/// always covers every requested criterion.
pub fn run_criterion(id: u8, seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let s = criterion_seed(seed, id);
    let result = match id {
        1 => kernel_oracle(s),
        2 => frame_spectra(s),
        3 => dicke_basis(s),
        4 => dynamics_oracle(s),
        5 => collective_scaling(s),
        6 => perturbative_chain(s),
        7 => mixing_amplitude(s),
        8 => afterglow_scaling(s),
        9 => forward_directivity(s),
        10 => retardation(s),
        _ => Err(crate::error::invalid("criterion", format!("no criterion {id}"))),
    };
    let mut out = result.unwrap_or_else(|e| {
        let mut o = CriterionOutcome::new(id, title(id));
        o.require(format!("evaluation error: {e}"), false);
        o
    });
    out.elapsed = start.elapsed();
    out
}

pub fn run_all(config: &AcceptConfig) -> Vec<CriterionOutcome> {
    let ids: Vec<u8> =
        if config.criteria.is_empty() { CRITERIA.to_vec() } else { config.criteria.clone() };
    ids.into_iter().map(|id| run_criterion(id, config.seed)).collect()
}

pub fn write_jsonl<W: Write>(outcomes: &[CriterionOutcome], mut out: W) -> std::io::Result<()> {
    for o in outcomes {
        writeln!(out, "{}", serde_json::to_string(o).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(outcomes: &[CriterionOutcome], mut out: W) -> std::io::Result<()> {
    writeln!(out, "criterion,title,passed")?;
    for o in outcomes {
        writeln!(out, "{},{},{}", o.id, o.title, if o.passed { "PASS" } else { "FAIL" })?;
    }
    Ok(())
}

/// `gamma1 sinc(k0 d) exp(-i k0 n0 . dr)` entry by entry.
fn brute_force_matrix(cloud: &AtomicCloud) -> DMatrix<Complex64> {
    let p = &cloud.params;
    let n = cloud.len();
    DMatrix::from_fn(n, n, |j, l| {
        let dr = cloud.positions[j] - cloud.positions[l];
        let d = (dr.x * dr.x + dr.y * dr.y + dr.z * dr.z).sqrt();
        let s = if d == 0.0 { 1.0 } else { (p.k0 * d).sin() / (p.k0 * d) };
        let phase = -p.k0 * (p.n0.x * dr.x + p.n0.y * dr.y + p.n0.z * dr.z);
        Complex64::new(p.gamma1 * s * phase.cos(), p.gamma1 * s * phase.sin())
    })
}

fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn kernel_oracle(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(1, title(1));
    let params = CloudParams::natural(6, 3.0, seed);
    o.regime(&params);
    let (mut entry, mut recon) = (0.0_f64, 0.0_f64);
    for r in 0..10 {
        let cloud = sample_cloud_stream(&params, r)?;
        let dm = build_decay_matrix(&cloud)?;
        entry = entry.max(max_abs_diff(&dm.gamma, &brute_force_matrix(&cloud)));
        recon = recon.max(dm.reconstruction_error());
    }
    o.metric("max_entry_error", entry);
    o.metric("max_reconstruction_error", recon);
    o.require("entrywise error <= 1e-12 gamma1", entry <= 1e-12);
    o.require("eigen reconstruction error <= 1e-10 gamma1", recon <= 1e-10);
    Ok(o)
}

fn frame_spectra(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(2, title(2));
    let params = CloudParams::natural(64, 6.0, seed);
    o.regime(&params);
    let cloud = sample_cloud_stream(&params, 0)?;
    let beta = build_decay_matrix(&cloud)?;
    let alpha = build_alpha_matrix(&cloud)?;
    let diff = beta
        .eigenvalues
        .iter()
        .zip(alpha.eigenvalues.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    o.metric("max_eigenvalue_difference", diff);
    o.metric("lambda_max", beta.lambda_max());
    o.require("spectra agree to 1e-10 gamma1", diff <= 1e-10);
    Ok(o)
}

fn dicke_basis(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(3, title(3));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for n in [2usize, 5, 16] {
        let basis = build_basis(n, BasisMode::Exact)?;
        let gram = basis.gram();
        let gram_err = max_abs_diff(&gram, &DMatrix::identity(n, n));
        let (mut leak, mut span) = (0.0_f64, 0.0_f64);
        for _ in 0..20 {
            let j = rng.random_range(0..n);
            let l = (j + rng.random_range(1..n)) % n;
            let check = symmetry_check(&basis, (j, l))?;
            leak = leak.max(check.symmetric_leakage);
            span = span.max(check.span_residual);
        }
        o.metric(format!("n{n}_gram_error"), gram_err);
        o.metric(format!("n{n}_symmetric_leakage"), leak);
        o.metric(format!("n{n}_span_residual"), span);
        o.require(format!("N={n}: Gram matrix is identity to 1e-12"), gram_err <= 1e-12);
        o.require(format!("N={n}: leakage and span residual <= 1e-12"), leak <= 1e-12 && span <= 1e-12);
    }
    Ok(o)
}

fn dynamics_oracle(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(4, title(4));
    let params = CloudParams::natural(6, 1.5, seed);
    o.regime(&params);
    let cloud = sample_cloud_stream(&params, 0)?;
    let dm = build_decay_matrix(&cloud)?;
    let gamma = brute_force_matrix(&cloud);
    let state = initial_state(&cloud);
    let times: Vec<f64> = (0..=50).map(|k| 0.1 * k as f64).collect();
    let prop = SpectralPropagator::new(&state, &dm)?;
    let tol = ode::Tolerances { rtol: 1e-13, atol: 1e-15, ..Default::default() };
    let sol = ode::integrate(
        |_, y, dy| {
            for (j, d) in dy.iter_mut().enumerate() {
                *d = -(0..y.len()).map(|l| gamma[(j, l)] * y[l]).sum::<Complex64>();
            }
        },
        0.0,
        &state.beta,
        &times,
        tol,
    )?;
    let mut err = 0.0_f64;
    for (t, y) in times.iter().zip(&sol) {
        let b = prop.at(*t)?;
        err = b.beta.iter().zip(y).map(|(a, c)| (a - c).norm()).fold(err, f64::max);
    }
    o.metric("max_amplitude_difference", err);
    o.metric("final_survival", prop.norm_sqr_at(5.0));
    o.require("spectral and ODE amplitudes agree to 1e-8 over gamma1 t in [0, 5]", err <= 1e-8);
    Ok(o)
}

fn sweep_points(o: &mut CriterionOutcome, rep: &EnsembleReport) {
    let ods: Vec<f64> = rep.points.iter().map(|p| p.summary.optical_density).collect();
    o.metric("optical_density_min", ods.iter().copied().fold(f64::INFINITY, f64::min));
    o.metric("optical_density_max", ods.iter().copied().fold(f64::NEG_INFINITY, f64::max));
}

fn slope(o: &mut CriterionOutcome, rep: &EnsembleReport, quantity: &str, axis: Axis) -> f64 {
    let tag = match axis {
        Axis::AtomNumber => "n",
        Axis::SampleSize => "k0r0",
    };
    let fit = rep.fit(quantity, axis).and_then(|f| f.fit);
    let s = fit.map_or(f64::NAN, |f| f.slope);
    o.metric(format!("slope_{tag}_{quantity}"), s);
    o.metric(format!("slope_{tag}_{quantity}_ci95"), fit.map_or(f64::NAN, |f| f.slope_ci95));
    s
}

fn collective_scaling(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(5, title(5));
    let spec = SweepSpec {
        n_axis: vec![128, 256, 512, 1024],
        n_axis_k0r0: 10.0,
        kr_axis: vec![6.0, 10.0, 16.0, 24.0],
        kr_axis_n: 512,
        realizations: 100,
        seed,
        forward_cap_factor: None,
    };
    let rep = scaling_sweep(&spec)?;
    sweep_points(&mut o, &rep);
    let sn = slope(&mut o, &rep, "gamma_col_coop", Axis::AtomNumber);
    let sk = slope(&mut o, &rep, "gamma_col_coop", Axis::SampleSize);
    slope(&mut o, &rep, "gamma_col", Axis::AtomNumber);
    slope(&mut o, &rep, "gamma_col", Axis::SampleSize);
    let mut ratios_ok = true;
    for p in &rep.points {
        let s = &p.summary;
        let tag = format!("n{}_k0r0_{}", s.n_atoms, s.k0r0);
        let ratio = s.gamma_col.mean / s.analytic_gamma_col;
        // Exact Gaussian average of the double sum.
        let a = s.k0r0 * s.k0r0;
        let gauss = 1.0 + (s.n_atoms as f64 - 1.0) * (-(-2.0 * a).exp_m1()) / (2.0 * a);
        o.metric(format!("{tag}_mean_over_n_k0r0_m2"), ratio);
        o.metric(format!("{tag}_coop_mean_over_n_k0r0_m2"), s.gamma_col_coop.mean / s.analytic_gamma_col);
        o.metric(format!("{tag}_mean_over_gaussian_average"), s.gamma_col.mean / gauss);
        ratios_ok &= (0.5..=2.0).contains(&ratio);
    }
    o.require("cooperative gamma_col slope vs N within 1.0 +- 0.1", (sn - 1.0).abs() <= 0.1);
    o.require("cooperative gamma_col slope vs k0R0 within -2.0 +- 0.2", (sk + 2.0).abs() <= 0.2);
    o.require("mean gamma_col within a factor 2 of N (k0R0)^-2 at every point", ratios_ok);
    Ok(o)
}

fn perturbative_chain(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(6, title(6));
    let params = CloudParams::natural(512, 12.0, seed);
    o.regime(&params);
    let cloud = sample_cloud_stream(&params, 0)?;
    let dm = build_decay_matrix(&cloud)?;
    let state = initial_state(&cloud);
    let gamma_col = dm.expectation(&state.beta).re;
    let prop = SpectralPropagator::new(&state, &dm)?;
    let n = cloud.len() as f64;
    let mut worst = 0.0_f64;
    for k in 0..=40 {
        let gt = 2.0 * k as f64 / 40.0;
        let b = prop.at(gt / gamma_col)?;
        let c_sym = b.beta.iter().sum::<Complex64>().norm() / n.sqrt();
        let expected = (-gt).exp();
        let rel = (c_sym - expected).abs() / expected;
        if k % 10 == 0 {
            o.metric(format!("rel_error_at_gamma_col_t_{gt}"), rel);
        }
        worst = worst.max(rel);
    }
    o.metric("gamma_col", gamma_col);
    o.metric("max_rel_error_c_sym", worst);
    o.require("|c_sym| within 10% of exp(-gamma_col t) for gamma_col t <= 2", worst <= 0.1);

    let small = CloudParams::natural(8, 2.0, seed);
    let cloud8 = sample_cloud_stream(&small, 1)?;
    o.metric("small_k0r0", small.k0r0());
    o.metric("small_optical_density", small.optical_density());
    let dm8 = build_decay_matrix(&cloud8)?;
    let basis = build_basis(8, BasisMode::Exact)?;
    let model = build_perturbative_model(&dm8, &basis)?;
    let times: Vec<f64> = (0..=25).map(|k| 0.2 * k as f64).collect();
    let sol = solve_perturbative(&model, &times, PerturbativeMethod::FullLinear)?;
    let state8 = initial_state(&cloud8);
    let prop8 = SpectralPropagator::new(&state8, &dm8)?;
    let mut err = 0.0_f64;
    for amp in &sol {
        let proj = project_vector(&prop8.at(amp.t)?.beta, &basis)?;
        err = err.max((proj.c_sym - amp.c_sym).norm());
        err = proj.c_f.iter().zip(&amp.c_f).map(|(a, b)| (a - b).norm()).fold(err, f64::max);
    }
    o.metric("n8_max_amplitude_difference", err);
    o.require("N=8 coupled Dicke equations match evolve+project to 1e-8", err <= 1e-8);
    Ok(o)
}

fn mixing_amplitude(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(7, title(7));
    let n = 1024;
    let basis = build_basis(n, BasisMode::Exact)?;
    let params = CloudParams::natural(n, 15.0, seed);
    o.regime(&params);
    let cloud = sample_cloud_stream(&params, 0)?;
    let (gamma_col, s) = collective_couplings_direct(&cloud, &basis)?;
    let a = params.k0r0().powi(2);
    let saturated: Vec<f64> = s.iter().map(|x| x.norm() / gamma_col).collect();
    let closed: Vec<f64> = (0..n - 1)
        .map(|l| 2.0 * (params.k0 * params.n0.dot(&cloud.positions[l])).abs() / ((n as f64).sqrt() * a))
        .collect();
    let r = pearson(&saturated, &closed);
    o.metric("pearson_r", r);
    o.metric("mean_saturated_over_closed_form", mean(&saturated) / mean(&closed));
    o.require("Pearson r >= 0.9 between first-order and closed-form |c_f|", r >= 0.9);

    let krs = [8.0, 12.0, 18.0];
    let realizations = 5;
    let mut weights = Vec::new();
    let mut stderrs = Vec::new();
    for (i, &kr) in krs.iter().enumerate() {
        let p = CloudParams::natural(n, kr, seed);
        let mut w = Vec::new();
        for r in 0..realizations {
            let c = sample_cloud_stream(&p, ((i as u64 + 1) << 32) | r)?;
            let (g, s) = collective_couplings_direct(&c, &basis)?;
            w.push(s.iter().map(|x| x.norm_sqr()).sum::<f64>() / (g * g));
        }
        let m = mean(&w);
        o.metric(format!("k0r0_{kr}_subspace_weight"), m);
        o.metric(format!("k0r0_{kr}_subspace_weight_times_k0r0_sq"), m * kr * kr);
        o.metric(format!("k0r0_{kr}_closed_form_weight"), 2.0 * (n as f64 - 1.0) / (n as f64 * kr * kr));
        stderrs.push(crate::stats::std_error(&w));
        weights.push(m);
    }
    let fit = log_log_fit(&krs, &weights, Some(&stderrs))?;
    o.metric("weight_exponent", fit.slope);
    o.metric("weight_exponent_ci95", fit.slope_ci95);
    o.metric("weight_prefactor", fit.intercept.exp());
    o.require("subspace weight exponent within -2 +- 0.4", (fit.slope + 2.0).abs() <= 0.4);
    Ok(o)
}

fn afterglow_scaling(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(8, title(8));
    let spec = SweepSpec {
        n_axis: vec![128, 512, 2048],
        n_axis_k0r0: 10.0,
        kr_axis: vec![6.0, 10.0, 16.0],
        kr_axis_n: 512,
        realizations: 200,
        seed,
        forward_cap_factor: None,
    };
    let rep = scaling_sweep(&spec)?;
    sweep_points(&mut o, &rep);
    let sk = slope(&mut o, &rep, "gamma_r_coop", Axis::SampleSize);
    let sn = slope(&mut o, &rep, "gamma_r_coop", Axis::AtomNumber);
    for q in ["gamma_r_uncentered_coop", "gamma_r"] {
        slope(&mut o, &rep, q, Axis::SampleSize);
        slope(&mut o, &rep, q, Axis::AtomNumber);
    }
    let mut ratios_ok = true;
    for p in &rep.points {
        let s = &p.summary;
        let tag = format!("n{}_k0r0_{}", s.n_atoms, s.k0r0);
        let ratio = s.gamma_r_coop.mean / s.analytic_gamma_r;
        o.metric(format!("{tag}_coop_over_analytic"), ratio);
        o.metric(format!("{tag}_uncentered_coop_over_analytic"), s.gamma_r_uncentered_coop.mean / s.analytic_gamma_r);
        o.metric(format!("{tag}_mean_gamma_r"), s.gamma_r.mean);
        ratios_ok &= (0.5..=2.0).contains(&ratio);
    }
    o.require("cooperative gamma_r slope vs k0R0 within -4.0 +- 0.3", (sk + 4.0).abs() <= 0.3);
    o.require("cooperative gamma_r slope vs N within 1.0 +- 0.15", (sn - 1.0).abs() <= 0.15);
    o.require("cooperative gamma_r within a factor 2 of N / (2 (k0R0)^4) at every point", ratios_ok);
    Ok(o)
}

fn forward_directivity(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(9, title(9));
    let params = CloudParams::natural(512, 10.0, seed);
    o.regime(&params);
    let cloud = sample_cloud_stream(&params, 0)?;
    let state = initial_state(&cloud);
    let n = cloud.len() as f64;
    let peak = directional_intensity(&state.beta, state.norm_sqr(), &cloud, &[params.n0])[0];
    o.metric("peak_intensity", peak);
    o.require("intensity along n0 equals N gamma1", (peak - n).abs() <= 1e-10 * n);

    let pattern = angular_pattern(&state, &cloud, &PatternSpec::default())?;
    let gamma_col = crate::dynamics::gamma_col_direct(&cloud);
    o.metric("forward_fraction", pattern.forward_fraction);
    o.metric("pattern_total_rate", pattern.total_rate);
    o.metric("gamma_col", gamma_col);
    o.metric("closure_rel_error", (pattern.total_rate - gamma_col).abs() / gamma_col);
    o.require("forward fraction within 3/(k0R0) exceeds 0.5", pattern.forward_fraction > 0.5);

    let width = forward_lobe_half_width(&state, &cloud, 0.5, 500, 64)?;
    let oracle = gaussian_lobe_half_width(params.k0r0());
    o.metric("lobe_half_width", width);
    o.metric("gaussian_half_width", oracle);
    o.require("lobe half width within 20% of the Gaussian oracle", (width / oracle - 1.0).abs() <= 0.2);
    Ok(o)
}

fn retardation(seed: u64) -> Result<CriterionOutcome> {
    let mut o = CriterionOutcome::new(10, title(10));
    let params = CloudParams::natural(32, 10.0, seed);
    o.regime(&params);
    let cloud = sample_cloud_stream(&params, 0)?;
    let d_min = min_pair_distance(&cloud).expect("32 atoms have pairs");
    let n = cloud.len();
    let early = decay_matrix_retarded(&cloud, 0.01 * d_min, DEFAULT_RETARDED_ORDER)?;
    let (mut frob, mut max_entry) = (0.0_f64, 0.0_f64);
    for j in 0..n {
        for l in 0..n {
            if j != l {
                frob += early[(j, l)].norm_sqr();
                max_entry = max_entry.max(early[(j, l)].norm());
            }
        }
    }
    let frob = frob.sqrt();
    o.metric("min_pair_distance_k0", d_min * params.k0);
    o.metric("early_offdiag_frobenius", frob);
    o.metric("early_offdiag_max_entry", max_entry);
    o.require("off-diagonal norm at ct = 0.01 d_min <= 1e-3 gamma1", frob <= 1e-3);

    let late = decay_matrix_retarded(&cloud, 10.0 * params.r0, DEFAULT_RETARDED_ORDER)?;
    let stat = build_decay_matrix(&cloud)?;
    let diff = max_abs_diff(&late, &stat.gamma);
    o.metric("late_max_difference", diff);
    o.require("matrix at ct = 10 R0 matches the static matrix to 1e-6 gamma1", diff <= 1e-6);
    Ok(o)
}
