//! Independent oracles: Gaussian moments, brute-force loops, ODE integration
//! and analytic ensemble averages.

use num_complex::Complex64;

use dicke_emission::cloud::{pair_distances, sample_cloud, sample_cloud_stream, CloudParams};
use dicke_emission::dicke::{build_basis, project_vector, BasisMode};
use dicke_emission::dynamics::{
    afterglow_state, analytic_mixing_amplitude, build_perturbative_model, collective_couplings_direct,
    evolve, initial_state, solve_perturbative, AmplitudeState, Frame, PerturbativeMethod,
    SpectralPropagator,
};
use dicke_emission::kernel::{build_decay_matrix, decay_matrix_retarded, kernel_forms_many, DEFAULT_RETARDED_ORDER};
use dicke_emission::observables::{
    angular_pattern, forward_lobe_half_width, gaussian_lobe_half_width, PatternSpec,
};
use dicke_emission::ode::{integrate, Tolerances};
use dicke_emission::stats::{log_log_fit, mean, std_error};

/// `int r^2 P(r) d^3r / R0^2` for the Gaussian density, by composite Simpson.
fn radial_second_moment() -> f64 {
    let (n, rmax) = (4000, 12.0);
    let h = rmax / n as f64;
    let p = |r: f64| 4.0 * std::f64::consts::PI * r.powi(4) * (-r * r).exp() / std::f64::consts::PI.powf(1.5);
    let mut s = p(0.0) + p(rmax);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * p(k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn gaussian_cloud_moments() {
    let oracle = radial_second_moment();
    assert!((oracle - 1.5).abs() < 1e-12);
    let r0 = 2.5;
    let samples = 100_000;
    let mut r2 = Vec::with_capacity(samples);
    let mut coords = [Vec::new(), Vec::new(), Vec::new()];
    for seed in 0..samples as u64 {
        let c = sample_cloud(&CloudParams::natural(1, r0, seed)).unwrap();
        let r = c.positions[0];
        r2.push(r.norm_squared() / (r0 * r0));
        for k in 0..3 {
            coords[k].push(r[k]);
        }
    }
    let (m, se) = (mean(&r2), std_error(&r2));
    println!("<|r|^2>/R0^2 = {m:.5} +- {se:.5}, oracle {oracle}");
    assert!((m - oracle).abs() <= 3.0 * se);
    let sq: Vec<Vec<f64>> = coords.iter().map(|c| c.iter().map(|x| x * x).collect()).collect();
    for k in 0..3 {
        assert!(mean(&coords[k]).abs() <= 3.0 * std_error(&coords[k]));
        assert!((mean(&sq[k]) - r0 * r0 / 2.0).abs() <= 3.0 * std_error(&sq[k]));
    }
    for (a, b) in [(0, 1), (1, 2), (0, 2)] {
        let diff = (mean(&sq[a]) - mean(&sq[b])).abs();
        assert!(diff <= 3.0 * std_error(&sq[a]).hypot(std_error(&sq[b])));
    }
}

#[test]
fn pair_distances_match_euclidean_norms() {
    let c = sample_cloud(&CloudParams::natural(5, 3.0, 4)).unwrap();
    let d = pair_distances(&c);
    for j in 0..5 {
        for l in 0..5 {
            let (a, b) = (c.positions[j], c.positions[l]);
            let e = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
            assert!((d[(j, l)] - e).abs() < 1e-14);
        }
    }
}

#[test]
fn evolve_matches_ode_at_n6() {
    let c = sample_cloud(&CloudParams::natural(6, 1.2, 12)).unwrap();
    let dm = build_decay_matrix(&c).unwrap();
    let s = initial_state(&c);
    let g = &dm.gamma;
    let ode = integrate(
        |_, y, dy| {
            for j in 0..6 {
                dy[j] = -(0..6).map(|l| g[(j, l)] * y[l]).sum::<Complex64>();
            }
        },
        0.0,
        &s.beta,
        &[0.3],
        Tolerances::default(),
    )
    .unwrap();
    let b = evolve(&s, &dm, 0.3).unwrap();
    let err = b.beta.iter().zip(&ode[0]).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn survival_matches_spectral_sum() {
    let c = sample_cloud(&CloudParams::natural(6, 0.8, 3)).unwrap();
    let dm = build_decay_matrix(&c).unwrap();
    let s = initial_state(&c);
    let v = &dm.eigenvectors;
    for t in [0.0, 0.2, 1.0, 4.0] {
        let oracle: f64 = (0..6)
            .map(|k| {
                let w: Complex64 = (0..6).map(|j| v[(j, k)].conj() * s.beta[j]).sum();
                w.norm_sqr() * (-2.0 * dm.eigenvalues[k].max(0.0) * t).exp()
            })
            .sum();
        let p = evolve(&s, &dm, t).unwrap().norm_sqr();
        assert!((p - oracle).abs() < 1e-13, "t={t}");
    }
}

#[test]
fn projection_matches_direct_inner_products() {
    let n = 8;
    let c = sample_cloud(&CloudParams::natural(n, 1.5, 21)).unwrap();
    let dm = build_decay_matrix(&c).unwrap();
    let s = initial_state(&c);
    let gamma_col = dm.expectation(&s.beta).re;
    let b = evolve(&s, &dm, 1.0 / gamma_col).unwrap();
    let p = project_vector(&b.beta, &build_basis(n, BasisMode::Exact).unwrap()).unwrap();
    let rn = (n as f64).sqrt();
    let c_sym: Complex64 = b.beta.iter().map(|x| x / rn).sum();
    assert!((c_sym - p.c_sym).norm() < 1e-14);
    for l in 0..n - 1 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let f = if j == n - 1 {
                -1.0 / rn
            } else {
                (1.0 + 1.0 / rn) / (n as f64 - 1.0) - if j == l { 1.0 } else { 0.0 }
            };
            acc += f * b.beta[j];
        }
        assert!((acc - p.c_f[l]).norm() < 1e-14, "l={l}");
    }
}

#[test]
fn approximate_basis_error_scales_as_inverse_sqrt_n() {
    let ns = [16.0, 64.0, 256.0];
    let mut errs = Vec::new();
    for &n in &ns {
        let n = n as usize;
        let exact = build_basis(n, BasisMode::Exact).unwrap();
        let approx = build_basis(n, BasisMode::Approx).unwrap();
        let worst = (0..n - 1)
            .map(|l| (exact.f_vector(l) - approx.f_vector(l)).norm())
            .fold(0.0, f64::max);
        println!("N = {n}: max |f_exact - f_approx| = {worst:.4e}, times sqrt(N) = {:.3}", worst * (n as f64).sqrt());
        errs.push(worst);
    }
    let fit = log_log_fit(&ns, &errs, None).unwrap();
    let c = fit.intercept.exp();
    assert!((fit.slope + 0.5).abs() < 0.1, "{}", fit.slope);
    assert!((0.3..=3.0).contains(&c), "{c}");
}

#[test]
fn afterglow_normalization_ensemble() {
    let (n, kr) = (256, 7.0);
    let params = CloudParams::natural(n, kr, 99);
    let inv: Vec<f64> = (0..500)
        .map(|k| {
            let c = sample_cloud_stream(&params, k).unwrap();
            afterglow_state(&c).unwrap().a_norm.powi(-2)
        })
        .collect();
    let (m, se) = (mean(&inv), std_error(&inv));
    let a = kr * kr;
    println!("<1/A^2> = {m:.2} +- {se:.2}; N a / 2 = {}, (N-1) a / 2 = {}", n as f64 * a / 2.0, (n as f64 - 1.0) * a / 2.0);
    assert!((m - n as f64 * a / 2.0).abs() <= 3.0 * se);
    assert!((m - (n as f64 - 1.0) * a / 2.0).abs() <= 3.0 * se);
}

#[test]
fn angular_closure_at_default_order() {
    for (n, kr) in [(128usize, 5.0), (128, 10.0), (64, 20.0)] {
        let c = sample_cloud_stream(&CloudParams::natural(n, kr, 6), 0).unwrap();
        let sym = initial_state(&c);
        let ag = afterglow_state(&c).unwrap();
        let h = AmplitudeState { beta: ag.h.clone(), t: 0.0, frame: Frame::Beta };
        let rates = kernel_forms_many(&c, &[&sym.beta, &ag.h]);
        for (s, rate) in [(sym, rates[0]), (h, rates[1])] {
            let pat = angular_pattern(&s, &c, &PatternSpec::default()).unwrap();
            let rel = (pat.total_rate - rate).abs() / rate;
            assert!(rel <= 1e-6, "N={n} k0R0={kr}: {rel:e}");
        }
    }
}

#[test]
fn forward_lobe_width_follows_gaussian_structure_factor() {
    let krs = [5.0, 10.0, 20.0];
    let mut widths = Vec::new();
    for &kr in &krs {
        let c = sample_cloud_stream(&CloudParams::natural(512, kr, 44), 0).unwrap();
        let w = forward_lobe_half_width(&initial_state(&c), &c, 2.0 / kr, 400, 64).unwrap();
        let oracle = gaussian_lobe_half_width(kr);
        println!("k0R0 = {kr}: half width {w:.5} rad, Gaussian {oracle:.5} rad");
        assert!((w / oracle - 1.0).abs() <= 0.2);
        widths.push(w);
    }
    let fit = log_log_fit(&krs, &widths, None).unwrap();
    let c_w = fit.intercept.exp();
    println!("width ~ {c_w:.3} (k0R0)^{:.3}", fit.slope);
    assert!((fit.slope + 1.0).abs() <= 0.1);
    assert!((c_w / (2.0 * std::f64::consts::LN_2).sqrt() - 1.0).abs() <= 0.2);
}

#[test]
fn ensemble_collective_rate_against_gaussian_average() {
    let (n, kr) = (512usize, 10.0);
    let params = CloudParams::natural(n, kr, 123);
    let g: Vec<f64> = (0..200)
        .map(|k| {
            let c = sample_cloud_stream(&params, k).unwrap();
            kernel_forms_many(&c, &[&initial_state(&c).beta])[0]
        })
        .collect();
    let (m, se) = (mean(&g), std_error(&g));
    let a = kr * kr;
    let oracle = 1.0 + (n as f64 - 1.0) * (-(-2.0 * a).exp_m1()) / (2.0 * a);
    println!("<gamma_col> = {m:.4} +- {se:.4}; Gaussian average {oracle:.4}; N (k0R0)^-2 = 5.12");
    assert!((m - oracle).abs() <= 3.0 * se);
    assert!((0.5..=2.0).contains(&(m / 5.12)));
}

#[test]
fn ensemble_afterglow_rate_against_large_sample_formula() {
    let (n, kr) = (512usize, 8.0);
    let params = CloudParams::natural(n, kr, 321);
    let g: Vec<f64> = (0..200)
        .map(|k| {
            let c = sample_cloud_stream(&params, k).unwrap();
            kernel_forms_many(&c, &[&afterglow_state(&c).unwrap().h])[0] - 1.0
        })
        .collect();
    let m = mean(&g);
    println!("cooperative <gamma_r> = {m:.5} +- {:.5}; N / (2 (k0R0)^4) = 0.0625", std_error(&g));
    assert!((0.5..=2.0).contains(&(m / 0.0625)));
}

#[test]
fn retarded_matrix_converges_after_light_crossing() {
    let c = sample_cloud(&CloudParams::natural(16, 4.0, 8)).unwrap();
    let stat = build_decay_matrix(&c).unwrap();
    let d_max = pair_distances(&c).max();
    let mut prev = f64::INFINITY;
    for k in 0..8 {
        let ct = d_max * (0.25 + 0.25 * k as f64);
        let m = decay_matrix_retarded(&c, ct, DEFAULT_RETARDED_ORDER).unwrap();
        let diff = m.iter().zip(stat.gamma.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if ct >= d_max {
            assert!(diff <= prev + 1e-14);
            assert!(diff <= 1e-6);
        }
        prev = diff;
    }
}

#[test]
fn closed_form_mixing_amplitude_against_exact_couplings() {
    let (n, kr) = (1024usize, 15.0);
    let c = sample_cloud_stream(&CloudParams::natural(n, kr, 15), 0).unwrap();
    let basis = build_basis(n, BasisMode::Exact).unwrap();
    let (gamma_col, s) = collective_couplings_direct(&c, &basis).unwrap();
    let t = 5.0 / gamma_col;
    let sat = -(-gamma_col * t).exp_m1() / gamma_col;
    let (mut num, mut den) = (0.0, 0.0);
    for l in 0..n - 1 {
        let exact = -s[l] * sat;
        let closed = analytic_mixing_amplitude(&c, l, t).unwrap();
        num += (exact - closed).norm_sqr();
        den += closed.norm_sqr();
    }
    let rel = (num / den).sqrt();
    let envelope = 1.0 / (n as f64).sqrt() + 1.0 / kr;
    println!("relative L2 difference {rel:.3}, envelope {envelope:.3}");
    assert!(rel <= envelope);
}

#[test]
fn first_order_saturation_and_small_system_full_solution() {
    let c = sample_cloud(&CloudParams::natural(8, 2.0, 2)).unwrap();
    let dm = build_decay_matrix(&c).unwrap();
    let basis = build_basis(8, BasisMode::Exact).unwrap();
    let model = build_perturbative_model(&dm, &basis).unwrap();
    let far = solve_perturbative(&model, &[1e4], PerturbativeMethod::FirstOrder).unwrap();
    for (cf, s) in far[0].c_f.iter().zip(&model.s) {
        assert!((cf + s / model.gamma_col).norm() < 1e-14);
    }
    let times = [0.0, 0.5, 1.5, 3.0];
    let full = solve_perturbative(&model, &times, PerturbativeMethod::FullLinear).unwrap();
    let prop = SpectralPropagator::new(&initial_state(&c), &dm).unwrap();
    for a in &full {
        let p = project_vector(&prop.at(a.t).unwrap().beta, &basis).unwrap();
        assert!((p.c_sym - a.c_sym).norm() < 1e-8);
        assert!(p.c_f.iter().zip(&a.c_f).all(|(x, y)| (x - y).norm() < 1e-8));
    }
}
