//! Amplitude dynamics in the single-excitation sector.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cloud::AtomicCloud;
use crate::dicke::DickeBasis;
use crate::error::{invalid, Error, Result};
use crate::kernel::{kernel_apply, kernel_forms, DecayMatrix};
use crate::ode;

/// Whether the incident-photon phases `exp(i k0 n0 . r_j)` are carried by
/// the amplitudes (`Alpha`) or absorbed into the basis states (`Beta`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Alpha,
    Beta,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::Alpha => "alpha",
            Frame::Beta => "beta",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeState {
    pub beta: Vec<Complex64>,
    pub t: f64,
    pub frame: Frame,
}

impl AmplitudeState {
    pub fn norm_sqr(&self) -> f64 {
        self.beta.iter().map(|b| b.norm_sqr()).sum()
    }

    /// Re-expresses the amplitudes in `frame`.
    pub fn to_frame(&self, cloud: &AtomicCloud, frame: Frame) -> Result<AmplitudeState> {
        if self.beta.len() != cloud.len() {
            return Err(Error::DimensionMismatch { expected: cloud.len(), got: self.beta.len() });
        }
        let sign = match (self.frame, frame) {
            (a, b) if a == b => return Ok(self.clone()),
            (Frame::Beta, Frame::Alpha) => 1.0,
            (Frame::Alpha, Frame::Beta) => -1.0,
            _ => unreachable!(),
        };
        let beta = self
            .beta
            .iter()
            .zip(cloud.forward_phases())
            .map(|(b, phase)| b * Complex64::from_polar(1.0, sign * phase))
            .collect();
        Ok(AmplitudeState { beta, t: self.t, frame })
    }
}

/// Timed absorption: `alpha_j(0) = exp(i k0 . r_j) / sqrt(N)`, i.e. the
/// fully symmetric vector in the beta frame.
pub fn initial_state(cloud: &AtomicCloud) -> AmplitudeState {
    let n = cloud.len();
    AmplitudeState {
        beta: vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n],
        t: 0.0,
        frame: Frame::Beta,
    }
}

/// Propagation of one state by `exp(-Gamma dt)` in the eigenbasis.
#[derive(Debug, Clone)]
pub struct SpectralPropagator<'a> {
    dm: &'a DecayMatrix,
    coefficients: DVector<Complex64>,
    t0: f64,
    frame: Frame,
}

impl<'a> SpectralPropagator<'a> {
    pub fn new(state: &AmplitudeState, dm: &'a DecayMatrix) -> Result<Self> {
        if state.frame != dm.frame {
            return Err(Error::FrameMismatch { state: state.frame, operator: dm.frame });
        }
        if state.beta.len() != dm.dim() {
            return Err(Error::DimensionMismatch { expected: dm.dim(), got: state.beta.len() });
        }
        let coefficients = dm.eigenvectors.adjoint() * DVector::from_column_slice(&state.beta);
        Ok(Self { dm, coefficients, t0: state.t, frame: state.frame })
    }

    /// `|<v_k|beta(t0)>|^2` for every eigenvector.
    pub fn weights(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn at(&self, t: f64) -> Result<AmplitudeState> {
        let dt = t - self.t0;
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(invalid("t", format!("target time {t} precedes state time {}", self.t0)));
        }
        let decayed = DVector::from_iterator(
            self.coefficients.len(),
            self.coefficients
                .iter()
                .zip(self.dm.clamped_eigenvalues())
                .map(|(c, lambda)| c * (-lambda * dt).exp()),
        );
        let beta = &self.dm.eigenvectors * decayed;
        Ok(AmplitudeState { beta: beta.iter().copied().collect(), t, frame: self.frame })
    }

    /// `||beta(t)||^2` without reconstructing the amplitudes.
    pub fn norm_sqr_at(&self, t: f64) -> f64 {
        let dt = t - self.t0;
        self.coefficients
            .iter()
            .zip(self.dm.clamped_eigenvalues())
            .map(|(c, lambda)| c.norm_sqr() * (-2.0 * lambda * dt).exp())
            .sum()
    }
}

/// `beta(t) = exp(-Gamma (t - t0)) beta(t0)`.
pub fn evolve(state: &AmplitudeState, dm: &DecayMatrix, t: f64) -> Result<AmplitudeState> {
    if t == state.t {
        if state.frame != dm.frame {
            return Err(Error::FrameMismatch { state: state.frame, operator: dm.frame });
        }
        return Ok(state.clone());
    }
    SpectralPropagator::new(state, dm)?.at(t)
}

/// Couplings of the two-level reduction onto `{symmetric, f^l}`.
#[derive(Debug, Clone)]
pub struct PerturbativeModel {
    /// `<symmetric|Gamma|symmetric>`.
    pub gamma_col: f64,
    /// `s_l = (gamma1/sqrt(N)) sum_jj' f^l_j F(r_j - r_j')`.
    pub s: Vec<Complex64>,
    /// `Q_ll' = gamma1 sum_jj' f^l_j f^l'_j' F(r_j - r_j')`.
    pub q: DMatrix<Complex64>,
}

fn check_basis(dm: &DecayMatrix, basis: &DickeBasis) -> Result<()> {
    if dm.frame != Frame::Beta {
        return Err(Error::FrameMismatch { state: Frame::Beta, operator: dm.frame });
    }
    if basis.n_atoms != dm.dim() {
        return Err(Error::DimensionMismatch { expected: dm.dim(), got: basis.n_atoms });
    }
    Ok(())
}

/// `gamma_col` and the couplings `s_l`, skipping the `(N-1)^2` block.
pub fn collective_couplings(dm: &DecayMatrix, basis: &DickeBasis) -> Result<(f64, Vec<Complex64>)> {
    check_basis(dm, basis)?;
    couplings_from_row_sums(dm.gamma.column_sum(), basis, dm.gamma1)
}

/// As [`collective_couplings`], summing the kernel on the fly.
pub fn collective_couplings_direct(
    cloud: &AtomicCloud,
    basis: &DickeBasis,
) -> Result<(f64, Vec<Complex64>)> {
    if basis.n_atoms != cloud.len() {
        return Err(Error::DimensionMismatch { expected: cloud.len(), got: basis.n_atoms });
    }
    let ones = vec![Complex64::new(1.0, 0.0); cloud.len()];
    let row_sums = DVector::from_vec(kernel_apply(cloud, &ones));
    couplings_from_row_sums(row_sums, basis, cloud.params.gamma1)
}

fn couplings_from_row_sums(
    row_sums: DVector<Complex64>,
    basis: &DickeBasis,
    gamma1: f64,
) -> Result<(f64, Vec<Complex64>)> {
    let n = row_sums.len();
    let total: Complex64 = row_sums.iter().sum();
    let gamma_col_c = total / n as f64;
    if gamma_col_c.im.abs() > 1e-10 * gamma1 || gamma_col_c.re < -1e-10 * gamma1 {
        return Err(Error::InvariantViolation {
            invariant: "real nonnegative gamma_col",
            detail: format!("{gamma_col_c}"),
        });
    }
    let s = (&basis.f_basis * row_sums).unscale((n as f64).sqrt());
    Ok((gamma_col_c.re.max(0.0), s.iter().copied().collect()))
}

pub fn build_perturbative_model(dm: &DecayMatrix, basis: &DickeBasis) -> Result<PerturbativeModel> {
    let (gamma_col, s) = collective_couplings(dm, basis)?;
    let q = &basis.f_basis * &dm.gamma * basis.f_basis.transpose();
    let herm = crate::kernel::hermiticity_error(&q);
    if herm > 1e-10 * dm.gamma1 {
        return Err(Error::InvariantViolation {
            invariant: "hermitian Q",
            detail: format!("max |Q - Q^H| = {herm:.3e}"),
        });
    }
    Ok(PerturbativeModel { gamma_col, s, q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbativeMethod {
    /// `c_sym = exp(-gamma_col t)`, `c_f = -(s/gamma_col)(1 - exp(-gamma_col t))`.
    FirstOrder,
    /// Numerical integration of the coupled equations including `Q`.
    FullLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DickeAmplitudes {
    pub t: f64,
    pub c_sym: Complex64,
    pub c_f: Vec<Complex64>,
}

impl DickeAmplitudes {
    pub fn f_weight(&self) -> f64 {
        self.c_f.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// `(1 - exp(-rate t)) / rate`, continuous at `rate = 0`.
pub fn saturation_factor(rate: f64, t: f64) -> f64 {
    if rate == 0.0 {
        t
    } else {
        -(-rate * t).exp_m1() / rate
    }
}

/// Solves the reduced equations from `c_sym(0) = 1`, `c_f(0) = 0`.
pub fn solve_perturbative(
    model: &PerturbativeModel,
    t_grid: &[f64],
    method: PerturbativeMethod,
) -> Result<Vec<DickeAmplitudes>> {
    if t_grid.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(invalid("t_grid", "times must be finite and nonnegative"));
    }
    match method {
        PerturbativeMethod::FirstOrder => Ok(t_grid
            .iter()
            .map(|&t| {
                let sat = saturation_factor(model.gamma_col, t);
                DickeAmplitudes {
                    t,
                    c_sym: Complex64::new((-model.gamma_col * t).exp(), 0.0),
                    c_f: model.s.iter().map(|s| -s * sat).collect(),
                }
            })
            .collect()),
        PerturbativeMethod::FullLinear => {
            let m = model.s.len();
            let mut gen = DMatrix::zeros(m + 1, m + 1);
            gen[(0, 0)] = Complex64::new(model.gamma_col, 0.0);
            for l in 0..m {
                gen[(0, l + 1)] = model.s[l].conj();
                gen[(l + 1, 0)] = model.s[l];
            }
            gen.view_mut((1, 1), (m, m)).copy_from(&model.q);
            let mut y0 = vec![Complex64::new(0.0, 0.0); m + 1];
            y0[0] = Complex64::new(1.0, 0.0);
            let mut sorted: Vec<(usize, f64)> = t_grid.iter().copied().enumerate().collect();
            sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
            let times: Vec<f64> = sorted.iter().map(|p| p.1).collect();
            let sol = ode::integrate(
                |_, y, dy| {
                    let v = DVector::from_column_slice(y);
                    let r = -(&gen * v);
                    dy.copy_from_slice(r.as_slice());
                },
                0.0,
                &y0,
                &times,
                ode::Tolerances::default(),
            )?;
            let mut out = vec![None; t_grid.len()];
            for ((idx, t), y) in sorted.into_iter().zip(sol) {
                out[idx] = Some(DickeAmplitudes { t, c_sym: y[0], c_f: y[1..].to_vec() });
            }
            Ok(out.into_iter().map(|a| a.expect("every grid point solved")).collect())
        }
    }
}

/// Large-sample closed form of the mixing amplitude of state `l`,
/// `2 i (k0 n0 . r_l) / (sqrt(N) (k0 R0)^2) (1 - exp(-gamma_col t))`, with
/// `gamma_col = gamma1 N (k0 R0)^-2`.
pub fn analytic_mixing_amplitude(cloud: &AtomicCloud, l: usize, t: f64) -> Result<Complex64> {
    if l >= cloud.len() {
        return Err(invalid("l", format!("index {l} out of range for N = {}", cloud.len())));
    }
    let p = &cloud.params;
    let kr2 = p.k0r0().powi(2);
    if p.k0r0() < 3.0 {
        log::warn!("k0 R0 = {} is not large; the closed-form mixing amplitude is unreliable", p.k0r0());
    }
    let n = cloud.len() as f64;
    let gamma_col = p.gamma1 * n / kr2;
    let x = p.k0 * p.n0.dot(&cloud.positions[l]);
    let sat = -(-gamma_col * t).exp_m1();
    Ok(Complex64::new(0.0, 2.0 * x / (n.sqrt() * kr2) * sat))
}

/// The afterglow state left behind when no photon is detected during the
/// superradiant burst.
#[derive(Debug, Clone)]
pub struct AfterglowState {
    /// `h_j = i A (k0 n0 . r_j - mean)`, normalized.
    pub h: Vec<Complex64>,
    /// Normalization `A` of this configuration.
    pub a_norm: f64,
    /// Large-sample value `sqrt(2 / (N k0^2 R0^2))`.
    pub a_norm_analytic: f64,
}

pub fn afterglow_state(cloud: &AtomicCloud) -> Result<AfterglowState> {
    let n = cloud.len();
    if n < 2 {
        return Err(invalid("n_atoms", "the afterglow state needs at least two atoms"));
    }
    let x = cloud.forward_phases();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm2: f64 = centered.iter().map(|v| v * v).sum();
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if !(norm2.sqrt() > 1e-14 * scale * (n as f64).sqrt()) {
        return Err(Error::Normalization(
            "all atoms share the same projection on the incident direction".into(),
        ));
    }
    let a_norm = 1.0 / norm2.sqrt();
    let h = centered.iter().map(|v| Complex64::new(0.0, a_norm * v)).collect();
    let a_norm_analytic = (2.0 / (n as f64 * cloud.params.k0r0().powi(2))).sqrt();
    Ok(AfterglowState { h, a_norm, a_norm_analytic })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaR {
    /// `<h|Gamma|h>`.
    pub hermitian: f64,
    /// `gamma1 sum_jj' h_j h_j' F(r_j - r_j')`, no conjugation.
    pub unconjugated: Complex64,
    /// `gamma1 N / (2 k0^4 R0^4)`.
    pub analytic: f64,
}

pub fn analytic_gamma_r(cloud: &AtomicCloud) -> f64 {
    let p = &cloud.params;
    p.gamma1 * cloud.len() as f64 / (2.0 * p.k0r0().powi(4))
}

pub fn analytic_gamma_col(cloud: &AtomicCloud) -> f64 {
    cloud.params.gamma1 * cloud.params.optical_density()
}

/// Radiative rate of the afterglow state.
pub fn gamma_r(cloud: &AtomicCloud, ag: &AfterglowState, dm: &DecayMatrix) -> Result<GammaR> {
    if ag.h.len() != dm.dim() {
        return Err(Error::DimensionMismatch { expected: dm.dim(), got: ag.h.len() });
    }
    if dm.frame != Frame::Beta {
        return Err(Error::FrameMismatch { state: Frame::Beta, operator: dm.frame });
    }
    let h = DVector::from_column_slice(&ag.h);
    let hermitian = (h.adjoint() * &dm.gamma * &h)[(0, 0)].re;
    let unconjugated = (h.transpose() * &dm.gamma * &h)[(0, 0)];
    Ok(GammaR { hermitian, unconjugated, analytic: analytic_gamma_r(cloud) })
}

/// As [`gamma_r`] but evaluated pair by pair, without the matrix.
pub fn gamma_r_direct(cloud: &AtomicCloud, ag: &AfterglowState) -> GammaR {
    let (hermitian, unconjugated) = kernel_forms(cloud, &ag.h);
    GammaR { hermitian, unconjugated, analytic: analytic_gamma_r(cloud) }
}

/// `<symmetric|Gamma|symmetric>` evaluated pair by pair.
pub fn gamma_col_direct(cloud: &AtomicCloud) -> f64 {
    let n = cloud.len();
    let v = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
    kernel_forms(cloud, &v).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{sample_cloud, CloudParams, Vec3};
    use crate::dicke::{build_basis, BasisMode};
    use crate::kernel::{build_alpha_matrix, build_decay_matrix};

    #[test]
    fn initial_state_is_uniform() {
        let c = sample_cloud(&CloudParams::natural(4, 3.0, 1)).unwrap();
        let s = initial_state(&c);
        assert!(s.beta.iter().all(|b| *b == Complex64::new(0.5, 0.0)));
        let a = s.to_frame(&c, Frame::Alpha).unwrap();
        for (aj, r) in a.beta.iter().zip(&c.positions) {
            assert!((aj.norm() - 0.5).abs() < 1e-15);
            assert!((aj - 0.5 * Complex64::from_polar(1.0, r.z)).norm() < 1e-15);
        }
        let back = a.to_frame(&c, Frame::Beta).unwrap();
        for (x, y) in back.beta.iter().zip(&s.beta) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn evolve_zero_step_and_single_atom() {
        let c = sample_cloud(&CloudParams::natural(1, 3.0, 1)).unwrap();
        let dm = build_decay_matrix(&c).unwrap();
        let s = initial_state(&c);
        assert_eq!(evolve(&s, &dm, 0.0).unwrap(), s);
        let later = evolve(&s, &dm, 1.7).unwrap();
        assert!((later.beta[0].re - (-1.7f64).exp()).abs() < 1e-15);
        assert!(evolve(&later, &dm, 1.0).is_err());
    }

    #[test]
    fn evolve_checks_frame() {
        let c = sample_cloud(&CloudParams::natural(3, 3.0, 1)).unwrap();
        let alpha = build_alpha_matrix(&c).unwrap();
        assert!(matches!(
            evolve(&initial_state(&c), &alpha, 1.0),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn coincident_atoms_collective_rate() {
        let p = CloudParams::natural(2, 1.0, 0);
        let c = AtomicCloud::from_positions(p, vec![Vec3::zeros(); 2]).unwrap();
        let dm = build_decay_matrix(&c).unwrap();
        let basis = build_basis(2, BasisMode::Exact).unwrap();
        let m = build_perturbative_model(&dm, &basis).unwrap();
        assert!((m.gamma_col - 2.0).abs() < 1e-15);
        assert!(m.s[0].norm() < 1e-15);
        assert!((gamma_col_direct(&c) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn first_order_limits() {
        let model = PerturbativeModel {
            gamma_col: 2.0,
            s: vec![Complex64::new(0.1, -0.2)],
            q: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
        };
        let sol = solve_perturbative(&model, &[0.0, 1e3], PerturbativeMethod::FirstOrder).unwrap();
        assert_eq!(sol[0].c_sym, Complex64::new(1.0, 0.0));
        assert_eq!(sol[0].c_f[0], Complex64::new(0.0, 0.0));
        assert!((sol[1].c_f[0] + model.s[0] / 2.0).norm() < 1e-15);

        let degenerate = PerturbativeModel { gamma_col: 0.0, ..model };
        let sol = solve_perturbative(&degenerate, &[3.0], PerturbativeMethod::FirstOrder).unwrap();
        assert!((sol[0].c_f[0] + degenerate.s[0] * 3.0).norm() < 1e-15);
    }

    #[test]
    fn full_linear_handles_unsorted_grid() {
        let c = sample_cloud(&CloudParams::natural(5, 2.0, 8)).unwrap();
        let dm = build_decay_matrix(&c).unwrap();
        let basis = build_basis(5, BasisMode::Exact).unwrap();
        let m = build_perturbative_model(&dm, &basis).unwrap();
        let sol = solve_perturbative(&m, &[0.8, 0.0, 0.3], PerturbativeMethod::FullLinear).unwrap();
        assert_eq!(sol[0].t, 0.8);
        assert_eq!(sol[1].c_sym, Complex64::new(1.0, 0.0));
        assert!(sol[2].c_sym.norm() > sol[0].c_sym.norm());
    }

    #[test]
    fn mixing_amplitude_closed_form() {
        let p = CloudParams::natural(3, 10.0, 0);
        let c = AtomicCloud::from_positions(
            p,
            vec![Vec3::new(1.0, 2.0, 0.0), Vec3::new(0.0, 0.0, 4.0), Vec3::zeros()],
        )
        .unwrap();
        assert_eq!(analytic_mixing_amplitude(&c, 1, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(analytic_mixing_amplitude(&c, 0, 5.0).unwrap().norm(), 0.0);
        let late = analytic_mixing_amplitude(&c, 1, 1e6).unwrap();
        assert!((late.im - 8.0 / (3f64.sqrt() * 100.0)).abs() < 1e-15);
        assert!(analytic_mixing_amplitude(&c, 3, 1.0).is_err());
    }

    #[test]
    fn afterglow_normalization_and_failure() {
        let p = CloudParams::natural(4, 5.0, 0);
        let sym = AtomicCloud::from_positions(
            p.clone(),
            vec![
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(0.0, 0.0, -1.0),
                Vec3::new(1.0, 0.0, 2.0),
                Vec3::new(0.0, 1.0, -2.0),
            ],
        )
        .unwrap();
        let ag = afterglow_state(&sym).unwrap();
        let sum: Complex64 = ag.h.iter().sum();
        assert!(sum.norm() < 1e-15);
        let norm: f64 = ag.h.iter().map(|h| h.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-15);

        let flat = AtomicCloud::from_positions(
            p,
            vec![Vec3::new(1.0, 0.0, 0.5), Vec3::new(0.0, 3.0, 0.5)],
        )
        .unwrap();
        assert!(matches!(afterglow_state(&flat), Err(Error::Normalization(_))));
    }

    #[test]
    fn gamma_r_rayleigh_bounds_and_single_support() {
        let c = sample_cloud(&CloudParams::natural(12, 3.0, 5)).unwrap();
        let dm = build_decay_matrix(&c).unwrap();
        let ag = afterglow_state(&c).unwrap();
        let g = gamma_r(&c, &ag, &dm).unwrap();
        assert!(g.hermitian >= dm.lambda_min() - 1e-12 && g.hermitian <= dm.lambda_max() + 1e-12);
        let direct = gamma_r_direct(&c, &ag);
        assert!((direct.hermitian - g.hermitian).abs() < 1e-12);
        assert!((direct.unconjugated - g.unconjugated).norm() < 1e-12);

        let mut single = ag.clone();
        single.h = vec![Complex64::new(0.0, 0.0); 12];
        single.h[4] = Complex64::new(0.0, 1.0);
        assert!((gamma_r(&c, &single, &dm).unwrap().hermitian - 1.0).abs() < 1e-15);
    }

    #[test]
    fn direct_couplings_match_matrix() {
        let c = sample_cloud(&CloudParams::natural(20, 3.0, 8)).unwrap();
        let dm = build_decay_matrix(&c).unwrap();
        let basis = build_basis(20, BasisMode::Exact).unwrap();
        let (g, s) = collective_couplings(&dm, &basis).unwrap();
        let (gd, sd) = collective_couplings_direct(&c, &basis).unwrap();
        assert!((g - gd).abs() < 1e-12);
        assert!(s.iter().zip(&sd).all(|(a, b)| (a - b).norm() < 1e-12));
    }
}
