//! The single-excitation decay kernel.
//!
//! In the frame where the incident-photon phases `exp(i k0 n0 . r_j)` are
//! absorbed into the basis states, the amplitudes obey
//! `d beta_j / dt = -gamma1 sum_j' F(r_j - r_j') beta_j'` with
//! `F(dr) = sinc(k0 |dr|) exp(-i k0 n0 . dr)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cloud::{AtomicCloud, Vec3};
use crate::dynamics::Frame;
use crate::error::{invalid, Error, MatrixDiagnostics, Result};
use crate::quadrature::gauss_legendre_interval;

/// Below this argument `sinc` switches to its Taylor series.
const SINC_SERIES_BELOW: f64 = 1e-4;

/// Smallest admissible order of the retarded-kernel quadrature.
pub const MIN_RETARDED_ORDER: usize = 8;

/// Default order of the retarded-kernel quadrature.
pub const DEFAULT_RETARDED_ORDER: usize = 192;

/// Tolerances on the decay-matrix invariants, in units of `gamma1`.
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;

pub fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_SERIES_BELOW {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0)
    } else {
        x.sin() / x
    }
}

/// `F(dr) = sinc(k0 |dr|) exp(-i k0 n0 . dr)`.
pub fn kernel_f(dr: &Vec3, k0: f64, n0: &Vec3) -> Complex64 {
    let s = sinc(k0 * dr.norm());
    let (sin, cos) = (k0 * n0.dot(dr)).sin_cos();
    Complex64::new(s * cos, -s * sin)
}

/// Decay matrix with its cached spectral decomposition.
#[derive(Debug, Clone)]
pub struct DecayMatrix {
    pub frame: Frame,
    pub gamma1: f64,
    pub gamma: DMatrix<Complex64>,
    /// Eigenvalues in ascending order, as returned by the solver.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<Complex64>,
}

impl DecayMatrix {
    /// Decomposes a Hermitian rate matrix and checks the kernel invariants.
    pub fn from_matrix(gamma: DMatrix<Complex64>, gamma1: f64, frame: Frame) -> Result<Self> {
        let n = gamma.nrows();
        if gamma.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: gamma.ncols() });
        }
        let herm = hermiticity_error(&gamma);
        if herm > HERMITIAN_TOL * gamma1 {
            return Err(Error::InvariantViolation {
                invariant: "hermitian",
                detail: format!("max |G - G^H| = {herm:.3e}"),
            });
        }
        for j in 0..n {
            if gamma[(j, j)] != Complex64::new(gamma1, 0.0) {
                return Err(Error::InvariantViolation {
                    invariant: "unit diagonal",
                    detail: format!("entry {j} = {}", gamma[(j, j)]),
                });
            }
        }
        let eig = nalgebra::SymmetricEigen::try_new(gamma.clone(), f64::EPSILON, 100_000)
            .filter(|e| e.eigenvalues.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Decomposition { diagnostics: diagnostics(&gamma) })?;

        // nalgebra does not sort; order ascending for reproducible reporting.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let eigenvectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);

        if n > 0 && eigenvalues[0] < -PSD_TOL * gamma1 {
            return Err(Error::InvariantViolation {
                invariant: "positive semidefinite",
                detail: format!("min eigenvalue {:.3e}", eigenvalues[0]),
            });
        }
        let trace: f64 = eigenvalues.iter().sum();
        let expected = n as f64 * gamma1;
        if (trace - expected).abs() > TRACE_TOL * expected {
            return Err(Error::InvariantViolation {
                invariant: "trace",
                detail: format!("eigenvalue sum {trace} vs {expected}"),
            });
        }
        Ok(Self { frame, gamma1, gamma, eigenvalues, eigenvectors })
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    /// Eigenvalues with solver noise below zero clamped to zero.
    pub fn clamped_eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().map(|&v| v.max(0.0))
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |V diag(lambda) V^H - Gamma|`.
    pub fn reconstruction_error(&self) -> f64 {
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, k| {
            v[(i, k)] * self.eigenvalues[k]
        });
        let rebuilt = scaled * v.adjoint();
        (rebuilt - &self.gamma).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `<v| Gamma |v>`.
    pub fn expectation(&self, v: &[Complex64]) -> Complex64 {
        let v = DVector::from_column_slice(v);
        (v.adjoint() * &self.gamma * &v)[(0, 0)]
    }
}

pub(crate) fn hermiticity_error(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for l in j..n {
            worst = worst.max((m[(j, l)] - m[(l, j)].conj()).norm());
        }
    }
    worst
}

fn diagnostics(m: &DMatrix<Complex64>) -> MatrixDiagnostics {
    MatrixDiagnostics {
        dim: m.nrows(),
        trace_re: m.diagonal().iter().map(|z| z.re).sum(),
        frobenius: m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        hermiticity_error: hermiticity_error(m),
        non_finite: m.iter().filter(|z| !(z.re.is_finite() && z.im.is_finite())).count(),
    }
}

/// Assembles `gamma1 * K(r_j - r_j')` column by column; `K(-dr)` is taken as
/// `conj(K(dr))` so the result is exactly Hermitian.
fn assemble<K>(cloud: &AtomicCloud, kernel: K) -> DMatrix<Complex64>
where
    K: Fn(&Vec3) -> Complex64 + Sync,
{
    let n = cloud.len();
    let g1 = cloud.params.gamma1;
    let pos = &cloud.positions;
    let mut data = vec![Complex64::new(0.0, 0.0); n * n];
    data.par_chunks_mut(n.max(1)).enumerate().for_each(|(col, column)| {
        for (row, slot) in column.iter_mut().enumerate() {
            *slot = if row == col {
                Complex64::new(g1, 0.0)
            } else if row < col {
                g1 * kernel(&(pos[row] - pos[col]))
            } else {
                (g1 * kernel(&(pos[col] - pos[row]))).conj()
            };
        }
    });
    DMatrix::from_vec(n, n, data)
}

/// Static decay matrix `gamma1 F(r_j - r_j')` in the rotated (beta) frame.
pub fn build_decay_matrix(cloud: &AtomicCloud) -> Result<DecayMatrix> {
    let (k0, n0) = (cloud.params.k0, cloud.params.n0);
    let gamma = assemble(cloud, |dr| kernel_f(dr, k0, &n0));
    DecayMatrix::from_matrix(gamma, cloud.params.gamma1, Frame::Beta)
}

/// Real symmetric matrix `gamma1 sinc(k0 |r_j - r_j'|)` acting on the
/// unrotated (alpha) amplitudes.
pub fn build_alpha_matrix(cloud: &AtomicCloud) -> Result<DecayMatrix> {
    let k0 = cloud.params.k0;
    let gamma = assemble(cloud, |dr| Complex64::new(sinc(k0 * dr.norm()), 0.0));
    DecayMatrix::from_matrix(gamma, cloud.params.gamma1, Frame::Alpha)
}

/// `gamma1 sum_jj' conj(v_j) v_j' F(r_j - r_j')` without forming the matrix.
///
/// Returns the Hermitian form (real) together with the bilinear sum
/// `gamma1 sum_jj' v_j v_j' F(r_j - r_j')`.
pub fn kernel_forms(cloud: &AtomicCloud, v: &[Complex64]) -> (f64, Complex64) {
    let (k0, n0) = (cloud.params.k0, cloud.params.n0);
    let pos = &cloud.positions;
    let mut herm = 0.0;
    let mut bil = Complex64::new(0.0, 0.0);
    for j in 0..pos.len() {
        herm += v[j].norm_sqr();
        bil += v[j] * v[j];
        let mut h_row = Complex64::new(0.0, 0.0);
        let mut b_row = Complex64::new(0.0, 0.0);
        for l in (j + 1)..pos.len() {
            let f = kernel_f(&(pos[j] - pos[l]), k0, &n0);
            h_row += v[l] * f;
            // F(dr) + F(-dr) = 2 Re F(dr)
            b_row += v[l] * (2.0 * f.re);
        }
        herm += 2.0 * (v[j].conj() * h_row).re;
        bil += v[j] * b_row;
    }
    let g1 = cloud.params.gamma1;
    (g1 * herm, g1 * bil)
}

/// Hermitian forms `gamma1 <v|F|v>` of several vectors in one pass over the
/// atom pairs.
pub fn kernel_forms_many(cloud: &AtomicCloud, vs: &[&[Complex64]]) -> Vec<f64> {
    let (k0, n0) = (cloud.params.k0, cloud.params.n0);
    let pos = &cloud.positions;
    let mut acc = vec![0.0; vs.len()];
    let mut rows = vec![Complex64::new(0.0, 0.0); vs.len()];
    for j in 0..pos.len() {
        rows.iter_mut().for_each(|r| *r = Complex64::new(0.0, 0.0));
        for l in (j + 1)..pos.len() {
            let f = kernel_f(&(pos[j] - pos[l]), k0, &n0);
            for (r, v) in rows.iter_mut().zip(vs) {
                *r += v[l] * f;
            }
        }
        for ((a, r), v) in acc.iter_mut().zip(&rows).zip(vs) {
            *a += v[j].norm_sqr() + 2.0 * (v[j].conj() * r).re;
        }
    }
    acc.iter().map(|a| cloud.params.gamma1 * a).collect()
}

/// `Gamma . v` without storing the matrix.
pub fn kernel_apply(cloud: &AtomicCloud, v: &[Complex64]) -> Vec<Complex64> {
    let (k0, n0) = (cloud.params.k0, cloud.params.n0);
    let pos = &cloud.positions;
    let g1 = cloud.params.gamma1;
    (0..pos.len())
        .into_par_iter()
        .map(|j| {
            let s: Complex64 = pos
                .iter()
                .zip(v)
                .enumerate()
                .map(|(l, (r, x))| if l == j { *x } else { kernel_f(&(pos[j] - r), k0, &n0) * x })
                .sum();
            s * g1
        })
        .collect()
}

/// Retarded decay matrix after light has travelled a distance `ct`.
///
/// Entry `(j, j')` is `gamma1 exp(-i k0 n0 . dr) <exp(i k0 n . dr)
/// Theta(ct - |n . dr|)>_n` with `dr = r_j - r_j'` and the step function
/// equal to 1/2 at zero. The sphere average uses a Gauss–Legendre rule in
/// `cos(theta)` about `dr` (the azimuthal average is exact), with the panel
/// ending at the light-cone boundary `|cos(theta)| = ct / |dr|`.
pub fn decay_matrix_retarded(
    cloud: &AtomicCloud,
    ct: f64,
    n_quad: usize,
) -> Result<DMatrix<Complex64>> {
    if n_quad < MIN_RETARDED_ORDER {
        return Err(invalid(
            "n_quad",
            format!("need at least {MIN_RETARDED_ORDER} nodes, got {n_quad}"),
        ));
    }
    if !(ct.is_finite() && ct >= 0.0) {
        return Err(invalid("ct", format!("must be finite and nonnegative, got {ct}")));
    }
    let (k0, n0) = (cloud.params.k0, cloud.params.n0);
    let g1 = cloud.params.gamma1;
    let step_at_zero = if ct > 0.0 { 1.0 } else { 0.5 };
    let n = cloud.len();
    let pos = &cloud.positions;
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for j in 0..n {
        m[(j, j)] = Complex64::new(g1 * step_at_zero, 0.0);
        for l in (j + 1)..n {
            let dr = pos[j] - pos[l];
            let d = dr.norm();
            let avg = if d == 0.0 {
                step_at_zero
            } else {
                let half_width = (ct / d).min(1.0);
                if half_width == 0.0 {
                    0.0
                } else {
                    let (us, ws) = gauss_legendre_interval(n_quad, -half_width, half_width);
                    // The odd (sine) part cancels; halve for the dOmega/4pi measure.
                    0.5 * us.iter().zip(&ws).map(|(u, w)| w * (k0 * d * u).cos()).sum::<f64>()
                }
            };
            let (sin, cos) = (k0 * n0.dot(&dr)).sin_cos();
            let v = Complex64::new(g1 * avg * cos, -g1 * avg * sin);
            m[(j, l)] = v;
            m[(l, j)] = v.conj();
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{sample_cloud, CloudParams};

    #[test]
    fn kernel_special_values() {
        let z = Vec3::z();
        assert_eq!(kernel_f(&Vec3::zeros(), 1.0, &z), Complex64::new(1.0, 0.0));
        let f = kernel_f(&Vec3::new(std::f64::consts::PI, 0.0, 0.0), 1.0, &z);
        assert!(f.norm() < 1e-16);
    }

    #[test]
    fn kernel_matches_series_oracle() {
        // sin(d)/d and e^{-id} summed as Taylor series at d = 0.5.
        let d: f64 = 0.5;
        let mut sinc_series = 0.0;
        let mut term = 1.0;
        for k in 0..30 {
            sinc_series += term;
            term *= -d * d / ((2 * k + 2) as f64 * (2 * k + 3) as f64);
        }
        let mut phase = Complex64::new(0.0, 0.0);
        let mut t = Complex64::new(1.0, 0.0);
        for k in 0..40 {
            phase += t;
            t *= Complex64::new(0.0, -d) / (k + 1) as f64;
        }
        let got = kernel_f(&Vec3::new(0.0, 0.0, d), 1.0, &Vec3::z());
        assert!((got - sinc_series * phase).norm() < 1e-15);
    }

    #[test]
    fn sinc_series_branch_is_continuous() {
        for x in [1e-12_f64, 1e-6, 9.99e-5, 1.0001e-4, 1e-3] {
            let direct = if x > 1e-5 { x.sin() / x } else { 1.0 - x * x / 6.0 };
            assert!((sinc(x) - direct).abs() < 1e-16, "x={x}");
        }
    }

    #[test]
    fn single_atom_matrix() {
        let mut p = CloudParams::natural(1, 3.0, 0);
        p.gamma1 = 2.5;
        let dm = build_decay_matrix(&sample_cloud(&p).unwrap()).unwrap();
        assert_eq!(dm.gamma[(0, 0)], Complex64::new(2.5, 0.0));
        assert!((dm.eigenvalues[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn coincident_pair_is_super_and_subradiant() {
        let p = CloudParams::natural(2, 1.0, 0);
        let c = AtomicCloud::from_positions(p, vec![Vec3::new(0.3, 0.1, 0.2); 2]).unwrap();
        let dm = build_decay_matrix(&c).unwrap();
        assert!(dm.eigenvalues[0].abs() < 1e-14);
        assert!((dm.eigenvalues[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_forms_match_matrix() {
        let c = sample_cloud(&CloudParams::natural(9, 4.0, 11)).unwrap();
        let dm = build_decay_matrix(&c).unwrap();
        let v: Vec<Complex64> = (0..9)
            .map(|j| Complex64::new((j as f64).cos(), 0.3 * j as f64 - 1.0))
            .collect();
        let (herm, bil) = kernel_forms(&c, &v);
        assert!((dm.expectation(&v).re - herm).abs() < 1e-12);
        let vv = DVector::from_column_slice(&v);
        let bil_ref = (vv.transpose() * &dm.gamma * &vv)[(0, 0)];
        assert!((bil_ref - bil).norm() < 1e-12);
    }

    #[test]
    fn retarded_rejects_low_order() {
        let c = sample_cloud(&CloudParams::natural(3, 2.0, 1)).unwrap();
        assert!(decay_matrix_retarded(&c, 1.0, 4).is_err());
        assert!(decay_matrix_retarded(&c, -1.0, 16).is_err());
    }

    #[test]
    fn retarded_diagonal_convention() {
        let c = sample_cloud(&CloudParams::natural(4, 2.0, 1)).unwrap();
        let at_zero = decay_matrix_retarded(&c, 0.0, 16).unwrap();
        let later = decay_matrix_retarded(&c, 1e-9, 16).unwrap();
        for j in 0..4 {
            assert_eq!(at_zero[(j, j)].re, 0.5);
            assert_eq!(later[(j, j)].re, 1.0);
            for l in 0..4 {
                if l != j {
                    assert_eq!(at_zero[(j, l)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn retarded_matches_closed_form() {
        // The angular average has the closed form sin(k0 min(ct, d)) / (k0 d).
        let c = sample_cloud(&CloudParams::natural(6, 5.0, 2)).unwrap();
        for ct in [0.3, 1.7, 4.0, 50.0] {
            let m = decay_matrix_retarded(&c, ct, DEFAULT_RETARDED_ORDER).unwrap();
            for j in 0..6 {
                for l in 0..6 {
                    if j == l {
                        continue;
                    }
                    let dr = c.positions[j] - c.positions[l];
                    let d = dr.norm();
                    let avg = (d.min(ct)).sin() / d;
                    let want = avg * Complex64::from_polar(1.0, -dr.z);
                    assert!((m[(j, l)] - want).norm() < 1e-13, "ct={ct}");
                }
            }
        }
    }
}
