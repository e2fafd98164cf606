//! Permutation-symmetry basis of the single-excitation sector.
//!
//! The fully symmetric state (Young tableau `{N}`) has all components
//! `1/sqrt(N)`. The `N - 1` states of the `{N-1, 1}` representation are
//!
//! ```text
//! f^l_j = (1 + 1/sqrt(N)) / (N - 1) - delta_jl   for j < N
//! f^l_N = -1/sqrt(N)
//! ```
//!
//! which are orthonormal and orthogonal to the symmetric state. The cheaper
//! approximation `f^l_j = 1/N - delta_jl` is accurate to `O(1/sqrt(N))`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::AmplitudeState;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisMode {
    Exact,
    Approx,
}

#[derive(Debug, Clone)]
pub struct DickeBasis {
    pub n_atoms: usize,
    pub mode: BasisMode,
    pub symmetric: DVector<Complex64>,
    /// Row `l` holds `f^l`; shape `(N - 1) x N`.
    pub f_basis: DMatrix<Complex64>,
}

pub fn build_basis(n_atoms: usize, mode: BasisMode) -> Result<DickeBasis> {
    if n_atoms < 2 {
        return Err(invalid("n_atoms", "the {N-1,1} tableau needs at least two atoms"));
    }
    let n = n_atoms;
    let nf = n as f64;
    let inv_sqrt = 1.0 / nf.sqrt();
    let symmetric = DVector::from_element(n, Complex64::new(inv_sqrt, 0.0));
    let f_basis = match mode {
        BasisMode::Exact => {
            let c = (1.0 + inv_sqrt) / (nf - 1.0);
            DMatrix::from_fn(n - 1, n, |l, j| {
                let v = if j == n - 1 {
                    -inv_sqrt
                } else if j == l {
                    c - 1.0
                } else {
                    c
                };
                Complex64::new(v, 0.0)
            })
        }
        BasisMode::Approx => DMatrix::from_fn(n - 1, n, |l, j| {
            let v = if j == l { 1.0 / nf - 1.0 } else { 1.0 / nf };
            Complex64::new(v, 0.0)
        }),
    };
    Ok(DickeBasis { n_atoms, mode, symmetric, f_basis })
}

impl DickeBasis {
    /// Rows `{symmetric, f^1, ..., f^{N-1}}` as an `N x N` matrix.
    pub fn full_matrix(&self) -> DMatrix<Complex64> {
        let n = self.n_atoms;
        DMatrix::from_fn(n, n, |row, j| {
            if row == 0 {
                self.symmetric[j]
            } else {
                self.f_basis[(row - 1, j)]
            }
        })
    }

    /// Gram matrix of `{symmetric, f^1, ..., f^{N-1}}`.
    pub fn gram(&self) -> DMatrix<Complex64> {
        let b = self.full_matrix();
        b.conjugate() * b.transpose()
    }

    pub fn f_vector(&self, l: usize) -> DVector<Complex64> {
        self.f_basis.row(l).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DickeProjection {
    pub c_sym: Complex64,
    pub c_f: Vec<Complex64>,
    /// Norm of the part of the state not captured by the coefficients.
    pub residual_norm: f64,
}

impl DickeProjection {
    pub fn f_weight(&self) -> f64 {
        self.c_f.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Coefficients `c_sym = <symmetric|beta>` and `c_f[l] = <f^l|beta>`.
pub fn project(state: &AmplitudeState, basis: &DickeBasis) -> Result<DickeProjection> {
    project_vector(&state.beta, basis)
}

pub fn project_vector(beta: &[Complex64], basis: &DickeBasis) -> Result<DickeProjection> {
    if beta.len() != basis.n_atoms {
        return Err(Error::DimensionMismatch { expected: basis.n_atoms, got: beta.len() });
    }
    let v = DVector::from_column_slice(beta);
    let c_sym = basis.symmetric.dotc(&v);
    let c_f_vec = basis.f_basis.conjugate() * &v;
    // Reconstruct and measure what is left over.
    let mut rebuilt = &basis.symmetric * c_sym;
    rebuilt += basis.f_basis.transpose() * &c_f_vec;
    let residual_norm = (v - rebuilt).norm();
    Ok(DickeProjection { c_sym, c_f: c_f_vec.iter().copied().collect(), residual_norm })
}

/// Action of a generalized transposition on the `{N-1, 1}` basis.
#[derive(Debug, Clone)]
pub struct SymmetryCheck {
    /// `R[m][l] = <f^m| O_jl |f^l>`.
    pub matrix: DMatrix<Complex64>,
    /// Largest `|<symmetric| O f^l>|`.
    pub symmetric_leakage: f64,
    /// Largest norm of `O f^l` outside `span{symmetric, f}`.
    pub span_residual: f64,
}

/// Applies the generalized permutation that exchanges atoms `j` and `l`
/// (zero-based) to every `f` vector and returns its representation matrix.
pub fn symmetry_check(basis: &DickeBasis, permutation: (usize, usize)) -> Result<SymmetryCheck> {
    if basis.mode != BasisMode::Exact {
        return Err(invalid("basis", "symmetry check requires the exact basis"));
    }
    let n = basis.n_atoms;
    let (j, l) = permutation;
    if j >= n || l >= n {
        return Err(invalid("permutation", format!("indices ({j}, {l}) out of range for N = {n}")));
    }
    let mut permuted = basis.f_basis.clone();
    permuted.swap_columns(j, l);
    let matrix = basis.f_basis.conjugate() * permuted.transpose();
    let leak = permuted.conjugate() * &basis.symmetric;
    let symmetric_leakage = leak.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut span_residual: f64 = 0.0;
    for m in 0..n - 1 {
        let v = permuted.row(m).transpose();
        let p = project_vector(v.as_slice(), basis)?;
        span_residual = span_residual.max(p.residual_norm);
    }
    Ok(SymmetryCheck { matrix, symmetric_leakage, span_residual })
}
