//! Random atomic clouds.
//!
//! Positions follow the isotropic Gaussian density
//! `P(r) = (sqrt(pi) R0)^-3 exp(-r^2 / R0^2)`, realized as three independent
//! Cartesian normals with standard deviation `R0 / sqrt(2)`.

use std::io::Write;

use nalgebra::{DMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Vec3 = Vector3<f64>;

/// Physical and sampling parameters of one cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudParams {
    pub n_atoms: usize,
    /// Resonant wavenumber, 1/length.
    pub k0: f64,
    /// Gaussian size parameter, length.
    pub r0: f64,
    /// Incident photon direction.
    pub n0: Vec3,
    pub seed: u64,
    /// Single-atom decay rate, 1/time.
    pub gamma1: f64,
}

impl CloudParams {
    /// Parameters in natural units: `k0 = 1`, `gamma1 = 1`, `n0 = +z`.
    pub fn natural(n_atoms: usize, k0r0: f64, seed: u64) -> Self {
        Self {
            n_atoms,
            k0: 1.0,
            r0: k0r0,
            n0: Vec3::z(),
            seed,
            gamma1: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(invalid("n_atoms", "must be at least 1"));
        }
        if !(self.k0.is_finite() && self.k0 > 0.0) {
            return Err(invalid("k0", format!("must be positive and finite, got {}", self.k0)));
        }
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(invalid("r0", format!("must be positive and finite, got {}", self.r0)));
        }
        if !(self.gamma1.is_finite() && self.gamma1 > 0.0) {
            return Err(invalid(
                "gamma1",
                format!("must be positive and finite, got {}", self.gamma1),
            ));
        }
        let norm = self.n0.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(invalid("n0", format!("must be a unit vector, |n0| = {norm}")));
        }
        Ok(())
    }

    /// Dimensionless sample size `k0 R0`.
    pub fn k0r0(&self) -> f64 {
        self.k0 * self.r0
    }

    /// Forward-enhancement factor `N (k0 R0)^-2`.
    pub fn optical_density(&self) -> f64 {
        self.n_atoms as f64 / self.k0r0().powi(2)
    }
}

/// An immutable realization of atomic positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicCloud {
    pub params: CloudParams,
    pub positions: Vec<Vec3>,
}

/// Reproducible generator for realization `stream` of a given seed.
///
/// ChaCha20 with the seed expanded by `seed_from_u64` and the realization
/// index used as the stream id, so every realization owns an independent,
/// platform-stable sequence.
pub fn realization_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples stream 0 of `params.seed`.
pub fn sample_cloud(params: &CloudParams) -> Result<AtomicCloud> {
    sample_cloud_stream(params, 0)
}

pub fn sample_cloud_stream(params: &CloudParams, stream: u64) -> Result<AtomicCloud> {
    params.validate()?;
    let mut rng = realization_rng(params.seed, stream);
    let sigma = params.r0 * std::f64::consts::FRAC_1_SQRT_2;
    let positions = (0..params.n_atoms)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            Vec3::new(sigma * x, sigma * y, sigma * z)
        })
        .collect();
    Ok(AtomicCloud { params: params.clone(), positions })
}

impl AtomicCloud {
    /// Builds a cloud from explicit positions; `params.n_atoms` is overwritten.
    pub fn from_positions(mut params: CloudParams, positions: Vec<Vec3>) -> Result<Self> {
        params.n_atoms = positions.len();
        params.validate()?;
        if positions.iter().any(|r| !r.iter().all(|c| c.is_finite())) {
            return Err(invalid("positions", "non-finite coordinate"));
        }
        Ok(Self { params, positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `k0 n0 . r_j` for every atom.
    pub fn forward_phases(&self) -> Vec<f64> {
        let k = self.params.k0 * self.params.n0;
        self.positions.iter().map(|r| k.dot(r)).collect()
    }

    /// Largest distance of any atom from the origin.
    pub fn max_radius(&self) -> f64 {
        self.positions.iter().map(|r| r.norm()).fold(0.0, f64::max)
    }

    pub fn write_positions_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,z")?;
        for r in &self.positions {
            writeln!(out, "{:e},{:e},{:e}", r.x, r.y, r.z)?;
        }
        Ok(())
    }
}

/// Matrix of interatomic distances `|r_j - r_j'|`.
pub fn pair_distances(cloud: &AtomicCloud) -> DMatrix<f64> {
    let n = cloud.len();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for l in (j + 1)..n {
            let v = (cloud.positions[j] - cloud.positions[l]).norm();
            d[(j, l)] = v;
            d[(l, j)] = v;
        }
    }
    d
}

/// Smallest nonzero interatomic distance, if any pair is separated.
pub fn min_pair_distance(cloud: &AtomicCloud) -> Option<f64> {
    let mut best: Option<f64> = None;
    for j in 0..cloud.len() {
        for l in (j + 1)..cloud.len() {
            let d = (cloud.positions[j] - cloud.positions[l]).norm();
            if d > 0.0 {
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    best
}
