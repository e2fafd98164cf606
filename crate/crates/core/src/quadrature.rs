//! Gauss–Legendre rules and product grids on the unit sphere.

use std::f64::consts::PI;

use crate::cloud::Vec3;
use crate::error::{invalid, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = ((i as f64 + 0.75) / (nf + 0.5) * PI).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|wi| half * wi).collect(),
    )
}

/// Order of a product grid on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    /// Gauss–Legendre nodes in `cos(theta)` over the whole polar range.
    pub polar: usize,
    /// Uniform azimuthal nodes.
    pub azimuth: usize,
}

impl GridSpec {
    /// Order sufficient to integrate plane-wave sums over a source of the
    /// given radius (in units of `1/k0`) to near machine precision.
    pub fn for_extent(k_radius: f64) -> Self {
        let polar = (1.2 * k_radius).ceil() as usize + 24;
        let azimuth = (2.4 * k_radius).ceil() as usize + 24;
        Self { polar, azimuth }
    }
}

/// Product grid on the unit sphere with polar axis `axis`.
///
/// Weights are normalized to `dOmega / 4pi`, so they sum to one.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub axis: Vec3,
    pub directions: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Polar angle of each node, measured from `axis`.
    pub polar_angles: Vec<f64>,
}

impl SphereGrid {
    /// Full-sphere product grid, optionally split at a polar cap so that the
    /// cap `theta <= cap_angle` is integrated by its own Gauss–Legendre panel.
    pub fn new(axis: Vec3, spec: GridSpec, cap_angle: Option<f64>) -> Result<Self> {
        if spec.polar < 2 || spec.azimuth < 1 {
            return Err(invalid("grid", format!("order too small: {spec:?}")));
        }
        let mut panels = Vec::new();
        match cap_angle {
            Some(c) if c > 0.0 && c < PI => {
                let uc = c.cos();
                let cap_nodes = ((spec.polar as f64) * (1.0 - uc) / 2.0).ceil() as usize;
                panels.push((uc, 1.0, cap_nodes.max(16)));
                panels.push((-1.0, uc, spec.polar));
            }
            Some(c) if c == PI => panels.push((-1.0, 1.0, spec.polar)),
            Some(c) => return Err(invalid("cap_angle", format!("must lie in (0, pi], got {c}"))),
            None => panels.push((-1.0, 1.0, spec.polar)),
        }
        Self::from_panels(axis, &panels, spec.azimuth)
    }

    /// Grid covering only the cap `theta <= cap_angle`; weights still in
    /// units of `dOmega / 4pi`, so they sum to `(1 - cos cap_angle) / 2`.
    pub fn cap(axis: Vec3, cap_angle: f64, polar: usize, azimuth: usize) -> Result<Self> {
        if !(cap_angle > 0.0 && cap_angle <= PI) {
            return Err(invalid("cap_angle", format!("must lie in (0, pi], got {cap_angle}")));
        }
        Self::from_panels(axis, &[(cap_angle.cos(), 1.0, polar)], azimuth)
    }

    fn from_panels(axis: Vec3, panels: &[(f64, f64, usize)], n_phi: usize) -> Result<Self> {
        let axis = axis.normalize();
        let (e1, e2) = orthonormal_pair(&axis);
        let mut directions = Vec::new();
        let mut weights = Vec::new();
        let mut polar_angles = Vec::new();
        let dphi = 2.0 * PI / n_phi as f64;
        for &(a, b, n) in panels {
            let (us, ws) = gauss_legendre_interval(n, a, b);
            for (u, wu) in us.into_iter().zip(ws) {
                let s = (1.0 - u * u).max(0.0).sqrt();
                for k in 0..n_phi {
                    let phi = (k as f64 + 0.5) * dphi;
                    directions.push(u * axis + s * (phi.cos() * e1 + phi.sin() * e2));
                    // wu integrates du over [-1, 1] (total 2); dphi over 2pi.
                    weights.push(wu * dphi / (4.0 * PI));
                    polar_angles.push(u.clamp(-1.0, 1.0).acos());
                }
            }
        }
        Ok(Self { axis, directions, weights, polar_angles })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Two unit vectors completing `axis` to a right-handed orthonormal frame.
pub fn orthonormal_pair(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = helper.cross(axis).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}
