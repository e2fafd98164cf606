//! Adaptive Dormand–Prince 5(4) integrator for complex linear systems.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, max_steps: 10_000_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0`, returning the state at each of the
/// nondecreasing `times` (all `>= t0`).
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    y0: &[Complex64],
    times: &[f64],
    tol: Tolerances,
) -> Result<Vec<Vec<Complex64>>>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return Err(invalid("times", "must be nondecreasing and not before the start time"));
    }
    let n = y0.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut k = vec![vec![zero; n]; 7];
    let mut tmp = vec![zero; n];
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut out = Vec::with_capacity(times.len());
    let span = times.last().map_or(0.0, |&te| te - t0);
    let mut h = if span > 0.0 { span * 1e-3 } else { 0.0 };
    let mut steps = 0usize;

    rhs(t, &y, &mut k[0]);
    for &target in times {
        while t < target {
            if steps >= tol.max_steps {
                return Err(Error::Fit(format!("ODE integration exceeded {} steps", tol.max_steps)));
            }
            steps += 1;
            let last = h >= target - t;
            let step = if last { target - t } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = zero;
                    for (r, kr) in k.iter().enumerate().take(s) {
                        acc += A[s][r] * kr[i];
                    }
                    tmp[i] = y[i] + step * acc;
                }
                let (done, rest) = k.split_at_mut(s);
                let _ = done;
                rhs(t + C[s] * step, &tmp, &mut rest[0]);
            }
            // Error estimate from the embedded 4th-order solution.
            let mut err2 = 0.0;
            for i in 0..n {
                let mut y5 = zero;
                let mut e = zero;
                for s in 0..7 {
                    y5 += B5[s] * k[s][i];
                    e += (B5[s] - B4[s]) * k[s][i];
                }
                tmp[i] = y[i] + step * y5;
                let scale = tol.atol + tol.rtol * y[i].norm().max(tmp[i].norm());
                err2 += (step * e).norm_sqr() / (scale * scale);
            }
            let err = (err2 / n.max(1) as f64).sqrt();
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y.copy_from_slice(&tmp);
                // FSAL: the last stage is the derivative at the new point.
                let (first, rest) = k.split_at_mut(6);
                first[0].copy_from_slice(&rest[0]);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !(last && err <= 1.0) {
                h = step * factor;
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_decay() {
        let out = integrate(
            |_, y, dy| dy[0] = -2.0 * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &[0.0, 0.5, 1.0, 3.0],
            Tolerances::default(),
        )
        .unwrap();
        for (y, t) in out.iter().zip([0.0f64, 0.5, 1.0, 3.0]) {
            assert!((y[0].re - (-2.0 * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn rotating_decay() {
        let rate = Complex64::new(-0.3, 4.0);
        let out = integrate(
            |_, y, dy| dy[0] = rate * y[0],
            1.0,
            &[Complex64::new(0.0, 1.0)],
            &[2.0, 6.0],
            Tolerances::default(),
        )
        .unwrap();
        let want = Complex64::new(0.0, 1.0) * (rate * 5.0).exp();
        assert!((out[1][0] - want).norm() < 1e-10);
    }

    #[test]
    fn rejects_unordered_times() {
        let r = integrate(|_, _, _| {}, 0.0, &[Complex64::new(1.0, 0.0)], &[1.0, 0.5], Tolerances::default());
        assert!(r.is_err());
    }
}
