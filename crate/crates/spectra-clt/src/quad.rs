//! Quadrature kernels shared by the deterministic modules.
//!
//! * [`gauss_legendre`]: Golub-Welsch nodes/weights on [-1, 1], cached per order.
//! * [`adaptive`]: globally adaptive (G7, K15) rule with an explicit error budget.
//! * [`chebyshev_gauss`]: exact rule for the weight 1/sqrt(1-x^2) on [-1, 1].
//! * [`disk`]: tensor rule on the unit disk (Gauss-Legendre radial x uniform angular).

use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

use crate::C64;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("adaptive quadrature did not reach tolerance {tol:.3e}: error estimate {err:.3e} after {segments} segments")]
    NonConvergent { tol: f64, err: f64, segments: usize },
}

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Computed once per order via the eigendecomposition of the Jacobi matrix
/// (nodes = eigenvalues, weights = 2 * first eigenvector component squared).
pub fn gauss_legendre(order: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&order) {
        return hit.clone();
    }
    assert!(order >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let first = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let entry: Arc<(Vec<f64>, Vec<f64>)> = Arc::new(pairs.into_iter().unzip());
    cache.lock().unwrap().insert(order, entry.clone());
    entry
}

/// Fixed-order Gauss-Legendre integral of `f` over [a, b].
pub fn gl_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(&x, &w)| w * f(c + h * x))
        .sum::<f64>()
        * h
}

// (G7, K15) node table; Kronrod nodes with embedded Gauss rule at odd indices.
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// One (G7, K15) panel: returns the K15 value and |K15 - G7| as error proxy.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let fsum = f(c - x) + f(c + x);
        kron += WGK[i] * fsum;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fsum;
        }
    }
    (kron * h, (kron - gauss).abs() * h.abs())
}

/// Globally adaptive integral of `f` over [a, b].
///
/// Splits the segment with the largest error estimate until the summed
/// estimate drops below `tol` (absolute). Fails after `max_segments`.
pub fn adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_segments: usize,
) -> Result<f64, QuadError> {
    struct Seg {
        a: f64,
        b: f64,
        val: f64,
        err: f64,
    }
    let (val, err) = gk15(&f, a, b);
    let mut segs = vec![Seg { a, b, val, err }];
    loop {
        let total_err: f64 = segs.iter().map(|s| s.err).sum();
        if total_err <= tol {
            return Ok(segs.iter().map(|s| s.val).sum());
        }
        if segs.len() >= max_segments {
            return Err(QuadError::NonConvergent {
                tol,
                err: total_err,
                segments: segs.len(),
            });
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
            .unwrap();
        let Seg { a, b, .. } = segs.swap_remove(worst);
        let mid = 0.5 * (a + b);
        for (lo, hi) in [(a, mid), (mid, b)] {
            let (val, err) = gk15(&f, lo, hi);
            segs.push(Seg { a: lo, b: hi, val, err });
        }
    }
}

/// Chebyshev-Gauss rule: integral of f(x)/sqrt(1-x^2) over [-1, 1].
///
/// Exact for polynomials of degree < 2*order.
pub fn chebyshev_gauss(f: impl Fn(f64) -> f64, order: usize) -> f64 {
    let w = std::f64::consts::PI / order as f64;
    (1..=order)
        .map(|k| f((w * (k as f64 - 0.5)).cos()))
        .sum::<f64>()
        * w
}

/// Complex-valued variant of [`chebyshev_gauss`].
pub fn chebyshev_gauss_complex(f: impl Fn(f64) -> C64, order: usize) -> C64 {
    let w = std::f64::consts::PI / order as f64;
    (1..=order)
        .map(|k| f((w * (k as f64 - 0.5)).cos()))
        .fold(C64::new(0.0, 0.0), |acc, t| acc + t)
        * w
}

/// Tensor quadrature on the unit disk: `sum_k w_k g(z_k) ~ integral_D g d^2z`.
///
/// Radial direction uses `radial` Gauss-Legendre points on [0, 1] (with the
/// area element r dr folded into the weights), angular direction a uniform
/// rule with `angular` points, which is spectrally accurate for the periodic
/// factor.
#[derive(Clone)]
pub struct DiskRule {
    pub points: Vec<(C64, f64)>,
}

impl DiskRule {
    pub fn new(radial: usize, angular: usize) -> Self {
        let gl = gauss_legendre(radial);
        let dtheta = 2.0 * std::f64::consts::PI / angular as f64;
        let mut points = Vec::with_capacity(radial * angular);
        for (&x, &w) in gl.0.iter().zip(&gl.1) {
            let r = 0.5 * (x + 1.0);
            let wr = 0.5 * w * r; // jacobian r dr
            for j in 0..angular {
                let theta = dtheta * j as f64;
                points.push((C64::from_polar(r, theta), wr * dtheta));
            }
        }
        Self { points }
    }

    pub fn integrate(&self, g: impl Fn(C64) -> C64) -> C64 {
        self.points
            .iter()
            .map(|&(z, w)| g(z) * w)
            .fold(C64::new(0.0, 0.0), |acc, t| acc + t)
    }
}

/// Shared default-resolution disk rule (256 radial x 512 angular).
pub fn disk() -> &'static DiskRule {
    static RULE: OnceLock<DiskRule> = OnceLock::new();
    RULE.get_or_init(|| DiskRule::new(256, 512))
}

/// Half-resolution disk rule used for refinement diagnostics.
pub fn disk_coarse() -> &'static DiskRule {
    static RULE: OnceLock<DiskRule> = OnceLock::new();
    RULE.get_or_init(|| DiskRule::new(128, 256))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        // order n integrates degree <= 2n-1 exactly
        for order in [2usize, 5, 16, 64] {
            let even = 2 * order as i32 - 2;
            let got = gl_integrate(|x| x.powi(even), -1.0, 1.0, order);
            assert_relative_eq!(got, 2.0 / (even + 1) as f64, epsilon = 1e-12);
            let odd = gl_integrate(|x| x.powi(even + 1), -1.0, 1.0, order);
            assert_relative_eq!(odd, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_known_values() {
        let rule = gauss_legendre(2);
        assert_relative_eq!(rule.0[1], 1.0 / 3.0f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(rule.1[0], 1.0, epsilon = 1e-14);
        let total: f64 = gauss_legendre(256).1.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        // narrow Lorentzian: integral over [-1,1] of 1/(x^2+a^2) = (2/a) atan(1/a)
        let a = 1e-3;
        // the integral is ~3.1e3, so ask for 1e-9 absolute and check 1e-12 relative
        let got = adaptive(|x| 1.0 / (x * x + a * a), -1.0, 1.0, 1e-9, 2000).unwrap();
        let expect = 2.0 / a * (1.0 / a).atan();
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn adaptive_reports_nonconvergence() {
        let res = adaptive(|x| (1.0 / x.abs().max(1e-300)).sqrt(), 0.0, 1.0, 1e-14, 8);
        assert!(res.is_err());
    }

    #[test]
    fn chebyshev_gauss_moments() {
        // integral x^k / sqrt(1-x^2) = pi * 2^-k * binom(k, k/2) for even k
        let binom = |n: u64, k: u64| -> f64 {
            (1..=k).map(|i| (n - k + i) as f64 / i as f64).product()
        };
        for k in [0u32, 2, 4, 6, 8] {
            let got = chebyshev_gauss(|x| x.powi(k as i32), 256);
            let expect = PI * 0.5f64.powi(k as i32) * binom(k as u64, (k / 2) as u64);
            assert_relative_eq!(got, expect, epsilon = 1e-12);
        }
        assert_relative_eq!(chebyshev_gauss(|x| x.powi(3), 256), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn disk_rule_moments() {
        let rule = DiskRule::new(64, 128);
        let area = rule.integrate(|_| C64::new(1.0, 0.0));
        assert_relative_eq!(area.re, PI, epsilon = 1e-12);
        // integral |z|^2 = pi/2, integral z^k = 0
        let m2 = rule.integrate(|z| C64::new(z.norm_sqr(), 0.0));
        assert_relative_eq!(m2.re, PI / 2.0, epsilon = 1e-12);
        let zk = rule.integrate(|z| z.powu(3));
        assert!(zk.norm() < 1e-14);
    }
}
