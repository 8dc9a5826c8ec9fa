//! Self-consistent density of states of the Hermitized family H^z.
//!
//! For an n x n i.i.d. matrix X (entry variance 1/n) and a shift z, the
//! symmetrized singular values of X - z have a deterministic limiting density
//! rho^z. Its Stieltjes transform m = m^z(w) is the unique solution of
//!
//! ```text
//! -1/m = w + m - |z|^2 / (w + m),      Im m * Im w > 0,
//! ```
//!
//! and u := m / (w + m) completes m to the 2x2 block matrix
//! M = [[m, -z u], [-conj(z) u, m]] that approximates the resolvent of H^z.
//! Clearing denominators turns the fixed-point equation into the cubic
//!
//! ```text
//! m^3 + 2 w m^2 + (w^2 + 1 - |z|^2) m + w = 0,
//! ```
//!
//! which is solved by a companion-matrix eigensolve plus Newton polish; the
//! physical branch is selected by the sign condition, with a damped-Newton
//! homotopy fallback when roots are too close to discriminate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

use crate::quad;
use crate::C64;

const PI: f64 = std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum MdeError {
    #[error("no root satisfies the branch condition Im m * Im w > 0 at z={z}, w={w}")]
    NoPhysicalRoot { z: C64, w: C64 },
    #[error("quantiles are ill-conditioned within 1e-3 of |z| = 1 (got |z| = {abs_z})")]
    NearUnitModulus { abs_z: f64 },
    #[error("quantile index {i} out of range 1..={n}")]
    QuantileIndex { i: usize, n: usize },
    #[error("spectral-mass quadrature failed: {0}")]
    Quadrature(#[from] quad::QuadError),
    #[error("density support is empty at z={z} (inner edge above outer edge)")]
    EmptySupport { z: C64 },
}

/// Solution of the self-consistent equation at one spectral parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MdeSolution {
    pub z: C64,
    pub w: C64,
    /// Stieltjes transform value; Im m has the sign of Im w.
    pub m: C64,
    /// Off-diagonal profile u = m / (w + m); satisfies |u| <= |m|^2 + |u|^2 |z|^2 < 1.
    pub u: C64,
    /// Im m / pi; converges to the spectral density as w approaches the real axis.
    pub rho: f64,
    /// Absolute residual of the fixed-point form |1/m + w + m - |z|^2/(w+m)|.
    pub residual: f64,
}

/// Spectral edges of rho^z in the squared variable.
///
/// The positive-side support of rho^z is [sqrt(max(e_minus, 0)), sqrt(e_plus)];
/// e_minus > 0 (a hard gap around zero) occurs exactly for |z| > 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EdgeData {
    pub z_abs: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    /// Outer spectral edge sqrt(e_plus).
    pub lambda_plus: f64,
    /// Inner spectral edge sqrt(e_minus) when |z| > 1.
    pub lambda_minus: Option<f64>,
    /// Set when z = 0 was handled as the analytic limit (e_plus -> 4).
    pub origin_limit: bool,
}

/// Deterministic eigenvalue locations: gamma_i holds mass i/(2n) of rho^z,
/// equivalently a fraction i/n of the positive-side (mass-1/2) spectrum lies
/// in (0, gamma_i].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quantiles {
    pub z: C64,
    pub n: usize,
    /// gamma[i-1] = gamma_i for i = 1..=count, strictly increasing.
    pub gamma: Vec<f64>,
    /// | integral of rho over the positive support - 1/2 |.
    pub mass_error: f64,
}

/// m, u and their first two derivatives along w = i eta.
#[derive(Debug, Clone, Copy)]
pub struct EtaDerivatives {
    pub sol: MdeSolution,
    pub dm: C64,
    pub d2m: C64,
    pub du: C64,
}

fn fixed_point_residual(z: C64, w: C64, m: C64) -> f64 {
    (1.0 / m + w + m - z.norm_sqr() / (w + m)).norm()
}

fn cubic_coeffs(z: C64, w: C64) -> (C64, C64, C64) {
    (2.0 * w, w * w + 1.0 - z.norm_sqr(), w)
}

fn eval_cubic(c2: C64, c1: C64, c0: C64, m: C64) -> C64 {
    ((m + c2) * m + c1) * m + c0
}

/// Newton iteration on the cubic; polynomial form keeps it well-conditioned
/// even where the fixed-point form blows up (m near zero).
fn polish_root(c2: C64, c1: C64, c0: C64, mut m: C64) -> C64 {
    for _ in 0..12 {
        let p = eval_cubic(c2, c1, c0, m);
        let dp = (3.0 * m + 2.0 * c2) * m + c1;
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        m -= step;
        if step.norm() <= 1e-17 * (1.0 + m.norm()) {
            break;
        }
    }
    m
}

/// All roots of m^3 + c2 m^2 + c1 m + c0 via the realified companion matrix.
///
/// The complex 3x3 companion embeds as a real 6x6 whose spectrum is the three
/// roots plus their conjugates; candidates are polished on the complex cubic
/// and deduplicated by residual.
fn cubic_roots(c2: C64, c1: C64, c0: C64) -> Vec<C64> {
    let comp = [
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0), -c0],
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0), -c1],
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0), -c2],
    ];
    let mut real6 = DMatrix::<f64>::zeros(6, 6);
    for r in 0..3 {
        for c in 0..3 {
            real6[(r, c)] = comp[r][c].re;
            real6[(r, c + 3)] = -comp[r][c].im;
            real6[(r + 3, c)] = comp[r][c].im;
            real6[(r + 3, c + 3)] = comp[r][c].re;
        }
    }
    let mut candidates: Vec<C64> = real6
        .complex_eigenvalues()
        .iter()
        .map(|ev| polish_root(c2, c1, c0, C64::new(ev.re, ev.im)))
        .collect();
    candidates.sort_by(|a, b| {
        eval_cubic(c2, c1, c0, *a)
            .norm()
            .total_cmp(&eval_cubic(c2, c1, c0, *b).norm())
    });
    let scale = 1.0 + c2.norm() + c1.norm() + c0.norm();
    let mut roots: Vec<C64> = Vec::with_capacity(3);
    for cand in candidates {
        if roots.len() == 3 {
            break;
        }
        if roots.iter().all(|r| (r - cand).norm() > 1e-8 * scale) {
            roots.push(cand);
        }
    }
    while roots.len() < 3 {
        // multiple root: repeat the best candidate
        let first = roots[0];
        roots.push(first);
    }
    roots
}

/// Homotopy fallback: walk w down from far in the upper/lower half plane,
/// tracking the branch by damped Newton on the cubic. Used when root
/// separation is below 1e-14 and plain selection is ambiguous.
fn homotopy_solve(z: C64, w: C64) -> C64 {
    let sign = if w.im >= 0.0 { 1.0 } else { -1.0 };
    let far = C64::new(w.re, sign * 100.0 * (1.0 + w.norm() + z.norm()));
    let mut m = -1.0 / far;
    let steps = 64;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        // geometric descent of the imaginary part keeps steps proportionate
        let im = far.im.abs().powf(1.0 - t) * w.im.abs().max(1e-300).powf(t) * sign;
        let wk = C64::new(w.re, im);
        let (c2, c1, c0) = cubic_coeffs(z, wk);
        for _ in 0..40 {
            let p = eval_cubic(c2, c1, c0, m);
            let dp = (3.0 * m + 2.0 * c2) * m + c1;
            let mut step = p / dp;
            // damped: never let one step flip the branch
            for _ in 0..30 {
                if (m - step).im * sign > 0.0 {
                    break;
                }
                step *= 0.5;
            }
            m -= step;
            if step.norm() <= 1e-16 * (1.0 + m.norm()) {
                break;
            }
        }
    }
    m
}

/// Solve the self-consistent equation at spectral parameter w (Im w != 0).
pub fn solve_m(z: C64, w: C64) -> Result<MdeSolution, MdeError> {
    let m = if w.re == 0.0 {
        // imaginary axis: m = i v with v the unique positive root of a real cubic
        let v = axis_v(z.norm_sqr(), w.im.abs());
        C64::new(0.0, v * w.im.signum())
    } else {
        let (c2, c1, c0) = cubic_coeffs(z, w);
        let roots = cubic_roots(c2, c1, c0);
        let sign = w.im.signum();
        let mut physical: Vec<C64> = roots.iter().copied().filter(|r| r.im * sign > 0.0).collect();
        physical.sort_by(|a, b| (b.im * sign).total_cmp(&(a.im * sign)));
        match physical.len() {
            0 => return Err(MdeError::NoPhysicalRoot { z, w }),
            1 => physical[0],
            _ => {
                if (physical[0].im - physical[1].im).abs() < 1e-14 {
                    homotopy_solve(z, w)
                } else {
                    physical[0]
                }
            }
        }
    };
    Ok(package_solution(z, w, m))
}

fn package_solution(z: C64, w: C64, m: C64) -> MdeSolution {
    let u = m / (w + m);
    MdeSolution {
        z,
        w,
        m,
        u,
        rho: m.im.abs() / PI,
        residual: fixed_point_residual(z, w, m),
    }
}

/// Positive root of v^3 + 2 eta v^2 - (1 - |z|^2 - eta^2) v - eta = 0.
///
/// On the imaginary axis m = i v; the cubic has exactly one positive root
/// (one sign change), bracketed and then polished by Newton.
fn axis_v(z_sqr: f64, eta: f64) -> f64 {
    debug_assert!(eta > 0.0);
    let p = |v: f64| ((v + 2.0 * eta) * v - (1.0 - z_sqr - eta * eta)) * v - eta;
    let dp = |v: f64| (3.0 * v + 4.0 * eta) * v - (1.0 - z_sqr - eta * eta);
    let mut hi = 1.0 + eta;
    while p(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0f64;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-18 * hi {
            break;
        }
    }
    let mut v = 0.5 * (lo + hi);
    for _ in 0..6 {
        let step = p(v) / dp(v);
        let next = v - step;
        if next > 0.0 {
            v = next;
        } else {
            v *= 0.5;
        }
        if step.abs() <= 1e-17 * v {
            break;
        }
    }
    v
}

/// Density at a real spectral point: the positive-imaginary root of the real
/// cubic if one exists (bulk), zero otherwise (outside the support).
pub fn rho_real_axis(z: C64, x: f64) -> f64 {
    let (c2, c1, c0) = cubic_coeffs(z, C64::new(x, 0.0));
    cubic_roots(c2, c1, c0)
        .into_iter()
        .map(|r| r.im / PI)
        .fold(0.0f64, f64::max)
        .max(0.0)
}

/// eta -> 0+ density via Richardson extrapolation from eta = 1e-7, 1e-8, 1e-9.
pub fn rho_at_zero(z: C64) -> f64 {
    let etas = [1e-7, 1e-8, 1e-9];
    let vs: Vec<f64> = etas.iter().map(|&eta| axis_v(z.norm_sqr(), eta)).collect();
    // Lagrange extrapolation to eta = 0 through the three samples
    let mut v0 = 0.0;
    for i in 0..3 {
        let mut term = vs[i];
        for j in 0..3 {
            if j != i {
                term *= etas[j] / (etas[j] - etas[i]);
            }
        }
        v0 += term;
    }
    (v0 / PI).max(0.0)
}

/// Closed-form bulk density at the origin: sqrt(1 - |z|^2)/pi inside the unit
/// disk, zero outside.
pub fn rho_at_zero_bulk(z: C64) -> f64 {
    let s = 1.0 - z.norm_sqr();
    if s > 0.0 {
        s.sqrt() / PI
    } else {
        0.0
    }
}

/// Spectral edges in the squared variable.
///
/// ```text
/// e_pm = (8(1-|z|^2)^2 +- (1+8|z|^2)^{3/2} - 36(1-|z|^2) + 27) / (8|z|^2)
/// ```
///
/// At z = 0 the expression is 0/0; the analytic limit e_plus -> 4 (edges at
/// +-2) is reported with `origin_limit` set. A short series is used for tiny
/// |z| where the closed form loses precision to cancellation.
pub fn edges(z: C64) -> EdgeData {
    let s = z.norm_sqr();
    let (e_plus, e_minus, origin_limit) = if s < 1e-4 {
        // e_plus = 4 + 4s - 4s^2 + O(s^3); e_minus diverges like -1/(4s)
        let e_plus = 4.0 + 4.0 * s - 4.0 * s * s;
        let e_minus = if s == 0.0 {
            f64::NEG_INFINITY
        } else {
            (8.0 * (1.0 - s) * (1.0 - s) - (1.0 + 8.0 * s).powf(1.5) - 36.0 * (1.0 - s) + 27.0)
                / (8.0 * s)
        };
        (e_plus, e_minus, s == 0.0)
    } else {
        let common = 8.0 * (1.0 - s) * (1.0 - s) - 36.0 * (1.0 - s) + 27.0;
        let swing = (1.0 + 8.0 * s).powf(1.5);
        ((common + swing) / (8.0 * s), (common - swing) / (8.0 * s), false)
    };
    EdgeData {
        z_abs: s.sqrt(),
        e_plus,
        e_minus,
        lambda_plus: e_plus.sqrt(),
        lambda_minus: if s > 1.0 && e_minus > 0.0 {
            Some(e_minus.sqrt())
        } else {
            None
        },
        origin_limit,
    }
}

/// Positive-side support [x_lo, x_hi] of rho^z.
fn support(z: C64) -> Result<(f64, f64), MdeError> {
    let e = edges(z);
    let x_hi = e.lambda_plus;
    let x_lo = e.lambda_minus.unwrap_or(0.0);
    if x_lo >= x_hi {
        return Err(MdeError::EmptySupport { z });
    }
    Ok((x_lo, x_hi))
}

/// Cumulative spectral mass F(x) = integral of rho^z over [x_lo, x] with the
/// sin^2 substitution absorbing the square-root edge behavior.
struct MassCurve {
    z: C64,
    x_lo: f64,
    x_hi: f64,
    /// cumulative mass at theta-grid boundaries
    theta: Vec<f64>,
    cum: Vec<f64>,
}

impl MassCurve {
    fn build(z: C64) -> Result<Self, MdeError> {
        let (x_lo, x_hi) = support(z)?;
        let span = x_hi - x_lo;
        let integrand = |theta: f64| {
            let sin = theta.sin();
            let x = x_lo + span * sin * sin;
            rho_real_axis(z, x) * span * 2.0 * sin * theta.cos()
        };
        let panels = 256;
        let mut theta = Vec::with_capacity(panels + 1);
        let mut cum = Vec::with_capacity(panels + 1);
        let h = (PI / 2.0) / panels as f64;
        theta.push(0.0);
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..panels {
            acc += quad::gl_integrate(integrand, k as f64 * h, (k + 1) as f64 * h, 16);
            theta.push((k + 1) as f64 * h);
            cum.push(acc);
        }
        Ok(Self { z, x_lo, x_hi, theta, cum })
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn x_of_theta(&self, theta: f64) -> f64 {
        let s = theta.sin();
        self.x_lo + (self.x_hi - self.x_lo) * s * s
    }

    /// Invert F(x) = target by bisection on the cached curve plus Newton.
    fn invert(&self, target: f64) -> f64 {
        let idx = self.cum.partition_point(|&c| c < target).min(self.cum.len() - 1);
        let (mut lo, mut hi) = (self.theta[idx.saturating_sub(1)], self.theta[idx]);
        let (mut flo, fhi) = (self.cum[idx.saturating_sub(1)], self.cum[idx]);
        let _ = fhi;
        // bisection in theta on the panel, integrating increments from the boundary
        let span = self.x_hi - self.x_lo;
        let integrand = |theta: f64| {
            let sin = theta.sin();
            let x = self.x_lo + span * sin * sin;
            rho_real_axis(self.z, x) * span * 2.0 * sin * theta.cos()
        };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let fmid = flo + quad::gl_integrate(integrand, lo, mid, 16);
            if fmid < target {
                lo = mid;
                flo = fmid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        let mut x = self.x_of_theta(0.5 * (lo + hi));
        // Newton polish directly in x with the density as derivative
        for _ in 0..4 {
            let fx = flo
                + quad::gl_integrate(
                    |t| {
                        let s = t.sin();
                        rho_real_axis(self.z, self.x_lo + span * s * s) * span * 2.0 * s * t.cos()
                    },
                    lo,
                    ((x - self.x_lo) / span).max(0.0).min(1.0).sqrt().asin(),
                    16,
                );
            let d = rho_real_axis(self.z, x);
            if d <= 0.0 {
                break;
            }
            let step = (fx - target) / d;
            let next = x - step;
            if next <= self.x_lo || next >= self.x_hi {
                break;
            }
            x = next;
            if step.abs() < 1e-14 * (1.0 + x) {
                break;
            }
        }
        x
    }
}

/// Deterministic quantiles gamma_1 < ... < gamma_count of rho^z for an n x n
/// matrix: gamma_i carries spectral mass i/(2n).
///
/// Refuses | |z| - 1 | < 1e-3 where the inner edge degenerates and the
/// quantile map is ill-conditioned.
pub fn quantiles(z: C64, n: usize, count: usize) -> Result<Quantiles, MdeError> {
    if (z.norm() - 1.0).abs() < 1e-3 {
        return Err(MdeError::NearUnitModulus { abs_z: z.norm() });
    }
    if count == 0 || count > n {
        return Err(MdeError::QuantileIndex { i: count, n });
    }
    let curve = MassCurve::build(z)?;
    let mass_error = (curve.total() - 0.5).abs();
    let gamma: Vec<f64> = (1..=count)
        .map(|i| curve.invert(i as f64 / (2 * n) as f64))
        .collect();
    Ok(Quantiles { z, n, gamma, mass_error })
}

/// Quantiles for entry variance sigma2 instead of 1: exact rescaling
/// gamma_i(sigma) = sigma * gamma_i(z / sigma).
pub fn quantiles_with_variance(
    z: C64,
    sigma2: f64,
    n: usize,
    count: usize,
) -> Result<Quantiles, MdeError> {
    let sigma = sigma2.sqrt();
    let base = quantiles(z / sigma, n, count)?;
    Ok(Quantiles {
        z,
        n,
        gamma: base.gamma.iter().map(|g| g * sigma).collect(),
        mass_error: base.mass_error,
    })
}

/// Density of the Brownian-evolved ensemble at real spectral point x.
///
/// A matrix with entry variance v0/n evolved by dX = dB/sqrt(n) for time t
/// has entry variance (v0 + t)/n, and its density is the exact rescaling
/// rho_t(x) = rho^{z/sigma}(x/sigma)/sigma with sigma = sqrt(v0 + t).
pub fn flow_density(z: C64, t: f64, x: f64, v0: f64) -> f64 {
    let sigma = (v0 + t).sqrt();
    rho_real_axis(z / sigma, x / sigma) / sigma
}

/// m, u and eta-derivatives at w = i eta by implicit differentiation of the
/// cubic p(m, w) = 0: dm/dw = -p_w/p_m, and along w = i eta, d/d eta = i d/dw.
pub fn m_eta_derivatives(z: C64, eta: f64) -> Result<EtaDerivatives, MdeError> {
    let w = C64::new(0.0, eta);
    let sol = solve_m(z, w)?;
    let m = sol.m;
    let i = C64::new(0.0, 1.0);
    let p_m = (3.0 * m + 4.0 * w) * m + w * w + 1.0 - z.norm_sqr();
    let p_w = (2.0 * m + 2.0 * w) * m + 1.0;
    let dm_dw = -p_w / p_m;
    let p_ww = 2.0 * m;
    let p_wm = 4.0 * m + 2.0 * w;
    let p_mm = 6.0 * m + 4.0 * w;
    let d2m_dw2 = -(p_ww + 2.0 * p_wm * dm_dw + p_mm * dm_dw * dm_dw) / p_m;
    let dm = i * dm_dw;
    let d2m = -d2m_dw2;
    let s = w + m;
    let du = (dm * w - i * m) / (s * s);
    Ok(EtaDerivatives { sol, dm, d2m, du })
}

/// Density profile samples (x, rho^z(x)) on [-lambda_plus, lambda_plus].
pub fn density_profile(z: C64, points: usize) -> Vec<(f64, f64)> {
    let lp = edges(z).lambda_plus;
    (0..points)
        .map(|k| {
            let x = -lp + 2.0 * lp * k as f64 / (points - 1) as f64;
            (x, rho_real_axis(z, x.abs()))
        })
        .collect()
}

/// CSV export of a density profile: header `x,rho`, one row per sample.
pub fn write_density_csv<W: Write>(out: &mut W, z: C64, points: usize) -> std::io::Result<()> {
    writeln!(out, "x,rho")?;
    for (x, rho) in density_profile(z, points) {
        writeln!(out, "{x:.12e},{rho:.12e}")?;
    }
    Ok(())
}
