//! Closed-form predictors for linear eigenvalue statistics.
//!
//! For a test function f, the centered linear statistic of a real i.i.d.
//! matrix converges to a complex Gaussian whose moments are explicit
//! functionals of f on the unit disk and its boundary. This module evaluates
//! those functionals:
//!
//! * the expectation E(f): a bulk term proportional to n, a real-axis
//!   correction integral, a fourth-cumulant term, a boundary average, an
//!   arcsine-weighted real-line integral, and an endpoint term;
//! * the covariance C(g, f): a Dirichlet inner product of the symmetrized
//!   functions on the disk, a half-order Sobolev inner product of their
//!   boundary traces, and a fourth-cumulant rank-one term;
//! * the spectral-shift identity (log-determinant form) that reconstructs a
//!   linear statistic from the singular-value spectra of X - z over a z-grid,
//!   with the eta-regime split used for diagnostics;
//! * the finite-n density of genuinely complex eigenvalues of the real
//!   Gaussian ensemble.

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::ensemble::MatrixData;
use crate::quad::{self, QuadError};
use crate::spectral::{self, SpectralError};
use crate::testfn::{BoundaryFourier, TestFunction, BOUNDARY_SAMPLES, FOURIER_K_MAX};
use crate::C64;

use std::f64::consts::PI;

/// Half-width of the clamp strip around the real axis inside which the
/// real-axis correction integrand is replaced by its symmetric second
/// difference at the clamp scale (a Taylor-accurate surrogate for the
/// y -> 0 limit -f_yy(x, 0)/2).
const AXIS_CLAMP: f64 = 1e-3;

/// Relative refinement tolerance for the disk gradient quadrature.
const GRAD_REFINE_TOL: f64 = 1e-6;

/// Tail-to-head ratio above which a truncated boundary series is flagged.
const TAIL_WARN_RATIO: f64 = 1e-4;

/// Errors from predictor evaluation.
#[derive(Debug, thiserror::Error)]
pub enum CltError {
    /// A one-dimensional adaptive quadrature failed to converge.
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    /// The two-level disk quadrature disagreed beyond tolerance.
    #[error("disk quadrature not converged: coarse {coarse}, fine {fine}")]
    QuadratureNotConverged { coarse: C64, fine: C64 },
    /// The z-grid is too coarse for the requested identity tolerance.
    #[error("z-grid too coarse: constant-term sensitivity {sensitivity:.3e} exceeds tolerance {tol:.3e}")]
    GridTooCoarse { sensitivity: f64, tol: f64 },
    /// Dimension too small for a finite-n density formula.
    #[error("dimension {n} too small, need n >= 2")]
    DimensionTooSmall { n: usize },
    /// Propagated spectral failure while assembling grid spectra.
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

// ---------------------------------------------------------------------------
// Inner products
// ---------------------------------------------------------------------------

/// A truncated boundary inner product with its decay diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedInner {
    /// The truncated sum.
    pub value: C64,
    /// Mass fraction carried by the outermost octave of retained modes.
    pub tail_ratio: f64,
    /// True when the coefficients fail the decay criterion; the value is
    /// returned regardless.
    pub tail_warning: bool,
}

/// Half-order Sobolev inner product of boundary traces:
/// sum over k of |k| conj(hat g(k)) hat f(k), truncated at |k| <= 512.
///
/// The tail diagnostic compares the absolute mass in the outermost octave
/// (|k| > 256) against the total; smooth integrands decay fast enough that a
/// ratio above 1e-4 indicates an unreliable truncation.
pub fn h_half_inner(g: &TestFunction, f: &TestFunction) -> TruncatedInner {
    let bg = BoundaryFourier::standard(g);
    let bf = BoundaryFourier::standard(f);
    let k_max = FOURIER_K_MAX as i64;
    let mut value = C64::new(0.0, 0.0);
    let mut head = 0.0f64;
    let mut tail = 0.0f64;
    for k in -k_max..=k_max {
        let weight = k.unsigned_abs() as f64;
        let term = bg.coeff(k).conj() * bf.coeff(k) * weight;
        value += term;
        let mag = weight * bg.coeff(k).norm() * bf.coeff(k).norm();
        head += mag;
        if k.unsigned_abs() > (FOURIER_K_MAX / 2) as u64 {
            tail += mag;
        }
    }
    let tail_ratio = if head > 0.0 { tail / head } else { 0.0 };
    TruncatedInner {
        value,
        tail_ratio,
        tail_warning: tail_ratio > TAIL_WARN_RATIO,
    }
}

/// Dirichlet inner product on the unit disk:
/// integral of conj(dg/dx) df/dx + conj(dg/dy) df/dy.
///
/// Evaluated on the standard polar tensor rule and re-checked on the coarse
/// rule; a relative discrepancy above 1e-6 is surfaced as non-convergence.
pub fn grad_inner(g: &TestFunction, f: &TestFunction) -> Result<C64, CltError> {
    let integrand = |z: C64| -> C64 {
        let (gx, gy) = g.grad(z);
        let (fx, fy) = f.grad(z);
        gx.conj() * fx + gy.conj() * fy
    };
    let fine = quad::disk().integrate(&integrand);
    let coarse = quad::disk_coarse().integrate(&integrand);
    let scale = fine.norm().max(1.0);
    if (fine - coarse).norm() > GRAD_REFINE_TOL * scale {
        return Err(CltError::QuadratureNotConverged { coarse, fine });
    }
    Ok(fine)
}

/// Area average over the unit disk, (1/pi) integral of f.
pub fn disk_average(f: &TestFunction) -> C64 {
    quad::disk().integrate(|z| f.eval(z)) / PI
}

/// Average of the boundary trace over the unit circle.
pub fn boundary_average(f: &TestFunction) -> C64 {
    let n = BOUNDARY_SAMPLES;
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        let theta = 2.0 * PI * j as f64 / n as f64;
        acc += f.eval(C64::new(theta.cos(), theta.sin()));
    }
    acc / n as f64
}

// ---------------------------------------------------------------------------
// Expectation
// ---------------------------------------------------------------------------

/// The six additive pieces of the expectation predictor.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ExpectationBreakdown {
    /// (1/pi) integral of f over the disk (the bulk term carries a factor n).
    pub bulk_per_n: C64,
    /// n times `bulk_per_n`.
    pub bulk: C64,
    /// (1/4pi) integral over the disk of (f(Re z) - f(z)) / (Im z)^2.
    pub axis: C64,
    /// -(kappa4/pi) integral of f(z) (2|z|^2 - 1) over the disk.
    pub kurtosis: C64,
    /// -(2pi)^{-1} integral of the boundary trace.
    pub boundary: C64,
    /// (2pi)^{-1} integral over [-1,1] of f(x)/sqrt(1-x^2).
    pub arcsine: C64,
    /// (f(1) + f(-1))/4.
    pub endpoint: C64,
}

/// Expectation predictor output.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ExpectationResult {
    /// Total E(f), the sum of the six terms.
    pub value: C64,
    /// Per-term breakdown.
    pub terms: ExpectationBreakdown,
    /// Fourth cumulant used for the kurtosis term.
    pub kappa4: f64,
    /// Matrix dimension entering the bulk term.
    pub n: usize,
}

/// Symmetric second-difference quotient (2f(x) - f(x+iy) - f(x-iy)) / (2y^2),
/// which equals the even-in-y part of (f(Re z) - f(z)) / (Im z)^2 and removes
/// its odd singular part analytically.
fn axis_quotient(f: &TestFunction, x: f64, y: f64) -> C64 {
    let fx = f.eval(C64::new(x, 0.0));
    let fp = f.eval(C64::new(x, y));
    let fm = f.eval(C64::new(x, -y));
    (2.0 * fx - fp - fm) / (2.0 * y * y)
}

/// Evaluates the expectation of the (uncentered) linear statistic.
///
/// The real-axis correction integrand is bounded for twice-differentiable f
/// but is a principal value pointwise; it is integrated through its even
/// part, with the strip |Im z| < 1e-3 replaced by the clamp value (accurate
/// to second order in the clamp width).
pub fn expectation_e(f: &TestFunction, kappa4: f64, n: usize) -> ExpectationResult {
    let disk = quad::disk();
    let bulk_per_n = disk_average(f);
    let axis = disk.integrate(|z| axis_quotient(f, z.re, z.im.abs().max(AXIS_CLAMP)))
        / (4.0 * PI);
    let kurtosis = disk.integrate(|z| f.eval(z) * (2.0 * z.norm_sqr() - 1.0)) * (-kappa4 / PI);
    let boundary = -boundary_average(f) / 2.0;
    let arcsine = quad::chebyshev_gauss_complex(|x| f.eval(C64::new(x, 0.0)), 256) / (2.0 * PI);
    let endpoint = (f.eval(C64::new(1.0, 0.0)) + f.eval(C64::new(-1.0, 0.0))) / 4.0;
    let bulk = bulk_per_n * n as f64;
    let value = bulk + axis + kurtosis + boundary + arcsine + endpoint;
    ExpectationResult {
        value,
        terms: ExpectationBreakdown {
            bulk_per_n,
            bulk,
            axis,
            kurtosis,
            boundary,
            arcsine,
            endpoint,
        },
        kappa4,
        n,
    }
}

// ---------------------------------------------------------------------------
// Covariance and variance
// ---------------------------------------------------------------------------

/// Covariance predictor output.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceResult {
    /// Total C(g, f).
    pub value: C64,
    /// (2pi)^{-1} Dirichlet inner product of the symmetrized functions.
    pub grad_part: C64,
    /// Half-order Sobolev inner product of the symmetrized boundary traces.
    pub h_half_part: C64,
    /// kappa4 times (conjugated g average gap) times (f average gap).
    pub kurtosis_part: C64,
    /// Boundary-series decay warning from either factor.
    pub tail_warning: bool,
    /// True if any gradient fell back to finite differences.
    pub fd_gradients: bool,
}

/// Evaluates the limiting covariance C(g, f).
///
/// The first two terms act on the real-axis symmetrizations of g and f; the
/// fourth-cumulant term conjugates g inside its disk-minus-boundary average
/// gap and leaves f unconjugated.
pub fn covariance_c(
    g: &TestFunction,
    f: &TestFunction,
    kappa4: f64,
) -> Result<CovarianceResult, CltError> {
    let pg = g.psym();
    let pf = f.psym();
    let grad_part = grad_inner(&pg, &pf)? / (2.0 * PI);
    let hh = h_half_inner(&pg, &pf);
    let gap_g = (disk_average(g) - boundary_average(g)).conj();
    let gap_f = disk_average(f) - boundary_average(f);
    let kurtosis_part = gap_g * gap_f * kappa4;
    Ok(CovarianceResult {
        value: grad_part + hh.value + kurtosis_part,
        grad_part,
        h_half_part: hh.value,
        kurtosis_part,
        tail_warning: hh.tail_warning,
        fd_gradients: pg.uses_fd_grad() || pf.uses_fd_grad(),
    })
}

/// Limiting variance V_f = C(f, f), reported as a real number.
pub fn variance_v(f: &TestFunction, kappa4: f64) -> Result<f64, CltError> {
    let c = covariance_c(f, f, kappa4)?;
    debug_assert!(c.value.im.abs() < 1e-8, "variance should be real");
    Ok(c.value.re)
}

/// The two building blocks of the complex-ensemble variance for the same f:
/// the quadratic part (1/4pi)||grad f||^2 + (1/2)||f||^2 over the boundary,
/// and the squared average gap multiplying the fourth cumulant.
pub fn complex_variance_parts(f: &TestFunction) -> Result<(f64, f64), CltError> {
    let quad_part = grad_inner(f, f)?.re / (4.0 * PI) + 0.5 * h_half_inner(f, f).value.re;
    let gap = disk_average(f) - boundary_average(f);
    Ok((quad_part, gap.norm_sqr()))
}

/// Combined predictor output for a single test function.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PredictedMoments {
    /// Name of the test function.
    pub name: String,
    /// Matrix dimension.
    pub n: usize,
    /// Fourth cumulant of the entry law.
    pub kappa4: f64,
    /// Expectation E(f) of the uncentered statistic.
    pub e_f: C64,
    /// Per-term expectation breakdown.
    pub expectation_terms: ExpectationBreakdown,
    /// Limiting variance V_f = C(f, f) (real).
    pub v_f: f64,
    /// Full complex covariance C(f, f).
    pub c_ff: C64,
    /// Dirichlet, boundary and cumulant parts of C(f, f).
    pub covariance_parts: [C64; 3],
    /// True when gradients fell back to finite differences.
    pub fd_gradients: bool,
    /// True when the boundary series truncation was flagged.
    pub tail_warning: bool,
}

/// Predicts expectation and variance of the linear statistic for f.
pub fn predict(f: &TestFunction, kappa4: f64, n: usize) -> Result<PredictedMoments, CltError> {
    let e = expectation_e(f, kappa4, n);
    let c = covariance_c(f, f, kappa4)?;
    Ok(PredictedMoments {
        name: f.name().to_string(),
        n,
        kappa4,
        e_f: e.value,
        expectation_terms: e.terms,
        v_f: c.value.re,
        c_ff: c.value,
        covariance_parts: [c.grad_part, c.h_half_part, c.kurtosis_part],
        fd_gradients: c.fd_gradients,
        tail_warning: c.tail_warning,
    })
}

// ---------------------------------------------------------------------------
// Spectral-shift (log-determinant) evaluation of linear statistics
// ---------------------------------------------------------------------------

/// Square midpoint grid in the complex plane.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ZGrid {
    /// Center of the square.
    pub center: C64,
    /// Half side length.
    pub half_width: f64,
    /// Number of cells per side.
    pub per_side: usize,
}

impl ZGrid {
    /// Cell midpoints with the common cell area.
    pub fn cells(&self) -> (Vec<C64>, f64) {
        let m = self.per_side;
        let h = 2.0 * self.half_width / m as f64;
        let mut zs = Vec::with_capacity(m * m);
        for j in 0..m {
            for k in 0..m {
                zs.push(
                    self.center
                        + C64::new(
                            -self.half_width + (j as f64 + 0.5) * h,
                            -self.half_width + (k as f64 + 0.5) * h,
                        ),
                );
            }
        }
        (zs, h * h)
    }

    /// Grid sized to cover the support of a test function with a margin.
    pub fn covering(f: &TestFunction, per_side: usize) -> ZGrid {
        let radius = if f.support_radius.is_finite() {
            f.support_radius
        } else {
            1.5
        };
        ZGrid {
            center: C64::new(0.0, 0.0),
            half_width: radius + 0.1,
            per_side,
        }
    }
}

/// The eta-regime boundaries of the spectral-shift split.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GirkoSplit {
    /// Lower microscopic cut, n^{-1-delta0}.
    pub eta0: f64,
    /// Mesoscopic-to-macroscopic cut, n^{-1+delta1}.
    pub eta_c: f64,
    /// Natural log of the large truncation T = n^{100} (kept in log form to
    /// avoid overflow).
    pub log_t: f64,
}

impl GirkoSplit {
    /// Standard exponents delta0 = delta1 = 0.1 and T = n^{100}.
    pub fn standard(n: usize) -> GirkoSplit {
        let nf = n as f64;
        GirkoSplit {
            eta0: nf.powf(-1.1),
            eta_c: nf.powf(-0.9),
            log_t: 100.0 * nf.ln(),
        }
    }
}

/// Singular-value spectrum of X - z at one grid cell.
#[derive(Debug, Clone)]
pub struct GirkoCell {
    /// Cell midpoint.
    pub z: C64,
    /// Positive singular values of X - z, ascending.
    pub lambdas: Vec<f64>,
}

/// Computes the per-cell spectra of X - z over a grid.
pub fn girko_cells(x: &MatrixData, grid: &ZGrid) -> Result<(Vec<GirkoCell>, f64), CltError> {
    let (zs, area) = grid.cells();
    let mut cells = Vec::with_capacity(zs.len());
    for z in zs {
        cells.push(GirkoCell {
            z,
            lambdas: spectral::singular_values(x, z)?,
        });
    }
    Ok((cells, area))
}

/// Spectral-shift estimate of a linear statistic with regime diagnostics.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GirkoEstimate {
    /// Estimated linear statistic, (1/2pi) sum of laplacian f times the
    /// log-determinant of the shifted matrix over the grid.
    pub value: C64,
    /// Large-T log-determinant term of the split (contains the additive
    /// 2n log T constant weighted by the discretized laplacian mass).
    pub j_term: C64,
    /// Contributions of the three eta-windows (0, eta0), (eta0, eta_c),
    /// (eta_c, T); together with `j_term` they recombine exactly to `value`.
    pub i_segments: [C64; 3],
    /// Discretized integral of the laplacian (exactly zero in the continuum).
    pub delta_f_sum: C64,
    /// Estimated discretization error of `value`: the constant mode of the
    /// log-determinant leaking through the nonzero `delta_f_sum`.
    pub sensitivity: f64,
    /// Leakage of the 2n log T constant through `delta_f_sum`: the dominant
    /// discretization artifact of the regime split (cancels exactly in the
    /// recombination, so it is reported but not gated).
    pub split_sensitivity: f64,
    /// True if the laplacian fell back to a finite-difference stencil.
    pub fd_laplacian: bool,
}

/// Assembles the linear-statistic estimate from per-cell spectra.
///
/// The discretization error is estimated through the constant mode of the
/// log-determinant: the continuum integral of the laplacian vanishes, so a
/// nonzero discretized laplacian mass leaks the mean log-determinant level
/// into the estimate. `tol` bounds that leakage relative to the estimate
/// magnitude; a grid too coarse to integrate the laplacian to zero fails.
pub fn girko_evaluate(
    cells: &[GirkoCell],
    area: f64,
    f: &TestFunction,
    split: &GirkoSplit,
    n: usize,
    tol: f64,
) -> Result<GirkoEstimate, CltError> {
    let mut value = C64::new(0.0, 0.0);
    let mut j_term = C64::new(0.0, 0.0);
    let mut segments = [C64::new(0.0, 0.0); 3];
    let mut delta_f_sum = C64::new(0.0, 0.0);
    let mut abs_w_sum = 0.0f64;
    let mut abs_w_log_det = 0.0f64;
    // Per-eigenvalue eta-antiderivative: the integral over (a, b) of the
    // imaginary trace of the resolvent contributes log(l^2+b^2)-log(l^2+a^2)
    // for each positive singular value l.
    let seg_sum = |ls: &[f64], a: f64, b: f64| -> f64 {
        ls.iter()
            .map(|&l| ((l * l + b * b) / (l * l + a * a)).ln())
            .sum()
    };
    for cell in cells {
        let w = f.laplacian(cell.z) * area;
        delta_f_sum += w;
        if w.norm() == 0.0 {
            continue;
        }
        let log_det: f64 = cell
            .lambdas
            .iter()
            .map(|&l| l.max(1e-300).ln())
            .sum();
        value += w * log_det / (2.0 * PI);
        abs_w_sum += w.norm();
        abs_w_log_det += w.norm() * log_det.abs();
        // log(l^2 + T^2) = 2 log T + log1p((l/T)^2), evaluated in log form.
        let log_t2_terms: f64 = cell
            .lambdas
            .iter()
            .map(|&l| (2.0 * (l.max(1e-300).ln() - split.log_t)).exp().ln_1p())
            .sum();
        j_term += w * (2.0 * cell.lambdas.len() as f64 * split.log_t + log_t2_terms)
            / (4.0 * PI);
        let i0 = seg_sum(&cell.lambdas, 0.0, split.eta0);
        let i1 = seg_sum(&cell.lambdas, split.eta0, split.eta_c);
        // Top window in log form: log(l^2+T^2) - log(l^2+eta_c^2).
        let i2: f64 = cell
            .lambdas
            .iter()
            .map(|&l| {
                let ll = l.max(1e-300);
                2.0 * split.log_t + (2.0 * (ll.ln() - split.log_t)).exp().ln_1p()
                    - (ll * ll + split.eta_c * split.eta_c).ln()
            })
            .sum();
        segments[0] -= w * i0 / (4.0 * PI);
        segments[1] -= w * i1 / (4.0 * PI);
        segments[2] -= w * i2 / (4.0 * PI);
    }
    let mean_log_det = if abs_w_sum > 0.0 {
        abs_w_log_det / abs_w_sum
    } else {
        0.0
    };
    let sensitivity = delta_f_sum.norm() * mean_log_det.max(1.0) / (2.0 * PI);
    let split_sensitivity = delta_f_sum.norm() * 2.0 * n as f64 * split.log_t / (4.0 * PI);
    if sensitivity > tol * value.norm().max(1.0) {
        return Err(CltError::GridTooCoarse { sensitivity, tol });
    }
    Ok(GirkoEstimate {
        value,
        j_term,
        i_segments: segments,
        delta_f_sum,
        sensitivity,
        split_sensitivity,
        fd_laplacian: f.uses_fd_laplacian(),
    })
}

// ---------------------------------------------------------------------------
// Finite-n density of complex eigenvalues (real Gaussian ensemble)
// ---------------------------------------------------------------------------

/// Scaled complementary error function exp(x^2) erfc(x) for x >= 0, stable
/// for all argument sizes (asymptotic series beyond the overflow-safe range).
pub fn erfcx(x: f64) -> f64 {
    assert!(x >= 0.0, "erfcx implemented for nonnegative arguments");
    if x < 6.0 {
        (x * x).exp() * erfc(x)
    } else {
        // erfcx(x) ~ (x sqrt(pi))^{-1} sum_k (-1)^k (2k-1)!! / (2x^2)^k.
        let inv = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut acc = 1.0;
        for k in 1..=24u32 {
            term *= -((2 * k - 1) as f64) * inv;
            acc += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        acc / (x * PI.sqrt())
    }
}

/// Finite-n density of genuinely complex eigenvalues of the real Gaussian
/// ensemble at z = x + iy:
///
/// ```text
///     rho_n(z) = sqrt(2n/pi) |y| e^{2n y^2} erfc(sqrt(2n) |y|)
///                * Q(n-1, n (x^2 + y^2))
/// ```
///
/// where Q is the regularized upper incomplete gamma function (a ratio, so no
/// raw Gamma(n-1) is ever formed). The exponentially growing prefactor is
/// evaluated through the scaled complementary error function, which switches
/// to its asymptotic series in the regime where e^{2n y^2} would overflow.
pub fn edelman_density(z: C64, n: usize) -> Result<f64, CltError> {
    if n < 2 {
        return Err(CltError::DimensionTooSmall { n });
    }
    let y = z.im.abs();
    if y == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let pref = (2.0 * nf / PI).sqrt() * y * erfcx((2.0 * nf).sqrt() * y);
    let gamma_ratio = gamma_ur(nf - 1.0, nf * z.norm_sqr());
    Ok(pref * gamma_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_iid, EnsembleSpec, EntryLaw, Symmetry};

    fn binom(n: u64, k: u64) -> f64 {
        let mut acc = 1.0;
        for i in 0..k {
            acc = acc * (n - i) as f64 / (i + 1) as f64;
        }
        acc
    }

    #[test]
    fn h_half_inner_golden_values() {
        // Boundary trace cos(theta): modes +-1 with weight 1/2 each.
        let f = TestFunction::sym_monomial(1);
        let v = h_half_inner(&f, &f);
        assert!((v.value - C64::new(0.5, 0.0)).norm() < 1e-10);
        assert!(!v.tail_warning);
        // cos(2 theta): modes +-2, sum 2 * 2 * 1/4 = 1.
        let f2 = TestFunction::sym_monomial(2);
        let v2 = h_half_inner(&f2, &f2);
        assert!((v2.value - C64::new(1.0, 0.0)).norm() < 1e-10);
        // Constants see only the k = 0 mode, which carries no weight.
        let c = TestFunction::monomial(0);
        assert!(h_half_inner(&c, &c).value.norm() < 1e-12);
    }

    #[test]
    fn grad_inner_golden_values() {
        let f = TestFunction::sym_monomial(1);
        assert!((grad_inner(&f, &f).unwrap() - C64::new(PI, 0.0)).norm() < 1e-9);
        let f2 = TestFunction::sym_monomial(2);
        assert!((grad_inner(&f2, &f2).unwrap() - C64::new(2.0 * PI, 0.0)).norm() < 1e-9);
        let c = TestFunction::monomial(0);
        assert!(grad_inner(&c, &c).unwrap().norm() < 1e-12);
    }

    #[test]
    fn expectation_square_monomial_breakdown() {
        let e = expectation_e(&TestFunction::monomial(2), 0.7, 50);
        let t = &e.terms;
        assert!(t.bulk.norm() < 1e-8, "bulk {:?}", t.bulk);
        assert!((t.axis - C64::new(0.25, 0.0)).norm() < 1e-4, "axis {:?}", t.axis);
        assert!(t.kurtosis.norm() < 1e-8);
        assert!(t.boundary.norm() < 1e-10);
        assert!((t.arcsine - C64::new(0.25, 0.0)).norm() < 1e-10);
        assert!((t.endpoint - C64::new(0.5, 0.0)).norm() < 1e-12);
        assert!((e.value - C64::new(1.0, 0.0)).norm() < 1.5e-4);
    }

    #[test]
    fn expectation_odd_monomials_vanish() {
        for k in [1u32, 3, 5] {
            let e = expectation_e(&TestFunction::monomial(k), -1.3, 200);
            assert!(e.value.norm() < 1e-6, "k = {k}: {:?}", e.value);
        }
    }

    #[test]
    fn expectation_quartic_monomial_breakdown() {
        let e = expectation_e(&TestFunction::monomial(4), 0.0, 10);
        let t = &e.terms;
        // Real-axis correction 1/2 - 2^{-4} C(3,2) = 5/16; arcsine 3/16.
        assert!((t.axis - C64::new(5.0 / 16.0, 0.0)).norm() < 1e-4);
        assert!((t.arcsine - C64::new(3.0 / 16.0, 0.0)).norm() < 1e-10);
        assert!((t.endpoint - C64::new(0.5, 0.0)).norm() < 1e-12);
        assert!((e.value - C64::new(1.0, 0.0)).norm() < 1.5e-4);
    }

    #[test]
    fn polynomial_axis_and_arcsine_identities() {
        // For even k: the real-axis integral is 1/2 - 2^{-k} C(k-1, k/2) and
        // the arcsine integral is 2^{-k} C(k-1, k/2).
        for k in [2u32, 4, 6, 8] {
            let e = expectation_e(&TestFunction::monomial(k), 0.0, 1);
            let coef = 2f64.powi(-(k as i32)) * binom((k - 1) as u64, (k / 2) as u64);
            assert!(
                (e.terms.axis - C64::new(0.5 - coef, 0.0)).norm() < 1e-4,
                "axis k={k}: {:?} vs {}",
                e.terms.axis,
                0.5 - coef
            );
            assert!(
                (e.terms.arcsine - C64::new(coef, 0.0)).norm() < 1e-8,
                "arcsine k={k}"
            );
        }
    }

    #[test]
    fn expectation_is_symmetrization_invariant() {
        let f = TestFunction::parse("gauss(0.3+0.4i,0.35)").unwrap();
        let e1 = expectation_e(&f, -2.0, 75);
        let e2 = expectation_e(&f.psym(), -2.0, 75);
        assert!((e1.value - e2.value).norm() < 1e-8);
        let g = TestFunction::monomial(3);
        let d = (expectation_e(&g, 1.0, 75).value - expectation_e(&g.psym(), 1.0, 75).value).norm();
        assert!(d < 1e-8);
    }

    #[test]
    fn variance_golden_values() {
        // V(z) = 1/2 + 1/2 = 1, matching the exact variance of the trace.
        assert!((variance_v(&TestFunction::monomial(1), 0.9).unwrap() - 1.0).abs() < 1e-8);
        // Analytic monomials: V(z^k) = k, fourth cumulant invisible.
        for k in [1u32, 2, 3, 4] {
            for kap in [0.0, -2.0] {
                let v = variance_v(&TestFunction::monomial(k), kap).unwrap();
                assert!((v - k as f64).abs() < 1e-6, "k={k} kappa={kap}: {v}");
            }
        }
        assert!(variance_v(&TestFunction::monomial(0), 1.0).unwrap().abs() < 1e-10);
    }

    #[test]
    fn analytic_variance_identity() {
        // For analytic f, (1/pi) integral over the disk of |df/dz|^2 equals
        // the full covariance. With f = z^k the integral is k.
        for k in [1u32, 2, 5] {
            let f = TestFunction::monomial(k);
            let dz_norm = quad::disk()
                .integrate(|z| {
                    let (fx, fy) = f.grad(z);
                    // d/dz = (d/dx - i d/dy)/2.
                    let dz = (fx - fy * C64::new(0.0, 1.0)) / 2.0;
                    C64::new(dz.norm_sqr(), 0.0)
                })
                .re
                / PI;
            let v = variance_v(&f, 0.4).unwrap();
            assert!((dz_norm - v).abs() < 1e-6, "k={k}: {dz_norm} vs {v}");
        }
    }

    #[test]
    fn covariance_hermitian_and_kurtosis_convention() {
        let g = TestFunction::parse("gauss(0.2+0.3i,0.4)").unwrap();
        let f = TestFunction::monomial(2);
        let cgf = covariance_c(&g, &f, -1.5).unwrap().value;
        let cfg = covariance_c(&f, &g, -1.5).unwrap().value;
        assert!((cgf - cfg.conj()).norm() < 1e-8);
        // Pin the conjugation convention of the cumulant term with a complex
        // g: the term is kappa4 * conj(gap_g) * gap_f.
        let gi = TestFunction::new(
            "i*abs2",
            |z: C64| C64::new(0.0, z.norm_sqr()),
            None,
            None,
            crate::testfn::Smoothness::C2Symmetric,
            f64::INFINITY,
        );
        let fa = TestFunction::abs_squared();
        // gap(abs2) = 1/2 - 1 = -1/2; gap(i abs2) = -i/2; conj -> +i/2.
        let with = covariance_c(&gi, &fa, 1.0).unwrap();
        let without = covariance_c(&gi, &fa, 0.0).unwrap();
        let kurt = with.value - without.value;
        assert!(
            (kurt - C64::new(0.0, -0.25)).norm() < 1e-8,
            "kurtosis part {kurt}"
        );
        assert!((with.kurtosis_part - kurt).norm() < 1e-12);
    }

    #[test]
    fn real_variance_from_complex_parts() {
        // V = 2 * (quadratic complex part of the symmetrized f) + kappa4 *
        // (squared average gap of f), checked on a non-analytic function.
        let f = TestFunction::parse("gauss(0.25+0.15i,0.45)").unwrap();
        for kap in [0.0, -2.0, 0.8] {
            let v = variance_v(&f, kap).unwrap();
            let (c1_sym, _) = complex_variance_parts(&f.psym()).unwrap();
            let (_, c2) = complex_variance_parts(&f).unwrap();
            let rebuilt = 2.0 * c1_sym + kap * c2;
            assert!((v - rebuilt).abs() < 1e-8, "kappa={kap}: {v} vs {rebuilt}");
        }
    }

    #[test]
    fn field_energy_assembly_matches_covariance() {
        // The Dirichlet-plus-boundary energy assembled from the raw
        // primitives must equal 2 pi times the quadratic covariance part for
        // symmetric functions.
        let f = TestFunction::parse("re(z^3)").unwrap();
        let dirichlet = grad_inner(&f, &f).unwrap().re;
        let boundary = h_half_inner(&f, &f).value.re;
        let lhs = dirichlet + 2.0 * PI * boundary;
        let c = covariance_c(&f, &f, 0.0).unwrap();
        let rhs = 2.0 * PI * (c.grad_part + c.h_half_part).re;
        assert!((lhs - rhs).abs() < 1e-8);
    }

    #[test]
    fn variance_nonnegative_on_library() {
        for text in ["z^2", "re(z^3)", "abs2", "bump(0.3+0.2i,0.5)", "gauss(-0.2i,0.3)"] {
            let f = TestFunction::parse(text).unwrap();
            for kap in [-2.0, 0.0, 1.0] {
                let v = variance_v(&f, kap).unwrap();
                assert!(v >= -1e-8, "{text} kappa={kap}: {v}");
            }
        }
    }

    #[test]
    fn predict_bundles_terms() {
        let p = predict(&TestFunction::monomial(2), -2.0, 100).unwrap();
        assert!((p.e_f - C64::new(1.0, 0.0)).norm() < 1.5e-4);
        assert!((p.v_f - 2.0).abs() < 1e-6);
        assert_eq!(p.n, 100);
        assert!(!p.fd_gradients);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"v_f\""));
    }

    #[test]
    fn erfcx_branches_agree() {
        // Continuity across the series switch and agreement with the direct
        // product in the overlap region.
        for x in [5.5f64, 5.9, 6.1, 7.0, 10.0] {
            let direct = (x * x).exp() * erfc(x);
            let val = erfcx(x);
            assert!(
                ((val - direct) / direct).abs() < 1e-10,
                "x={x}: {val} vs {direct}"
            );
        }
        assert!((erfcx(0.0) - 1.0).abs() < 1e-15);
        // Large-argument limit: x sqrt(pi) erfcx(x) -> 1.
        assert!((50.0 * PI.sqrt() * erfcx(50.0) - 1.0).abs() < 3e-4);
    }

    #[test]
    fn complex_eigenvalue_density_profile() {
        let n = 500;
        // Bulk point away from the real axis: circular-law value with the
        // explicit 1/n correction, within 2%.
        let z = C64::new(0.4, 0.3);
        let rho = edelman_density(z, n).unwrap();
        let asym = 1.0 / PI - 1.0 / (4.0 * PI * n as f64 * 0.3 * 0.3);
        assert!(
            ((rho - asym) / asym).abs() < 0.02,
            "rho {rho} vs asymptotic {asym}"
        );
        // The density vanishes on the real axis and far outside the disk.
        assert!(edelman_density(C64::new(0.3, 0.0), n).unwrap() == 0.0);
        assert!(edelman_density(C64::new(0.3, 1e-12), n).unwrap() < 1e-8);
        assert!(edelman_density(C64::new(1.2, 0.9), n).unwrap() < 1e-6);
        // Symmetries: conjugation and rotation by pi.
        let a = edelman_density(C64::new(0.4, -0.3), n).unwrap();
        let b = edelman_density(C64::new(-0.4, 0.3), n).unwrap();
        assert!((rho - a).abs() < 1e-15 && (rho - b).abs() < 1e-15);
        assert!(edelman_density(z, 1).is_err());
    }

    #[test]
    fn complex_eigenvalue_density_total_mass() {
        // The complex eigenvalues carry total mass 1 - E[#real]/n with
        // E[#real] ~ sqrt(2n/pi).
        let n = 500;
        let scale = 1.2;
        let mass = quad::disk()
            .integrate(|w| {
                C64::new(edelman_density(w * scale, n).unwrap(), 0.0)
            })
            .re
            * scale
            * scale;
        let expected = 1.0 - (2.0 / (PI * n as f64)).sqrt();
        assert!(
            (mass - expected).abs() < 0.01,
            "mass {mass} vs {expected}"
        );
    }

    #[test]
    fn spectral_shift_identity_on_smooth_bump() {
        // The log-determinant reconstruction of a linear statistic is an
        // identity; with a modest grid the only error is quadrature.
        let n = 40;
        let x = sample_iid(
            &EnsembleSpec {
                symmetry: Symmetry::Real,
                law: EntryLaw::Gaussian,
                n,
                seed: 61,
            },
            0,
        )
        .unwrap()
        .data;
        let f = TestFunction::bump(C64::new(-0.2, 0.15), 0.45);
        let eigs = x.as_real().unwrap().clone().complex_eigenvalues();
        let direct: C64 = eigs.iter().map(|s| f.eval(C64::new(s.re, s.im))).sum();
        let grid = ZGrid {
            center: C64::new(-0.2, 0.15),
            half_width: 0.55,
            per_side: 96,
        };
        let (cells, area) = girko_cells(&x, &grid).unwrap();
        let split = GirkoSplit::standard(n);
        let est = girko_evaluate(&cells, area, &f, &split, n, 1e-2).unwrap();
        let denom = direct.norm().max(1.0);
        assert!(
            (est.value - direct).norm() / denom < 2e-2,
            "estimate {} vs direct {}",
            est.value,
            direct
        );
        // The regime split recombines exactly to the estimate.
        let rebuilt = est.j_term + est.i_segments[0] + est.i_segments[1] + est.i_segments[2];
        assert!((rebuilt - est.value).norm() < 1e-9 * denom.max(est.j_term.norm()));
        assert!(!est.fd_laplacian);
    }

    #[test]
    fn spectral_shift_vanishes_off_spectrum() {
        let n = 10;
        let x = sample_iid(
            &EnsembleSpec {
                symmetry: Symmetry::Real,
                law: EntryLaw::Gaussian,
                n,
                seed: 67,
            },
            0,
        )
        .unwrap()
        .data;
        // Support far outside the spectrum: both sides are numerically zero.
        // The grid is fine enough that the discretized laplacian mass (the
        // only error channel, since the log-determinant is harmonic here)
        // is negligible.
        let f = TestFunction::bump(C64::new(2.5, 0.0), 0.5);
        let grid = ZGrid {
            center: C64::new(2.5, 0.0),
            half_width: 0.6,
            per_side: 288,
        };
        let (cells, area) = girko_cells(&x, &grid).unwrap();
        let est = girko_evaluate(&cells, area, &f, &GirkoSplit::standard(n), n, 1e-2).unwrap();
        assert!(est.value.norm() < 1e-5, "value {}", est.value);
    }

    #[test]
    fn spectral_shift_error_shrinks_under_refinement() {
        let n = 30;
        let x = sample_iid(
            &EnsembleSpec {
                symmetry: Symmetry::Real,
                law: EntryLaw::Gaussian,
                n,
                seed: 71,
            },
            0,
        )
        .unwrap()
        .data;
        let f = TestFunction::bump(C64::new(0.1, -0.2), 0.5);
        let eigs = x.as_real().unwrap().clone().complex_eigenvalues();
        let direct: C64 = eigs.iter().map(|s| f.eval(C64::new(s.re, s.im))).sum();
        let mut errors = Vec::new();
        for per_side in [24usize, 48, 96] {
            let grid = ZGrid {
                center: C64::new(0.1, -0.2),
                half_width: 0.6,
                per_side,
            };
            let (cells, area) = girko_cells(&x, &grid).unwrap();
            let est =
                girko_evaluate(&cells, area, &f, &GirkoSplit::standard(n), n, 10.0).unwrap();
            errors.push((est.value - direct).norm());
        }
        assert!(
            errors[0] > errors[1] && errors[1] > errors[2],
            "errors {errors:?}"
        );
    }
}
