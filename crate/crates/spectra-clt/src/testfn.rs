//! Test functions for linear spectral statistics.
//!
//! A [`TestFunction`] bundles a pointwise evaluator f: C -> C with optional
//! analytic gradient and Laplacian, a smoothness hint, and an effective
//! support radius. Functions are extended by zero outside their support. The
//! module also provides the real-axis symmetrization (P f)(z) = (f(z) +
//! f(conj z))/2, Fourier analysis of boundary traces on the unit circle, a
//! small library of standard test functions (monomials, their conjugates and
//! real parts, |z|^2, smooth bumps, Gaussians), and a text grammar for
//! selecting library functions from the command line.

use std::fmt;
use std::sync::Arc;

use crate::C64;

/// Step for central-difference first derivatives when no analytic gradient is
/// supplied.
const FD_GRAD_STEP: f64 = 1e-5;

/// Step for the five-point Laplacian stencil when no analytic Laplacian is
/// supplied.
const FD_LAPLACIAN_STEP: f64 = 1e-4;

type ValueFn = Arc<dyn Fn(C64) -> C64 + Send + Sync>;
type GradFn = Arc<dyn Fn(C64) -> (C64, C64) + Send + Sync>;
type LaplacianFn = Arc<dyn Fn(C64) -> C64 + Send + Sync>;

/// Regularity hint attached to a test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Smoothness {
    /// Holomorphic in a neighborhood of the closed unit disk.
    Analytic,
    /// Twice continuously differentiable.
    C2,
    /// Twice continuously differentiable and symmetric about the real axis.
    C2Symmetric,
}

/// Errors from the test-function text grammar.
#[derive(Debug, thiserror::Error)]
#[error("cannot parse test function: {0}")]
pub struct TestFnParseError(pub String);

/// A complex-valued test function with optional analytic derivatives.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    value: ValueFn,
    grad: Option<GradFn>,
    laplacian: Option<LaplacianFn>,
    /// Regularity hint used in reports.
    pub smoothness: Smoothness,
    /// Radius outside which the function is treated as (effectively) zero.
    pub support_radius: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("smoothness", &self.smoothness)
            .field("support_radius", &self.support_radius)
            .field("analytic_grad", &self.grad.is_some())
            .field("analytic_laplacian", &self.laplacian.is_some())
            .finish()
    }
}

impl TestFunction {
    /// Builds a function from raw closures.
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(C64) -> C64 + Send + Sync + 'static,
        grad: Option<GradFn>,
        laplacian: Option<LaplacianFn>,
        smoothness: Smoothness,
        support_radius: f64,
    ) -> Self {
        TestFunction {
            name: name.into(),
            value: Arc::new(value),
            grad,
            laplacian,
            smoothness,
            support_radius,
        }
    }

    /// Display name of the function.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Pointwise evaluation.
    pub fn eval(&self, z: C64) -> C64 {
        (self.value)(z)
    }

    /// Gradient (d/dx f, d/dy f), analytic when available, otherwise central
    /// differences at step 1e-5.
    pub fn grad(&self, z: C64) -> (C64, C64) {
        if let Some(g) = &self.grad {
            return g(z);
        }
        let h = FD_GRAD_STEP;
        let fx = (self.eval(z + h) - self.eval(z - h)) / (2.0 * h);
        let fy = (self.eval(z + C64::new(0.0, h)) - self.eval(z - C64::new(0.0, h))) / (2.0 * h);
        (fx, fy)
    }

    /// Laplacian, analytic when available, otherwise a five-point stencil at
    /// step 1e-4.
    pub fn laplacian(&self, z: C64) -> C64 {
        if let Some(l) = &self.laplacian {
            return l(z);
        }
        let h = FD_LAPLACIAN_STEP;
        let ih = C64::new(0.0, h);
        (self.eval(z + h) + self.eval(z - h) + self.eval(z + ih) + self.eval(z - ih)
            - 4.0 * self.eval(z))
            / (h * h)
    }

    /// Whether derivatives fall back to finite differences (flagged in reports).
    pub fn uses_fd_grad(&self) -> bool {
        self.grad.is_none()
    }

    /// Whether the Laplacian falls back to a finite-difference stencil.
    pub fn uses_fd_laplacian(&self) -> bool {
        self.laplacian.is_none()
    }

    /// Symmetrization about the real axis: (P f)(z) = (f(z) + f(conj z))/2.
    ///
    /// Analytic derivatives are propagated by the chain rule: if g(z) =
    /// f(conj z) then g_x(z) = f_x(conj z) and g_y(z) = -f_y(conj z).
    pub fn psym(&self) -> TestFunction {
        let value = self.value.clone();
        let grad = self.grad.clone().map(|g| -> GradFn {
            Arc::new(move |z: C64| {
                let (fx, fy) = g(z);
                let (cx, cy) = g(z.conj());
                ((fx + cx) / 2.0, (fy - cy) / 2.0)
            })
        });
        let laplacian = self.laplacian.clone().map(|l| -> LaplacianFn {
            Arc::new(move |z: C64| (l(z) + l(z.conj())) / 2.0)
        });
        TestFunction {
            name: format!("psym({})", self.name),
            value: Arc::new(move |z: C64| (value(z) + value(z.conj())) / 2.0),
            grad,
            laplacian,
            smoothness: if self.smoothness == Smoothness::Analytic {
                // The conjugated copy destroys holomorphy in general, but the
                // result is always symmetric.
                Smoothness::C2Symmetric
            } else {
                Smoothness::C2Symmetric
            },
            support_radius: self.support_radius,
        }
    }

    // -- library constructors ------------------------------------------------

    /// f(z) = z^k.
    pub fn monomial(k: u32) -> TestFunction {
        let grad: GradFn = Arc::new(move |z: C64| {
            if k == 0 {
                (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
            } else {
                let d = z.powu(k - 1) * k as f64;
                (d, d * C64::new(0.0, 1.0))
            }
        });
        TestFunction::new(
            format!("z^{k}"),
            move |z: C64| z.powu(k),
            Some(grad),
            Some(Arc::new(|_| C64::new(0.0, 0.0))),
            Smoothness::Analytic,
            f64::INFINITY,
        )
    }

    /// f(z) = conj(z)^k.
    pub fn conj_monomial(k: u32) -> TestFunction {
        let grad: GradFn = Arc::new(move |z: C64| {
            if k == 0 {
                (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
            } else {
                let d = z.conj().powu(k - 1) * k as f64;
                (d, -d * C64::new(0.0, 1.0))
            }
        });
        TestFunction::new(
            format!("conj(z)^{k}"),
            move |z: C64| z.conj().powu(k),
            Some(grad),
            Some(Arc::new(|_| C64::new(0.0, 0.0))),
            Smoothness::C2,
            f64::INFINITY,
        )
    }

    /// f(z) = Re(z^k), the symmetrized monomial.
    pub fn sym_monomial(k: u32) -> TestFunction {
        let grad: GradFn = Arc::new(move |z: C64| {
            if k == 0 {
                (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
            } else {
                let d = z.powu(k - 1) * k as f64;
                // d/dx Re z^k = Re(k z^{k-1}), d/dy Re z^k = Re(i k z^{k-1}).
                (
                    C64::new(d.re, 0.0),
                    C64::new((d * C64::new(0.0, 1.0)).re, 0.0),
                )
            }
        });
        TestFunction::new(
            format!("re(z^{k})"),
            move |z: C64| C64::new(z.powu(k).re, 0.0),
            Some(grad),
            Some(Arc::new(|_| C64::new(0.0, 0.0))),
            Smoothness::C2Symmetric,
            f64::INFINITY,
        )
    }

    /// f(z) = |z|^2.
    pub fn abs_squared() -> TestFunction {
        TestFunction::new(
            "abs2",
            |z: C64| C64::new(z.norm_sqr(), 0.0),
            Some(Arc::new(|z: C64| {
                (C64::new(2.0 * z.re, 0.0), C64::new(2.0 * z.im, 0.0))
            })),
            Some(Arc::new(|_| C64::new(4.0, 0.0))),
            Smoothness::C2Symmetric,
            f64::INFINITY,
        )
    }

    /// Radial bump supported on |z - c| <= r, normalized to 1 at the center:
    /// f = exp(-t / (1 - t)) with t = |z - c|^2 / r^2.
    pub fn bump(center: C64, radius: f64) -> TestFunction {
        assert!(radius > 0.0, "bump radius must be positive");
        let r2 = radius * radius;
        let t_of = move |z: C64| (z - center).norm_sqr() / r2;
        let val = move |z: C64| -> f64 {
            let t = t_of(z);
            if t >= 1.0 {
                0.0
            } else {
                (-t / (1.0 - t)).exp()
            }
        };
        let grad: GradFn = Arc::new(move |z: C64| {
            let t = t_of(z);
            if t >= 1.0 {
                return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            }
            // df/dt = -f / (1-t)^2; dt/dx = 2 (x - cx) / r^2.
            let f = (-t / (1.0 - t)).exp();
            let dfdt = -f / ((1.0 - t) * (1.0 - t));
            let d = z - center;
            (
                C64::new(dfdt * 2.0 * d.re / r2, 0.0),
                C64::new(dfdt * 2.0 * d.im / r2, 0.0),
            )
        });
        let laplacian: LaplacianFn = Arc::new(move |z: C64| {
            let t = t_of(z);
            if t >= 1.0 {
                return C64::new(0.0, 0.0);
            }
            let f = (-t / (1.0 - t)).exp();
            let s = 1.0 - t;
            let dfdt = -f / (s * s);
            let d2fdt2 = f / (s * s * s * s) - 2.0 * f / (s * s * s);
            // |grad t|^2 = 4t/r^2 and laplacian(t) = 4/r^2.
            C64::new(d2fdt2 * 4.0 * t / r2 + dfdt * 4.0 / r2, 0.0)
        });
        TestFunction::new(
            format!("bump({center},{radius})"),
            move |z: C64| C64::new(val(z), 0.0),
            Some(grad),
            Some(laplacian),
            if center.im == 0.0 {
                Smoothness::C2Symmetric
            } else {
                Smoothness::C2
            },
            center.norm() + radius,
        )
    }

    /// Gaussian bump f = exp(-|z - c|^2 / (2 s^2)); the support radius is the
    /// effective one (10 standard deviations).
    pub fn gauss(center: C64, sigma: f64) -> TestFunction {
        assert!(sigma > 0.0, "gauss width must be positive");
        let s2 = sigma * sigma;
        let val = move |z: C64| (-(z - center).norm_sqr() / (2.0 * s2)).exp();
        let grad: GradFn = Arc::new(move |z: C64| {
            let f = val(z);
            let d = z - center;
            (
                C64::new(-f * d.re / s2, 0.0),
                C64::new(-f * d.im / s2, 0.0),
            )
        });
        let laplacian: LaplacianFn = Arc::new(move |z: C64| {
            let f = val(z);
            let q = (z - center).norm_sqr();
            C64::new(f * (q / (s2 * s2) - 2.0 / s2), 0.0)
        });
        TestFunction::new(
            format!("gauss({center},{sigma})"),
            move |z: C64| C64::new(val(z), 0.0),
            Some(grad),
            Some(laplacian),
            if center.im == 0.0 {
                Smoothness::C2Symmetric
            } else {
                Smoothness::C2
            },
            center.norm() + 10.0 * sigma,
        )
    }

    /// Parses the text grammar:
    ///
    /// ```text
    ///   z^k | conj(z)^k | conj(z^k) | re(z^k) | abs2
    ///   bump(<center>,<radius>) | gauss(<center>,<sigma>)
    /// ```
    ///
    /// where `<center>` is a complex literal like `0.3-0.4i`.
    pub fn parse(input: &str) -> Result<TestFunction, TestFnParseError> {
        let s: String = input
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_lowercase();
        let bad = || TestFnParseError(input.to_string());
        let parse_k = |t: &str| -> Result<u32, TestFnParseError> {
            t.parse::<u32>().map_err(|_| bad())
        };
        if s == "abs2" || s == "|z|^2" {
            return Ok(TestFunction::abs_squared());
        }
        if s == "z" {
            return Ok(TestFunction::monomial(1));
        }
        if let Some(k) = s.strip_prefix("z^") {
            return Ok(TestFunction::monomial(parse_k(k)?));
        }
        if s == "conj(z)" {
            return Ok(TestFunction::conj_monomial(1));
        }
        if let Some(k) = s.strip_prefix("conj(z)^") {
            return Ok(TestFunction::conj_monomial(parse_k(k)?));
        }
        if let Some(t) = s.strip_prefix("conj(z^").and_then(|t| t.strip_suffix(')')) {
            return Ok(TestFunction::conj_monomial(parse_k(t)?));
        }
        if s == "re(z)" {
            return Ok(TestFunction::sym_monomial(1));
        }
        if let Some(t) = s.strip_prefix("re(z^").and_then(|t| t.strip_suffix(')')) {
            return Ok(TestFunction::sym_monomial(parse_k(t)?));
        }
        for (prefix, is_bump) in [("bump(", true), ("gauss(", false)] {
            if let Some(t) = s.strip_prefix(prefix).and_then(|t| t.strip_suffix(')')) {
                let (c, w) = t.rsplit_once(',').ok_or_else(bad)?;
                let center = parse_complex(c).map_err(|_| bad())?;
                let width: f64 = w.parse().map_err(|_| bad())?;
                if width <= 0.0 {
                    return Err(bad());
                }
                return Ok(if is_bump {
                    TestFunction::bump(center, width)
                } else {
                    TestFunction::gauss(center, width)
                });
            }
        }
        Err(bad())
    }
}

/// Parses a complex literal: `0.3`, `-0.4i`, `0.3+0.4i`, `i`, `-i`, `1e-3-2i`.
pub fn parse_complex(input: &str) -> Result<C64, TestFnParseError> {
    let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || TestFnParseError(format!("invalid complex literal: {input}"));
    if s.is_empty() {
        return Err(bad());
    }
    let parse_part = |t: &str| -> Result<f64, TestFnParseError> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => t.parse::<f64>().map_err(|_| bad()),
        }
    };
    if let Some(body) = s.strip_suffix(['i', 'j']) {
        // Split a trailing imaginary part from an optional real part: scan for
        // a sign that is not a leading sign and not part of an exponent.
        let chars: Vec<char> = body.chars().collect();
        let mut split = None;
        for p in (1..chars.len()).rev() {
            if (chars[p] == '+' || chars[p] == '-')
                && chars[p - 1] != 'e'
                && chars[p - 1] != 'E'
            {
                split = Some(p);
                break;
            }
        }
        match split {
            Some(p) => {
                let re: f64 = body[..p].parse().map_err(|_| bad())?;
                Ok(C64::new(re, parse_part(&body[p..])?))
            }
            None => Ok(C64::new(0.0, parse_part(body)?)),
        }
    } else {
        Ok(C64::new(s.parse::<f64>().map_err(|_| bad())?, 0.0))
    }
}

// ---------------------------------------------------------------------------
// Boundary Fourier analysis
// ---------------------------------------------------------------------------

/// Number of equispaced samples of the boundary trace.
pub const BOUNDARY_SAMPLES: usize = 4096;

/// Default truncation order of the boundary Fourier series.
pub const FOURIER_K_MAX: usize = 512;

/// Fourier coefficients of a boundary trace h(e^{i theta}) on the unit circle:
/// hat h(k) = (2 pi)^{-1} integral of h(e^{i theta}) e^{-i k theta}.
///
/// Coefficients are computed by the trapezoidal rule on 4096 equispaced
/// samples, which is exact (to roundoff) for trigonometric polynomials of
/// degree below half the sample count.
#[derive(Debug, Clone)]
pub struct BoundaryFourier {
    /// Largest retained |k|.
    pub k_max: usize,
    coeffs: Vec<C64>,
}

impl BoundaryFourier {
    /// Samples the function on the unit circle and projects onto modes
    /// |k| <= k_max.
    pub fn new(f: &TestFunction, k_max: usize) -> BoundaryFourier {
        let n = BOUNDARY_SAMPLES;
        let samples: Vec<C64> = (0..n)
            .map(|j| {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                f.eval(C64::new(theta.cos(), theta.sin()))
            })
            .collect();
        let mut coeffs = vec![C64::new(0.0, 0.0); 2 * k_max + 1];
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = idx as i64 - k_max as i64;
            let mut acc = C64::new(0.0, 0.0);
            for (j, h) in samples.iter().enumerate() {
                let phi = -2.0 * std::f64::consts::PI * (k * j as i64) as f64 / n as f64;
                acc += h * C64::new(phi.cos(), phi.sin());
            }
            *c = acc / n as f64;
        }
        BoundaryFourier { k_max, coeffs }
    }

    /// With the default truncation.
    pub fn standard(f: &TestFunction) -> BoundaryFourier {
        BoundaryFourier::new(f, FOURIER_K_MAX)
    }

    /// Coefficient at mode k (zero outside the retained window).
    pub fn coeff(&self, k: i64) -> C64 {
        if k.unsigned_abs() as usize > self.k_max {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.k_max as i64) as usize]
        }
    }

    /// Mean of the boundary trace, i.e. the k = 0 coefficient.
    pub fn mean(&self) -> C64 {
        self.coeff(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_points(count: usize) -> Vec<C64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        (0..count)
            .map(|_| {
                C64::new(
                    rng.random_range(-1.2..1.2),
                    rng.random_range(-1.2..1.2),
                )
            })
            .collect()
    }

    #[test]
    fn symmetrization_basics() {
        let f = TestFunction::monomial(1);
        let p = f.psym();
        for z in random_points(100) {
            // psym(z) = Re z.
            assert!((p.eval(z) - C64::new(z.re, 0.0)).norm() < 1e-15);
        }
        // Already-symmetric functions are fixed points.
        for f in [
            TestFunction::sym_monomial(3),
            TestFunction::abs_squared(),
            TestFunction::bump(C64::new(0.2, 0.0), 0.7),
        ] {
            let p = f.psym();
            for z in random_points(100) {
                assert!((p.eval(z) - f.eval(z)).norm() < 1e-15, "{}", f.name());
            }
        }
        // Idempotence at 1000 random points.
        let g = TestFunction::gauss(C64::new(0.3, 0.4), 0.5);
        let p1 = g.psym();
        let p2 = p1.psym();
        for z in random_points(1000) {
            assert!((p1.eval(z) - p2.eval(z)).norm() < 1e-15);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let fns = [
            TestFunction::monomial(3),
            TestFunction::conj_monomial(2),
            TestFunction::sym_monomial(4),
            TestFunction::abs_squared(),
            TestFunction::bump(C64::new(0.1, 0.2), 0.8),
            TestFunction::gauss(C64::new(-0.2, 0.3), 0.4),
            TestFunction::monomial(3).psym(),
        ];
        for f in &fns {
            assert!(!f.uses_fd_grad(), "{}", f.name());
            let stripped = TestFunction::new(
                "stripped",
                {
                    let f = f.clone();
                    move |z| f.eval(z)
                },
                None,
                None,
                Smoothness::C2,
                f64::INFINITY,
            );
            assert!(stripped.uses_fd_grad() && stripped.uses_fd_laplacian());
            for z in random_points(25) {
                let (ax, ay) = f.grad(z);
                let (nx, ny) = stripped.grad(z);
                assert!((ax - nx).norm() < 2e-6, "{} d/dx at {z}", f.name());
                assert!((ay - ny).norm() < 2e-6, "{} d/dy at {z}", f.name());
                let al = f.laplacian(z);
                let nl = stripped.laplacian(z);
                assert!((al - nl).norm() < 5e-5, "{} laplacian at {z}: {al} vs {nl}", f.name());
            }
        }
    }

    #[test]
    fn monomial_golden_values() {
        let f = TestFunction::monomial(2);
        let z = C64::new(1.0, 1.0);
        assert!((f.eval(z) - C64::new(0.0, 2.0)).norm() < 1e-15);
        let g = TestFunction::conj_monomial(2);
        assert!((g.eval(z) - C64::new(0.0, -2.0)).norm() < 1e-15);
        let r = TestFunction::sym_monomial(2);
        assert!((r.eval(z) - C64::new(0.0, 0.0)).norm() < 1e-15);
        assert!((TestFunction::abs_squared().eval(z) - C64::new(2.0, 0.0)).norm() < 1e-15);
        // Bump: 1 at the center, 0 outside the support radius.
        let b = TestFunction::bump(C64::new(0.5, 0.0), 0.25);
        assert!((b.eval(C64::new(0.5, 0.0)) - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(b.eval(C64::new(0.8, 0.0)), C64::new(0.0, 0.0));
        assert!((b.support_radius - 0.75).abs() < 1e-15);
    }

    #[test]
    fn grammar_accepts_library_and_rejects_garbage() {
        for (text, probe, want) in [
            ("z^3", C64::new(0.5, 0.5), C64::new(0.5, 0.5).powu(3)),
            ("Z ^ 2", C64::new(0.3, -0.2), C64::new(0.3, -0.2).powu(2)),
            ("conj(z)^2", C64::new(0.3, 0.2), C64::new(0.3, -0.2).powu(2)),
            ("conj(z^2)", C64::new(0.3, 0.2), C64::new(0.3, -0.2).powu(2)),
            (
                "re(z^4)",
                C64::new(0.4, 0.1),
                C64::new(C64::new(0.4, 0.1).powu(4).re, 0.0),
            ),
            ("abs2", C64::new(0.6, 0.8), C64::new(1.0, 0.0)),
            ("z", C64::new(0.1, 0.9), C64::new(0.1, 0.9)),
        ] {
            let f = TestFunction::parse(text).unwrap();
            assert!(
                (f.eval(probe) - want).norm() < 1e-14,
                "{text} at {probe}: {} vs {want}",
                f.eval(probe)
            );
        }
        let b = TestFunction::parse("bump(0.2+0.1i, 0.5)").unwrap();
        assert!((b.eval(C64::new(0.2, 0.1)) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let g = TestFunction::parse("gauss(-0.3i, 0.25)").unwrap();
        assert!((g.eval(C64::new(0.0, -0.3)) - C64::new(1.0, 0.0)).norm() < 1e-15);
        for bad in ["foo", "z^", "z^-1", "bump(1)", "bump(0,0)", "gauss(,1)", ""] {
            assert!(TestFunction::parse(bad).is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn complex_literals() {
        for (text, want) in [
            ("0.5", C64::new(0.5, 0.0)),
            ("-2", C64::new(-2.0, 0.0)),
            ("i", C64::new(0.0, 1.0)),
            ("-i", C64::new(0.0, -1.0)),
            ("0.4i", C64::new(0.0, 0.4)),
            ("0.3+0.4i", C64::new(0.3, 0.4)),
            ("0.3-0.4i", C64::new(0.3, -0.4)),
            ("-0.3-0.4j", C64::new(-0.3, -0.4)),
            ("1e-3+2e-2i", C64::new(1e-3, 2e-2)),
            ("2.5+i", C64::new(2.5, 1.0)),
            ("2.5-i", C64::new(2.5, -1.0)),
        ] {
            let got = parse_complex(text).unwrap();
            assert!((got - want).norm() < 1e-15, "{text}: {got} vs {want}");
        }
        for bad in ["", "x", "1+1", "i3", "0.3+0.4"] {
            assert!(parse_complex(bad).is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn boundary_fourier_exact_on_trigonometric_polynomials() {
        // z^3 restricted to the circle is e^{3 i theta}.
        let bf = BoundaryFourier::standard(&TestFunction::monomial(3));
        assert!((bf.coeff(3) - C64::new(1.0, 0.0)).norm() < 1e-10);
        for k in [-512i64, -5, -3, -1, 0, 1, 2, 4, 200, 512] {
            assert!(bf.coeff(k).norm() < 1e-10, "mode {k}");
        }
        // Re z^5 has coefficients 1/2 at k = +-5.
        let bf = BoundaryFourier::standard(&TestFunction::sym_monomial(5));
        assert!((bf.coeff(5) - C64::new(0.5, 0.0)).norm() < 1e-10);
        assert!((bf.coeff(-5) - C64::new(0.5, 0.0)).norm() < 1e-10);
        assert!(bf.coeff(4).norm() < 1e-10);
        // |z|^2 is constant 1 on the boundary.
        let bf = BoundaryFourier::standard(&TestFunction::abs_squared());
        assert!((bf.mean() - C64::new(1.0, 0.0)).norm() < 1e-10);
        assert!(bf.coeff(2).norm() < 1e-10);
        // Modes outside the window read as zero.
        assert_eq!(bf.coeff(513), C64::new(0.0, 0.0));
    }
}
