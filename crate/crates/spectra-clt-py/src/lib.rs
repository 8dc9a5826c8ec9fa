//! Python bindings for the spectra-clt library.
//!
//! The compiled module is named `spectra_clt` and exposes the main
//! deterministic solvers (self-consistent resolvent equation, spectral edges,
//! density evaluations, moment predictions) together with small sampling
//! helpers (singular values, eigenvalues, cross-parameter overlaps) and the
//! deterministic self-test suite.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spectra_clt::ensemble::{self, EnsembleSpec, EntryLaw, Symmetry};
use spectra_clt::{cltpred, harness, mde, selftest, spectral, testfn};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn build_spec(n: usize, seed: u64, law: &str, symmetry: &str) -> PyResult<EnsembleSpec> {
    if n == 0 {
        return Err(PyValueError::new_err("matrix dimension must be positive"));
    }
    let law: EntryLaw = law.parse().map_err(value_err)?;
    let symmetry = match symmetry {
        "real" => Symmetry::Real,
        "complex" => Symmetry::Complex,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown symmetry class '{other}' (expected 'real' or 'complex')"
            )))
        }
    };
    Ok(EnsembleSpec {
        symmetry,
        law,
        n,
        seed,
    })
}

/// Solution of the self-consistent resolvent equation at one (z, w) point.
#[pyclass(frozen, get_all, module = "spectra_clt")]
pub struct MdePoint {
    /// Shift parameter of the non-Hermitian matrix.
    z: Complex64,
    /// Spectral parameter (Im w != 0).
    w: Complex64,
    /// Normalized resolvent trace; Im m has the sign of Im w.
    m: Complex64,
    /// Off-diagonal profile u = m / (w + m).
    u: Complex64,
    /// Im m / pi, the local density of the symmetrized singular values.
    rho: f64,
    /// Absolute residual of the fixed-point equation.
    residual: f64,
}

#[pymethods]
impl MdePoint {
    /// |m|^2 + |u|^2 |z|^2, which approaches 1 as w approaches the bulk axis.
    fn saturation(&self) -> f64 {
        self.m.norm_sqr() + self.u.norm_sqr() * self.z.norm_sqr()
    }

    fn __repr__(&self) -> String {
        format!(
            "MdePoint(z={:+.6}{:+.6}j, w={:+.6}{:+.6}j, m={:+.6}{:+.6}j, u={:+.6}{:+.6}j, rho={:.6}, residual={:.3e})",
            self.z.re, self.z.im, self.w.re, self.w.im, self.m.re, self.m.im, self.u.re,
            self.u.im, self.rho, self.residual
        )
    }
}

/// Support edges of the symmetrized singular-value density at a given shift.
#[pyclass(frozen, get_all, module = "spectra_clt")]
pub struct Edges {
    /// |z| of the shift the edges were computed for.
    z_abs: f64,
    /// Upper edge in the squared variable.
    e_plus: f64,
    /// Lower edge in the squared variable (positive only for |z| > 1).
    e_minus: f64,
    /// Outer spectral edge sqrt(e_plus).
    lambda_plus: f64,
    /// Inner spectral edge sqrt(e_minus) when a hard gap exists (|z| > 1).
    lambda_minus: Option<f64>,
    /// True when z = 0 was handled as the analytic limit.
    origin_limit: bool,
}

#[pymethods]
impl Edges {
    fn __repr__(&self) -> String {
        format!(
            "Edges(z_abs={:.6}, e_plus={:.6}, e_minus={:.6}, lambda_plus={:.6}, lambda_minus={:?})",
            self.z_abs, self.e_plus, self.e_minus, self.lambda_plus, self.lambda_minus
        )
    }
}

/// Predicted mean and variance of a linear eigenvalue statistic.
#[pyclass(frozen, get_all, module = "spectra_clt")]
pub struct Prediction {
    /// Canonical name of the test function.
    name: String,
    /// Matrix dimension used for the dimension-dependent terms.
    n: usize,
    /// Fourth cumulant of the entry law.
    kappa4: f64,
    /// Expectation of the uncentered statistic.
    e_f: Complex64,
    /// Limiting variance (real part of the full covariance).
    v_f: f64,
    /// Full complex self-covariance.
    c_ff: Complex64,
    /// Leading term: n times the open-disk average.
    bulk: Complex64,
    /// Real-axis correction term of the expectation.
    axis: Complex64,
    /// Fourth-cumulant term of the expectation.
    kurtosis: Complex64,
    /// Boundary-trace term of the expectation.
    boundary: Complex64,
    /// Arcsine-weighted diameter term of the expectation.
    arcsine: Complex64,
    /// Endpoint term (f(1) + f(-1)) / 4.
    endpoint: Complex64,
    /// Dirichlet, boundary and cumulant parts of the covariance.
    covariance_parts: Vec<Complex64>,
    /// True when gradients fell back to finite differences.
    fd_gradients: bool,
    /// True when the boundary series truncation was flagged.
    tail_warning: bool,
}

#[pymethods]
impl Prediction {
    fn __repr__(&self) -> String {
        format!(
            "Prediction(name='{}', n={}, kappa4={}, e_f={:+.6}{:+.6}j, v_f={:.6})",
            self.name, self.n, self.kappa4, self.e_f.re, self.e_f.im, self.v_f
        )
    }
}

/// Solve the self-consistent resolvent equation at shift z and spectral
/// parameter w (requires Im w != 0).
#[pyfunction]
fn solve_mde(z: Complex64, w: Complex64) -> PyResult<MdePoint> {
    let sol = mde::solve_m(z, w).map_err(value_err)?;
    Ok(MdePoint {
        z: sol.z,
        w: sol.w,
        m: sol.m,
        u: sol.u,
        rho: sol.rho,
        residual: sol.residual,
    })
}

/// Support edges of the symmetrized singular-value density at shift z.
#[pyfunction]
fn edges(z: Complex64) -> Edges {
    let e = mde::edges(z);
    Edges {
        z_abs: e.z_abs,
        e_plus: e.e_plus,
        e_minus: e.e_minus,
        lambda_plus: e.lambda_plus,
        lambda_minus: e.lambda_minus,
        origin_limit: e.origin_limit,
    }
}

/// Density of the symmetrized singular-value distribution at the origin:
/// sqrt(1 - |z|^2) / pi inside the unit disk and 0 outside.
#[pyfunction]
fn rho_at_zero(z: Complex64) -> f64 {
    mde::rho_at_zero(z)
}

/// Sampled density profile rho^z(x) on a symmetric grid of the support.
#[pyfunction]
#[pyo3(signature = (z, points = 201))]
fn density_profile(z: Complex64, points: usize) -> Vec<(f64, f64)> {
    mde::density_profile(z, points)
}

/// Deterministic eigenvalue locations gamma_1 <= ... <= gamma_count on the
/// positive half-spectrum; gamma_i holds mass i/(2n) of the density.
#[pyfunction]
#[pyo3(signature = (z, n, count = None))]
fn quantile_locations(z: Complex64, n: usize, count: Option<usize>) -> PyResult<Vec<f64>> {
    let q = mde::quantiles(z, n, count.unwrap_or(n)).map_err(value_err)?;
    Ok(q.gamma)
}

/// Predicted expectation and variance of the linear eigenvalue statistic for
/// the test function `f` (e.g. "z^2", "re(z^3)", "bump(0.2+0.1i, 0.5)").
#[pyfunction]
#[pyo3(signature = (f, kappa4 = 0.0, n = 1000))]
fn predict(f: &str, kappa4: f64, n: usize) -> PyResult<Prediction> {
    let func = testfn::TestFunction::parse(f).map_err(value_err)?;
    let p = cltpred::predict(&func, kappa4, n).map_err(value_err)?;
    let t = p.expectation_terms;
    Ok(Prediction {
        name: p.name,
        n: p.n,
        kappa4: p.kappa4,
        e_f: p.e_f,
        v_f: p.v_f,
        c_ff: p.c_ff,
        bulk: t.bulk,
        axis: t.axis,
        kurtosis: t.kurtosis,
        boundary: t.boundary,
        arcsine: t.arcsine,
        endpoint: t.endpoint,
        covariance_parts: p.covariance_parts.to_vec(),
        fd_gradients: p.fd_gradients,
        tail_warning: p.tail_warning,
    })
}

/// Fourth cumulant E chi^4 - 3 of a named entry law
/// ("gaussian", "rademacher" or "uniform").
#[pyfunction]
fn kappa4_of(law: &str) -> PyResult<f64> {
    let law: EntryLaw = law.parse().map_err(value_err)?;
    ensemble::kappa4_of(&law).map_err(value_err)
}

/// Singular values of X - z for one sampled matrix, in ascending order.
///
/// Sampling is a pure function of (n, seed, trial, law, symmetry); repeated
/// calls return bitwise-identical results.
#[pyfunction]
#[pyo3(signature = (n, seed, z, law = "gaussian", symmetry = "real", trial = 0))]
fn singular_values(
    n: usize,
    seed: u64,
    z: Complex64,
    law: &str,
    symmetry: &str,
    trial: u64,
) -> PyResult<Vec<f64>> {
    let spec = build_spec(n, seed, law, symmetry)?;
    let sample = ensemble::sample_iid(&spec, trial).map_err(value_err)?;
    spectral::singular_values(&sample.data, z).map_err(runtime_err)
}

/// Eigenvalues of one sampled matrix (unordered, as produced by the solver).
#[pyfunction]
#[pyo3(signature = (n, seed, law = "gaussian", symmetry = "real", trial = 0))]
fn eigenvalues(
    n: usize,
    seed: u64,
    law: &str,
    symmetry: &str,
    trial: u64,
) -> PyResult<Vec<Complex64>> {
    let spec = build_spec(n, seed, law, symmetry)?;
    let sample = ensemble::sample_iid(&spec, trial).map_err(value_err)?;
    harness::try_eigenvalues(&sample.data)
        .ok_or_else(|| runtime_err("eigenvalue iteration failed to converge"))
}

/// Largest absolute eigenvector overlap between the shifted structures at z1
/// and z2 for one sampled matrix, over the `window` smallest singular values.
#[pyfunction]
#[pyo3(signature = (n, seed, z1, z2, window = 5, law = "gaussian", symmetry = "real", trial = 0))]
#[allow(clippy::too_many_arguments)]
fn cross_overlap(
    n: usize,
    seed: u64,
    z1: Complex64,
    z2: Complex64,
    window: usize,
    law: &str,
    symmetry: &str,
    trial: u64,
) -> PyResult<f64> {
    let spec = build_spec(n, seed, law, symmetry)?;
    let sample = ensemble::sample_iid(&spec, trial).map_err(value_err)?;
    let d1 = spectral::decompose(&spectral::hermitize(&sample.data, z1)).map_err(runtime_err)?;
    let d2 = spectral::decompose(&spectral::hermitize(&sample.data, z2)).map_err(runtime_err)?;
    let ov = spectral::overlaps(&d1, &d2, window).map_err(value_err)?;
    Ok(ov.max_abs())
}

/// Expected eigenvalue density of a real Gaussian matrix at a genuinely
/// complex point z, at finite dimension n (eigenvalues rescaled by sqrt(n)).
#[pyfunction]
fn edelman_density(z: Complex64, n: usize) -> PyResult<f64> {
    cltpred::edelman_density(z, n).map_err(value_err)
}

/// Run the deterministic self-test suite; returns (name, passed, detail)
/// triples. No Monte Carlo sampling is involved.
#[pyfunction]
fn run_selftest() -> Vec<(String, bool, String)> {
    selftest::run_all()
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

/// Deterministic solvers and sampling helpers for spectral statistics of
/// large i.i.d. random matrices.
#[pymodule(name = "spectra_clt")]
fn bindings(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<MdePoint>()?;
    m.add_class::<Edges>()?;
    m.add_class::<Prediction>()?;
    m.add_function(wrap_pyfunction!(solve_mde, m)?)?;
    m.add_function(wrap_pyfunction!(edges, m)?)?;
    m.add_function(wrap_pyfunction!(rho_at_zero, m)?)?;
    m.add_function(wrap_pyfunction!(density_profile, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_locations, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(kappa4_of, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(cross_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(edelman_density, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_point_through_binding_layer() {
        let p = solve_mde(Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0)).unwrap();
        let golden = (5.0f64.sqrt() - 1.0) / 2.0;
        assert!((p.m.im - golden).abs() < 1e-10);
        assert!((p.u.re - (1.0 - golden)).abs() < 1e-10);
        assert!(p.residual < 1e-12);
        assert!(p.saturation() < 1.0);
    }

    #[test]
    fn prediction_matches_core_library() {
        let p = predict("z^2", 0.0, 1000).unwrap();
        assert!((p.e_f.re - 1.0).abs() < 1e-10);
        assert!(p.e_f.im.abs() < 1e-12);
        assert!((p.v_f - 2.0).abs() < 1e-10);
        assert_eq!(p.covariance_parts.len(), 3);
        assert_eq!(p.name, "z^2");
    }

    #[test]
    fn spec_parsing_rejects_unknown_names() {
        assert!(build_spec(8, 1, "gaussian", "real").is_ok());
        assert!(build_spec(8, 1, "cauchy", "real").is_err());
        assert!(build_spec(8, 1, "gaussian", "quaternion").is_err());
        assert!(build_spec(0, 1, "gaussian", "real").is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = singular_values(16, 7, Complex64::new(0.3, 0.2), "gaussian", "real", 0).unwrap();
        let b = singular_values(16, 7, Complex64::new(0.3, 0.2), "gaussian", "real", 0).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.len(), 16);
    }
}
