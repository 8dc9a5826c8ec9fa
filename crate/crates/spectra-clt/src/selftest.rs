//! Deterministic invariant suite: closed-form values, dual-route identities,
//! and quadrature identities, all checked without Monte Carlo. Every check
//! is a pure function of nothing — fixed inputs, fixed tolerances — so the
//! suite behaves identically on every run and machine.

use rand::Rng;

use crate::cltpred;
use crate::dbm::{self, CorrelationModel, DbmState, ProcessKind};
use crate::ensemble::{EnsembleSpec, EntryLaw, Symmetry};
use crate::harness;
use crate::mde;
use crate::quad;
use crate::rng::StreamKey;
use crate::stability;
use crate::testfn::TestFunction;
use crate::C64;

/// Outcome of one named check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    /// Stable check identifier.
    pub name: &'static str,
    /// Whether the check passed.
    pub passed: bool,
    /// Worst observed deviation or the failure reason.
    pub detail: String,
}

/// True when every check passed.
pub fn all_pass(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn check(name: &'static str, body: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match body() {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn binom(n: u64, k: u64) -> f64 {
    let mut v = 1.0f64;
    for j in 0..k {
        v = v * (n - j) as f64 / (j + 1) as f64;
    }
    v
}

/// Runs the full deterministic suite and returns one result per check.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("mde_golden_point", || {
            // At z = 0, w = i the fixed point is m = i(sqrt(5)-1)/2,
            // u = (3-sqrt(5))/2.
            let sol = mde::solve_m(C64::new(0.0, 0.0), C64::new(0.0, 1.0))
                .map_err(|e| e.to_string())?;
            let golden_m = C64::new(0.0, (5.0f64.sqrt() - 1.0) / 2.0);
            let golden_u = C64::new((3.0 - 5.0f64.sqrt()) / 2.0, 0.0);
            let dm = (sol.m - golden_m).norm();
            let du = (sol.u - golden_u).norm();
            let drho = (sol.rho - golden_m.im / std::f64::consts::PI).abs();
            if dm < 1e-10 && du < 1e-10 && drho < 1e-10 && sol.residual <= 1e-12 {
                Ok(format!("|dm| = {dm:.2e}, |du| = {du:.2e}"))
            } else {
                Err(format!(
                    "m = {}, u = {}, rho = {}, residual = {:.2e}",
                    sol.m, sol.u, sol.rho, sol.residual
                ))
            }
        }),
        check("mde_residual_grid", || {
            let mut rng = StreamKey::new(0x5E1F, 0, 0).rng();
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let z = C64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
                let w = C64::new(
                    rng.random_range(-2.0..2.0),
                    10f64.powf(rng.random_range(-6.0..1.0)),
                );
                let sol = mde::solve_m(z, w).map_err(|e| e.to_string())?;
                worst = worst.max(sol.residual);
            }
            if worst <= 1e-12 {
                Ok(format!("max residual {worst:.2e} over 100 points"))
            } else {
                Err(format!("max residual {worst:.2e} exceeds 1e-12"))
            }
        }),
        check("density_origin_closed_form", || {
            let mut worst = 0.0f64;
            for k in 0..10 {
                let r = 0.095 * k as f64;
                let z = C64::from_polar(r, 0.7 * k as f64);
                let closed = (1.0 - z.norm_sqr()).sqrt() / std::f64::consts::PI;
                worst = worst.max((mde::rho_at_zero(z) - closed).abs());
            }
            if worst <= 1e-8 {
                Ok(format!("max deviation {worst:.2e}"))
            } else {
                Err(format!("max deviation {worst:.2e} exceeds 1e-8"))
            }
        }),
        check("mde_saturation_near_axis", || {
            // As eta -> 0 inside the disk, |m|^2 + |u|^2 |z|^2 -> 1.
            let mut worst = 0.0f64;
            for &r in &[0.0, 0.3, 0.6, 0.9] {
                let z = C64::from_polar(r, 0.4);
                let sol =
                    mde::solve_m(z, C64::new(0.0, 1e-6)).map_err(|e| e.to_string())?;
                let s = sol.m.norm_sqr() + sol.u.norm_sqr() * z.norm_sqr();
                worst = worst.max((s - 1.0).abs());
            }
            if worst <= 1e-4 {
                Ok(format!("max |saturation - 1| = {worst:.2e}"))
            } else {
                Err(format!("saturation defect {worst:.2e} exceeds 1e-4"))
            }
        }),
        check("edges_bracket_support", || {
            let z = C64::new(0.5, 0.0);
            let e = mde::edges(z);
            let top = e.e_plus.sqrt();
            let inside = mde::rho_real_axis(z, 0.9 * top);
            let outside = mde::rho_real_axis(z, 1.05 * top);
            let origin = mde::edges(C64::new(0.0, 0.0));
            if inside > 0.0 && outside == 0.0 && (origin.e_plus - 4.0).abs() < 1e-10 {
                Ok(format!(
                    "support edge at {top:.6}; rho inside {inside:.4}, outside {outside}"
                ))
            } else {
                Err(format!(
                    "edge {top}, rho(0.9 edge) = {inside}, rho(1.05 edge) = {outside}, \
                     e_plus(0) = {}",
                    origin.e_plus
                ))
            }
        }),
        check("stability_beta_pair_vs_4x4", || {
            let mut rng = StreamKey::new(0xBE7A, 0, 0).rng();
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let z1 = C64::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
                let z2 = C64::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
                let w1 = C64::new(0.0, 10f64.powf(rng.random_range(-4.0..0.5)));
                let w2 = C64::new(0.0, 10f64.powf(rng.random_range(-4.0..0.5)));
                let s1 = mde::solve_m(z1, w1).map_err(|e| e.to_string())?;
                let s2 = mde::solve_m(z2, w2).map_err(|e| e.to_string())?;
                let pair = stability::nontrivial_pair(&s1, &s2);
                let eigs = stability::build_pair(&s1, &s2).eigenvalues();
                for beta in [pair.beta, pair.beta_star] {
                    let d = eigs
                        .iter()
                        .map(|e| (e - beta).norm())
                        .fold(f64::INFINITY, f64::min);
                    worst = worst.max(d);
                }
            }
            if worst <= 1e-10 {
                Ok(format!("max |beta - eig| = {worst:.2e} over 20 pairs"))
            } else {
                Err(format!("beta pair misses the 4x4 spectrum by {worst:.2e}"))
            }
        }),
        check("expectation_correction_dual_forms", || {
            let mut rng = StreamKey::new(0xD0A1, 0, 0).rng();
            let mut worst = 0.0f64;
            let mut used = 0usize;
            while used < 100 {
                let z = C64::new(rng.random_range(-1.4..1.4), rng.random_range(-1.4..1.4));
                let eta = 10f64.powf(rng.random_range(-3.0..0.7));
                match stability::expectation_correction(z, eta, 0.0, 1) {
                    Ok(c) => {
                        worst = worst.max((c.log_term - c.log_term_rational).norm());
                        used += 1;
                    }
                    Err(_) => continue, // degenerate log argument: skip the point
                }
            }
            if worst <= 1e-8 {
                Ok(format!("max |derivative - rational| = {worst:.2e}"))
            } else {
                Err(format!("dual forms differ by {worst:.2e}"))
            }
        }),
        check("eta_integral_closed_form", || {
            let mut worst = 0.0f64;
            for &z in &[C64::new(0.3, 0.4), C64::new(1.4, 0.3)] {
                let integrand =
                    |eta: f64| -> C64 {
                        stability::expectation_correction(z, eta, 0.0, 1)
                            .map(|c| c.log_term)
                            .unwrap_or_default()
                    };
                let mut total = C64::new(0.0, 0.0);
                total.re += quad::adaptive(|e| integrand(e).re, 1e-9, 1.0, 1e-8, 4000)
                    .map_err(|e| e.to_string())?;
                total.im += quad::adaptive(|e| integrand(e).im, 1e-9, 1.0, 1e-8, 4000)
                    .map_err(|e| e.to_string())?;
                total.re += quad::adaptive(|t| integrand(1.0 / t).re / (t * t), 1e-4, 1.0, 1e-8, 4000)
                    .map_err(|e| e.to_string())?;
                total.im += quad::adaptive(|t| integrand(1.0 / t).im / (t * t), 1e-4, 1.0, 1e-8, 4000)
                    .map_err(|e| e.to_string())?;
                let closed = stability::log_term_eta_integral(z, 1).map_err(|e| e.to_string())?;
                worst = worst.max((total - closed).norm());
            }
            if worst <= 1e-4 {
                Ok(format!("max |numeric - closed| = {worst:.2e}"))
            } else {
                Err(format!("eta-integral mismatch {worst:.2e}"))
            }
        }),
        check("polynomial_axis_arcsine_integrals", || {
            let mut worst = 0.0f64;
            for k in [2u32, 4, 6, 8] {
                let f = TestFunction::monomial(k);
                let e = cltpred::expectation_e(&f, 0.0, 100);
                let arcsine_closed = 2f64.powi(-(k as i32)) * binom(k as u64 - 1, k as u64 / 2);
                let axis_closed = 0.5 - arcsine_closed;
                worst = worst.max((e.terms.arcsine.re - arcsine_closed).abs());
                worst = worst.max((e.terms.axis.re - axis_closed).abs());
            }
            if worst <= 1e-4 {
                Ok(format!("max integral deviation {worst:.2e} over k in 2..8"))
            } else {
                Err(format!("integral deviation {worst:.2e} exceeds 1e-4"))
            }
        }),
        check("monomial_expectations", || {
            let mut worst = 0.0f64;
            for k in 1u32..=8 {
                let f = TestFunction::monomial(k);
                let e = cltpred::expectation_e(&f, 0.0, 100);
                let want = if k % 2 == 0 { 1.0 } else { 0.0 };
                worst = worst.max((e.value - C64::new(want, 0.0)).norm());
            }
            if worst <= 1e-4 {
                Ok(format!("max |E(z^k) - target| = {worst:.2e}, k = 1..8"))
            } else {
                Err(format!("monomial expectation off by {worst:.2e}"))
            }
        }),
        check("predict_square_gaussian", || {
            let f = TestFunction::parse("z^2").map_err(|e| e.to_string())?;
            let p = cltpred::predict(&f, 0.0, 200).map_err(|e| e.to_string())?;
            let de = (p.e_f - C64::new(1.0, 0.0)).norm();
            let dv = (p.v_f - 2.0).abs();
            if de <= 1e-4 && dv <= 1e-4 {
                Ok(format!("E = {:.6}, V = {:.6}", p.e_f.re, p.v_f))
            } else {
                Err(format!("E = {}, V = {} (want 1, 2)", p.e_f, p.v_f))
            }
        }),
        check("variance_affine_in_kappa4", || {
            let f = TestFunction::abs_squared();
            let v0 = cltpred::variance_v(&f, 0.0).map_err(|e| e.to_string())?;
            let v1 = cltpred::variance_v(&f, 1.0).map_err(|e| e.to_string())?;
            let vm2 = cltpred::variance_v(&f, -2.0).map_err(|e| e.to_string())?;
            let affine_defect = (vm2 - v0 + 2.0 * (v1 - v0)).abs();
            let slope = v1 - v0;
            if affine_defect <= 1e-10 && slope.abs() > 1e-3 {
                Ok(format!(
                    "kappa4 slope {slope:.6}, affinity defect {affine_defect:.2e}"
                ))
            } else {
                Err(format!(
                    "V(-2) = {vm2}, V(0) = {v0}, V(1) = {v1}: defect {affine_defect:.2e}"
                ))
            }
        }),
        check("drift_forms_agree", || {
            let xs: Vec<f64> = (1..=12).map(|i| 0.08 * i as f64 + 0.003 * (i * i) as f64).collect();
            let state = DbmState::new(xs, ProcessKind::Raw).map_err(|e| e.to_string())?;
            let mut rng = StreamKey::new(0xDF01, 0, 0).rng();
            let mut lambda = nalgebra::DMatrix::<f64>::zeros(12, 12);
            for i in 0..12 {
                for j in 0..=i {
                    let v = rng.random_range(-0.08..0.08);
                    lambda[(i, j)] = v;
                    lambda[(j, i)] = v;
                }
            }
            let model = CorrelationModel::from_lambda(lambda, 1.0, dbm::DEFAULT_OMEGA_R);
            let a = dbm::drift(&state, &model).map_err(|e| e.to_string())?;
            let b = dbm::drift_explicit(&state, &model).map_err(|e| e.to_string())?;
            let worst = (a - b).abs().max();
            if worst <= 1e-12 {
                Ok(format!("max |signed - explicit| = {worst:.2e}"))
            } else {
                Err(format!("drift routes differ by {worst:.2e}"))
            }
        }),
        check("girko_split_recombination", || {
            let spec = EnsembleSpec {
                symmetry: Symmetry::Real,
                law: EntryLaw::Gaussian,
                n: 8,
                seed: 0x61D0,
            };
            let x = crate::ensemble::sample_iid(&spec, 0).map_err(|e| e.to_string())?;
            let f = TestFunction::bump(C64::new(0.1, -0.2), 0.5);
            let grid = cltpred::ZGrid::covering(&f, 24);
            let (cells, area) = cltpred::girko_cells(&x.data, &grid).map_err(|e| e.to_string())?;
            let split = cltpred::GirkoSplit::standard(8);
            let est = cltpred::girko_evaluate(&cells, area, &f, &split, 8, f64::INFINITY)
                .map_err(|e| e.to_string())?;
            let recombined = est.i_segments[0] + est.i_segments[1] + est.i_segments[2] + est.j_term;
            let defect = (recombined - est.value).norm() / est.value.norm().max(1.0);
            if defect <= 1e-10 {
                Ok(format!("segment recombination defect {defect:.2e}"))
            } else {
                Err(format!("segments + j-term miss the estimate by {defect:.2e}"))
            }
        }),
        check("density_correction_coefficient", || {
            let checks =
                harness::edelman_correction_checks(500, &[0.2, 0.3]).map_err(|e| e.to_string())?;
            let worst = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
            if checks.iter().all(|c| c.fitted < 0.0) && worst <= 0.5 {
                Ok(format!("max relative error {worst:.3} vs -1/(4 pi y^2)"))
            } else {
                Err(format!("correction fit off: max rel err {worst:.3}"))
            }
        }),
        check("quantiles_monotone", || {
            let q = mde::quantiles(C64::new(0.3, 0.4), 50, 50).map_err(|e| e.to_string())?;
            let gammas = &q.gamma;
            let ok = gammas.windows(2).all(|w| w[1] > w[0]) && gammas[0] > 0.0;
            if ok {
                Ok(format!(
                    "50 quantiles increasing on ({:.4}, {:.4})",
                    gammas[0],
                    gammas[gammas.len() - 1]
                ))
            } else {
                Err("quantiles not strictly increasing".into())
            }
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_deterministic_check_passes() {
        let results = run_all();
        for r in &results {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
        }
        assert!(all_pass(&results));
        assert_eq!(results.len(), 16);
    }

    #[test]
    fn binomials() {
        assert_eq!(binom(1, 1), 1.0);
        assert_eq!(binom(3, 2), 3.0);
        assert_eq!(binom(5, 3), 10.0);
        assert_eq!(binom(7, 4), 35.0);
    }
}
