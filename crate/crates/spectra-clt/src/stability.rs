//! Stability analysis of the self-consistent equation and the deterministic
//! inputs of the resolvent central limit theorem.
//!
//! The resolvent of the Hermitization H^z concentrates around the block
//! matrix M with entries (m, -zu; -conj(z)u, m). Perturbations of the
//! self-consistent equation are governed by the linear map 1 - M S[.] M,
//! where S averages the diagonal blocks and swaps them. Because S only sees
//! the four block traces, the map acts on 2x2 matrices after a partial trace
//! and is represented here as an explicit 4x4 matrix in the fixed coordinate
//! order (a, d, b, c) for the block matrix [[a, b], [c, d]].
//!
//! The same machinery with two spectral parameters, 1 - M1 S[.] M2, controls
//! products of two resolvents G1 B G2 and yields their deterministic
//! approximation. From these operators the module assembles the scalar
//! quantities entering the central limit theorem for resolvent traces: the
//! pair variance V, its symmetrization V-hat, the kurtosis weight U, and the
//! subleading correction to the expected trace.

use nalgebra::{Matrix2, Matrix4, Vector4};
use thiserror::Error;

use crate::mde::{self, EtaDerivatives, MdeError, MdeSolution};
use crate::C64;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("stability operator is numerically singular (eigenvalues {beta:?}, {beta_star:?})")]
    Singular { beta: C64, beta_star: C64 },
    #[error("variance denominator vanishes at the requested configuration")]
    DegenerateVariance,
    #[error("log argument vanishes at z={z} (real shift inside the bulk)")]
    DegenerateLogArgument { z: C64 },
    #[error(transparent)]
    Mde(#[from] MdeError),
}

/// Block traces (a, d, b, c) of a 2n x 2n matrix [[a, b], [c, d]] whose
/// blocks are scalar multiples of the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceVector {
    pub a: C64,
    pub d: C64,
    pub b: C64,
    pub c: C64,
}

impl TraceVector {
    pub const fn new(a: C64, d: C64, b: C64, c: C64) -> Self {
        Self { a, d, b, c }
    }

    /// Identity block matrix.
    pub fn identity() -> Self {
        Self::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// Projection onto the first block, diag(1, 0).
    pub fn e1() -> Self {
        Self::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// Projection onto the second block, diag(0, 1).
    pub fn e2() -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// Antisymmetric combination (e1 - e2)/sqrt(2), an eigenvector of the
    /// stability operator for every (z, w).
    pub fn e_minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::new(C64::new(s, 0.0), C64::new(-s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn as_matrix(&self) -> Matrix2<C64> {
        Matrix2::new(self.a, self.b, self.c, self.d)
    }

    pub fn from_matrix(m: &Matrix2<C64>) -> Self {
        Self::new(m[(0, 0)], m[(1, 1)], m[(0, 1)], m[(1, 0)])
    }

    fn as_vector(&self) -> Vector4<C64> {
        Vector4::new(self.a, self.d, self.b, self.c)
    }

    fn from_vector(v: &Vector4<C64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Normalized trace (a + d)/2, matching (2n)^{-1} Tr on block matrices.
    pub fn trace(&self) -> C64 {
        0.5 * (self.a + self.d)
    }

    /// Inner product (2n)^{-1} Tr(X^* Y) = (1/2) sum conj(x_i) y_i.
    pub fn inner(&self, other: &Self) -> C64 {
        0.5 * (self.a.conj() * other.a
            + self.d.conj() * other.d
            + self.b.conj() * other.b
            + self.c.conj() * other.c)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.sqrt()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.a * s, self.d * s, self.b * s, self.c * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.a + other.a, self.d + other.d, self.b + other.b, self.c + other.c)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.a - other.a, self.d - other.d, self.b - other.b, self.c - other.c)
    }
}

/// Which operator a 4x4 stability matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// 1 - M S[.] M at a single (z, w).
    Single,
    /// 1 - M1 S[.] M2 across two spectral parameters.
    Pair,
}

/// Explicit 4x4 representation of a stability operator together with the
/// solutions it was built from.
#[derive(Debug, Clone)]
pub struct StabilityOperator {
    pub kind: OperatorKind,
    pub matrix: Matrix4<C64>,
    pub sol1: MdeSolution,
    pub sol2: MdeSolution,
}

/// The two eigenvalues of the stability operator beyond the double
/// eigenvalue 1.
#[derive(Debug, Clone, Copy)]
pub struct BetaPair {
    pub beta: C64,
    pub beta_star: C64,
}

impl BetaPair {
    pub fn min_abs(&self) -> f64 {
        self.beta.norm().min(self.beta_star.norm())
    }

    pub fn min_re(&self) -> f64 {
        self.beta.re.min(self.beta_star.re)
    }
}

/// Deterministic block matrix M = [[m, -zu], [-conj(z)u, m]].
pub fn m_matrix(sol: &MdeSolution) -> Matrix2<C64> {
    Matrix2::new(sol.m, -sol.z * sol.u, -sol.z.conj() * sol.u, sol.m)
}

/// Block-trace action of the covariance map: S[[a,b],[c,d]] = diag(d, a).
pub fn covariance_map(t: &TraceVector) -> TraceVector {
    TraceVector::new(t.d, t.a, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
}

fn pair_matrix(s1: &MdeSolution, s2: &MdeSolution) -> Matrix4<C64> {
    let (m1, m2) = (s1.m, s2.m);
    let (u1, u2) = (s1.u, s2.u);
    let (z1, z2) = (s1.z, s2.z);
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    // rows/cols in (a, d, b, c) order; 1 - (input -> M1 diag(d, a) M2)
    Matrix4::new(
        one - z1 * z2.conj() * u1 * u2, -m1 * m2, zero, zero,
        -m1 * m2, one - z1.conj() * z2 * u1 * u2, zero, zero,
        z1 * u1 * m2, m1 * z2 * u2, one, zero,
        m1 * z2.conj() * u2, z1.conj() * u1 * m2, zero, one,
    )
}

/// Stability operator 1 - M S[.] M at one spectral parameter.
pub fn build_single(sol: &MdeSolution) -> StabilityOperator {
    StabilityOperator {
        kind: OperatorKind::Single,
        matrix: pair_matrix(sol, sol),
        sol1: *sol,
        sol2: *sol,
    }
}

/// Two-parameter stability operator 1 - M1 S[.] M2.
pub fn build_pair(sol1: &MdeSolution, sol2: &MdeSolution) -> StabilityOperator {
    StabilityOperator {
        kind: OperatorKind::Pair,
        matrix: pair_matrix(sol1, sol2),
        sol1: *sol1,
        sol2: *sol2,
    }
}

impl StabilityOperator {
    pub fn apply(&self, t: &TraceVector) -> TraceVector {
        TraceVector::from_vector(&(self.matrix * t.as_vector()))
    }

    /// Adjoint action with respect to the normalized trace inner product;
    /// that product is a positive multiple of the standard one, so the
    /// adjoint is the conjugate transpose of the 4x4 matrix.
    pub fn apply_adjoint(&self, t: &TraceVector) -> TraceVector {
        TraceVector::from_vector(&(self.matrix.adjoint() * t.as_vector()))
    }

    /// All four eigenvalues. The matrix is block lower-triangular with
    /// identity lower-right block, so the spectrum is {1, 1} plus the
    /// eigenvalues of the upper-left 2x2, which is exactly the beta pair.
    pub fn eigenvalues(&self) -> [C64; 4] {
        let pair = nontrivial_pair(&self.sol1, &self.sol2);
        [C64::new(1.0, 0.0), C64::new(1.0, 0.0), pair.beta, pair.beta_star]
    }

    pub fn beta_pair(&self) -> BetaPair {
        nontrivial_pair(&self.sol1, &self.sol2)
    }

    /// Solve this operator against a block-trace right-hand side.
    pub fn solve(&self, rhs: &TraceVector) -> Result<TraceVector, StabilityError> {
        self.check_invertible()?;
        let sol = self
            .matrix
            .lu()
            .solve(&rhs.as_vector())
            .ok_or_else(|| self.singular_error())?;
        Ok(TraceVector::from_vector(&sol))
    }

    /// Solve the adjoint operator against a block-trace right-hand side.
    pub fn solve_adjoint(&self, rhs: &TraceVector) -> Result<TraceVector, StabilityError> {
        self.check_invertible()?;
        let sol = self
            .matrix
            .adjoint()
            .lu()
            .solve(&rhs.as_vector())
            .ok_or_else(|| self.singular_error())?;
        Ok(TraceVector::from_vector(&sol))
    }

    fn check_invertible(&self) -> Result<(), StabilityError> {
        let min_sv = self
            .matrix
            .map(|e| e)
            .svd(false, false)
            .singular_values
            .iter()
            .fold(f64::INFINITY, |acc, &s| acc.min(s));
        if min_sv < 1e-10 {
            return Err(self.singular_error());
        }
        Ok(())
    }

    fn singular_error(&self) -> StabilityError {
        let pair = self.beta_pair();
        StabilityError::Singular { beta: pair.beta, beta_star: pair.beta_star }
    }
}

/// Nontrivial eigenvalue pair {1 - tau, 1 - tau*} where tau, tau* are the
/// eigenvalues of the 2x2 reduction
/// R = [[z1 conj(z2) u1 u2, m1 m2], [m1 m2, conj(z1) z2 u1 u2]].
///
/// For a matrix [[alpha, q], [q, delta]] the eigenvalues are
/// (alpha+delta)/2 +- sqrt(((alpha-delta)/2)^2 + q^2), with
/// (alpha+delta)/2 = u1 u2 Re(z1 conj z2) and
/// (alpha-delta)/2 = i u1 u2 Im(z1 conj z2).
pub fn nontrivial_pair(sol1: &MdeSolution, sol2: &MdeSolution) -> BetaPair {
    let uu = sol1.u * sol2.u;
    let zz = sol1.z * sol2.z.conj();
    let q = sol1.m * sol2.m;
    let half_sum = uu * zz.re;
    let half_diff = uu * C64::new(0.0, zz.im);
    let disc = (half_diff * half_diff + q * q).sqrt();
    BetaPair {
        beta: C64::new(1.0, 0.0) - half_sum - disc,
        beta_star: C64::new(1.0, 0.0) - half_sum + disc,
    }
}

/// Deterministic approximation to the block traces of G1 B G2 for a
/// block-constant deterministic matrix B: the two-parameter stability
/// operator solved against M1 B M2.
pub fn two_resolvent_m(
    sol1: &MdeSolution,
    sol2: &MdeSolution,
    b: &TraceVector,
) -> Result<TraceVector, StabilityError> {
    let rhs = m_matrix(sol1) * b.as_matrix() * m_matrix(sol2);
    build_pair(sol1, sol2).solve(&TraceVector::from_matrix(&rhs))
}

/// Weight matrix A converting the renormalized first-order fluctuation term
/// into the trace fluctuation of the resolvent: the adjoint stability
/// operator is solved against the identity, the result conjugate-transposed
/// and right-multiplied by M.
pub fn a_vector(sol: &MdeSolution) -> Result<TraceVector, StabilityError> {
    let y = build_single(sol).solve_adjoint(&TraceVector::identity())?;
    let a = y.as_matrix().adjoint() * m_matrix(sol);
    Ok(TraceVector::from_matrix(&a))
}

/// Kurtosis weight U(z, eta) = (i/sqrt(2)) d/d eta m^2.
pub fn u_factor(z: C64, eta: f64) -> Result<C64, StabilityError> {
    let d = mde::m_eta_derivatives(z, eta)?;
    Ok(C64::new(0.0, 1.0) / 2.0f64.sqrt() * 2.0 * d.sol.m * d.dm)
}

/// Pair variance of resolvent traces,
/// V = (1/2) d/d eta1 d/d eta2 log F with
/// F = 1 + (u1 u2 |z1| |z2|)^2 - m1^2 m2^2 - 2 u1 u2 Re(z1 conj(z2)),
/// assembled from implicit first derivatives of m and u.
pub fn variance_v(z1: C64, z2: C64, eta1: f64, eta2: f64) -> Result<C64, StabilityError> {
    let d1 = mde::m_eta_derivatives(z1, eta1)?;
    let d2 = mde::m_eta_derivatives(z2, eta2)?;
    variance_v_from(&d1, &d2, z1, z2)
}

fn variance_v_from(
    d1: &EtaDerivatives,
    d2: &EtaDerivatives,
    z1: C64,
    z2: C64,
) -> Result<C64, StabilityError> {
    let (m1, u1, m1p, u1p) = (d1.sol.m, d1.sol.u, d1.dm, d1.du);
    let (m2, u2, m2p, u2p) = (d2.sol.m, d2.sol.u, d2.dm, d2.du);
    let s = z1.norm_sqr() * z2.norm_sqr();
    let r = (z1 * z2.conj()).re;
    let f = C64::new(1.0, 0.0) + u1 * u1 * u2 * u2 * s - m1 * m1 * m2 * m2 - 2.0 * u1 * u2 * r;
    if f.norm() < 1e-14 {
        return Err(StabilityError::DegenerateVariance);
    }
    let f1 = 2.0 * u1 * u1p * u2 * u2 * s - 2.0 * m1 * m1p * m2 * m2 - 2.0 * u1p * u2 * r;
    let f2 = 2.0 * u1 * u1 * u2 * u2p * s - 2.0 * m1 * m1 * m2 * m2p - 2.0 * u1 * u2p * r;
    let f12 = 4.0 * u1 * u1p * u2 * u2p * s - 4.0 * m1 * m1p * m2 * m2p - 2.0 * u1p * u2p * r;
    Ok(0.5 * (f12 / f - f1 * f2 / (f * f)))
}

/// Symmetrized pair variance V(z1, z2) + V(z1, conj(z2)).
pub fn variance_v_hat(z1: C64, z2: C64, eta1: f64, eta2: f64) -> Result<C64, StabilityError> {
    Ok(variance_v(z1, z2, eta1, eta2)? + variance_v(z1, z2.conj(), eta1, eta2)?)
}

/// Subleading correction to the expected normalized resolvent trace at
/// w = i eta, split into its kurtosis part and its log-derivative part.
#[derive(Debug, Clone, Copy)]
pub struct ExpectationCorrection {
    /// -(i kappa4 / 4n) d/d eta m^4
    pub kurtosis_term: C64,
    /// (i / 4n) d/d eta log(1 - u^2 + 2u^3|z|^2 - u^2(z^2 + conj(z)^2))
    pub log_term: C64,
    /// The same log-derivative evaluated through the closed rational form
    /// m (m^4 + m^2 u^2 |z|^2 - 2 u^4 |z|^4 + 2 u^2 (x^2 - y^2)) /
    /// [n (1 - m^2 - u^2 |z|^2)(1 + u^4 |z|^4 - m^4 - 2 u^2 (x^2 - y^2))];
    /// kept as a cross-check of the derivative route.
    pub log_term_rational: C64,
    /// kurtosis_term + log_term
    pub value: C64,
}

/// Compute the expected-trace correction at z, w = i eta.
pub fn expectation_correction(
    z: C64,
    eta: f64,
    kappa4: f64,
    n: usize,
) -> Result<ExpectationCorrection, StabilityError> {
    let d = mde::m_eta_derivatives(z, eta)?;
    let (m, u, mp, up) = (d.sol.m, d.sol.u, d.dm, d.du);
    let nn = n as f64;
    let i = C64::new(0.0, 1.0);
    let (x, y) = (z.re, z.im);
    let zsq = z.norm_sqr();
    let xy = x * x - y * y;
    let kurtosis_term = -(i * kappa4 / (4.0 * nn)) * 4.0 * m * m * m * mp;
    let log_arg = C64::new(1.0, 0.0) - u * u + 2.0 * u * u * u * zsq - 2.0 * u * u * xy;
    if log_arg.norm() < 1e-14 {
        return Err(StabilityError::DegenerateLogArgument { z });
    }
    let log_arg_deriv = -2.0 * u * up * (C64::new(1.0, 0.0) - 3.0 * u * zsq + 2.0 * xy);
    let log_term = i / (4.0 * nn) * log_arg_deriv / log_arg;
    let num = m * m * m * m + m * m * u * u * zsq - 2.0 * u * u * u * u * zsq * zsq
        + 2.0 * u * u * xy;
    let den1 = C64::new(1.0, 0.0) - m * m - u * u * zsq;
    let den2 = C64::new(1.0, 0.0) + u * u * u * u * zsq * zsq - m * m * m * m
        - 2.0 * u * u * xy;
    let log_term_rational = m / nn * num / (den1 * den2);
    Ok(ExpectationCorrection {
        kurtosis_term,
        log_term,
        log_term_rational,
        value: kurtosis_term + log_term,
    })
}

/// Closed form of the eta-integral of the log-derivative part of the
/// expected-trace correction over (0, infinity):
/// -(i/4n) log(4 y^2) inside the unit disk, -(i/4n) log(|z^2-1|^2 / |z|^4)
/// outside. Errors when the limiting log argument vanishes (real z inside
/// the disk, or |z| = 1).
pub fn log_term_eta_integral(z: C64, n: usize) -> Result<C64, StabilityError> {
    let nn = n as f64;
    let i = C64::new(0.0, 1.0);
    let limit = if z.norm_sqr() <= 1.0 {
        4.0 * z.im * z.im
    } else {
        let z2 = z * z - C64::new(1.0, 0.0);
        z2.norm_sqr() / z.norm_sqr().powi(2)
    };
    if limit < 1e-14 {
        return Err(StabilityError::DegenerateLogArgument { z });
    }
    Ok(-(i / (4.0 * nn)) * limit.ln())
}
