//! Hermitized spectra of shifted matrices.
//!
//! For an n x n matrix X and a complex shift z, the 2n x 2n Hermitization
//!
//! ```text
//!     H^z = [ 0        X - z ]
//!           [ (X-z)*   0     ]
//! ```
//!
//! has a spectrum symmetric about zero: eigenvalues come in pairs +-lambda_i
//! where the lambda_i >= 0 are the singular values of X - z, and eigenvectors
//! come in the block form w_{+-i} = (u_i, +-v_i) with equal block masses
//! ||u_i||^2 = ||v_i||^2 = 1/2. This module computes that decomposition,
//! eigenvector overlaps between decompositions at different shifts, resolvent
//! traces, and eigenvalue-location diagnostics against the deterministic
//! quantiles from [`crate::mde`].
//!
//! The eigenproblem is solved on the Hermitization itself rather than via an
//! SVD of X - z, because downstream consumers (overlap matrices, eigenvector
//! flows) need the eigenvectors in the (u, v) block form.

use std::io;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::MatrixData;
use crate::mde::Quantiles;
use crate::rng::StreamKey;
use crate::C64;

/// Eigenvalue gap below which a decomposition is considered degenerate and the
/// base matrix is re-randomized by a tiny Gaussian perturbation.
const DEGENERATE_GAP: f64 = 1e-12;

/// Scale of the Gaussian perturbation applied to degenerate base matrices.
const PERTURBATION_SCALE: f64 = 1e-12;

/// Fixed stream for the degeneracy-breaking perturbation, so that repeated
/// decompositions of the same input are bitwise reproducible.
const PERTURBATION_STREAM: u64 = 0x5045_5254;

/// Errors from spectral operations.
#[derive(Debug, thiserror::Error)]
pub enum SpectralError {
    /// The iterative eigensolver or SVD did not converge.
    #[error("eigensolver failed to converge on a {size}x{size} matrix")]
    NonConvergent { size: usize },
    /// Two decompositions with different base dimensions were combined.
    #[error("dimension mismatch: {n1} vs {n2}")]
    DimensionMismatch { n1: usize, n2: usize },
    /// A requested index window exceeds the available indices.
    #[error("index window {window} exceeds dimension {n}")]
    WindowTooLarge { window: usize, n: usize },
    /// A spectral parameter that must lie in the upper half plane was not positive.
    #[error("spectral scale eta must be positive, got {eta}")]
    NonPositiveEta { eta: f64 },
    /// An operation that exploits conjugation symmetry of real base matrices
    /// was invoked on a complex base matrix.
    #[error("operation requires a decomposition of a real base matrix")]
    ComplexBase,
    /// Quantiles and decomposition were computed at different shifts.
    #[error("quantiles at z = {expected} do not match decomposition at z = {got}")]
    MismatchedPoint { expected: C64, got: C64 },
}

// ---------------------------------------------------------------------------
// Hermitization
// ---------------------------------------------------------------------------

/// The 2n x 2n Hermitian block matrix associated with X - z.
///
/// The base matrix is stored in its compact n x n form; the full block matrix
/// is materialized on demand by [`Hermitization::matrix`].
#[derive(Debug, Clone)]
pub struct Hermitization {
    /// Spectral shift applied to the base matrix.
    pub z: C64,
    /// Base dimension n (the block matrix is 2n x 2n).
    pub n: usize,
    x: MatrixData,
}

/// Builds the Hermitization of X - z.
pub fn hermitize(x: &MatrixData, z: C64) -> Hermitization {
    Hermitization {
        z,
        n: x.n(),
        x: x.clone(),
    }
}

impl Hermitization {
    /// Whether the base matrix X has real entries.
    pub fn base_real(&self) -> bool {
        self.x.is_real()
    }

    /// The shifted block X - z as a complex dense matrix.
    pub fn shifted(&self) -> DMatrix<C64> {
        let mut xz = self.x.to_complex();
        for i in 0..self.n {
            xz[(i, i)] -= self.z;
        }
        xz
    }

    /// Materializes the full 2n x 2n Hermitian matrix.
    ///
    /// The diagonal blocks are exactly zero and the off-diagonal blocks are
    /// X - z and its conjugate transpose, so the result is Hermitian to
    /// machine precision by construction.
    pub fn matrix(&self) -> DMatrix<C64> {
        let n = self.n;
        let xz = self.shifted();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            for i in 0..n {
                let e = xz[(i, j)];
                h[(i, n + j)] = e;
                h[(n + j, i)] = e.conj();
            }
        }
        h
    }

    /// The full block matrix in real form, available when both the base
    /// matrix and the shift are real.
    pub fn real_matrix(&self) -> Option<DMatrix<f64>> {
        if self.z.im != 0.0 {
            return None;
        }
        let xr = self.x.as_real()?;
        let n = self.n;
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            for i in 0..n {
                let mut e = xr[(i, j)];
                if i == j {
                    e -= self.z.re;
                }
                h[(i, n + j)] = e;
                h[(n + j, i)] = e;
            }
        }
        Some(h)
    }
}

// ---------------------------------------------------------------------------
// Spectral decomposition
// ---------------------------------------------------------------------------

/// Eigendecomposition of a Hermitization, stored through its positive side.
///
/// Signed indices i in {-n, ..., -1, 1, ..., n} label the full spectrum via
/// lambda_{-i} = -lambda_i (exact by construction) and w_{+-i} = (u_i, +-v_i).
/// Only the positive side is stored: `lambdas[k]`, column k of `u` and column
/// k of `v` hold lambda_{k+1}, u_{k+1}, v_{k+1}.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Shift at which the Hermitization was built.
    pub z: C64,
    /// Base dimension.
    pub n: usize,
    /// Positive eigenvalues in ascending order, length n.
    pub lambdas: Vec<f64>,
    /// First blocks of the positive-index eigenvectors, one column per index.
    pub u: DMatrix<C64>,
    /// Second blocks of the positive-index eigenvectors, one column per index.
    pub v: DMatrix<C64>,
    /// Whether the base matrix had real entries (enables conjugation shortcuts).
    pub base_real: bool,
    /// True if a degeneracy-breaking perturbation was applied before solving.
    pub perturbed: bool,
}

impl SpectralDecomposition {
    /// Eigenvalue at a signed index (i != 0, |i| <= n).
    pub fn lambda(&self, i: i64) -> f64 {
        assert!(i != 0 && i.unsigned_abs() as usize <= self.n, "index {i} out of range");
        let l = self.lambdas[i.unsigned_abs() as usize - 1];
        if i > 0 {
            l
        } else {
            -l
        }
    }

    /// All 2n eigenvalues in ascending order (indices -n..-1 then 1..n).
    pub fn signed_lambdas(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.n);
        for k in (0..self.n).rev() {
            out.push(-self.lambdas[k]);
        }
        out.extend_from_slice(&self.lambdas);
        out
    }

    /// Spectral norm of the Hermitization, i.e. the largest eigenvalue.
    pub fn h_norm(&self) -> f64 {
        self.lambdas.last().copied().unwrap_or(0.0)
    }

    /// Full 2n eigenvector at a signed index, in (u, +-v) block form.
    pub fn w(&self, i: i64) -> DVector<C64> {
        assert!(i != 0 && i.unsigned_abs() as usize <= self.n, "index {i} out of range");
        let k = i.unsigned_abs() as usize - 1;
        let sign = if i > 0 { 1.0 } else { -1.0 };
        let mut out = DVector::zeros(2 * self.n);
        for r in 0..self.n {
            out[r] = self.u[(r, k)];
            out[self.n + r] = self.v[(r, k)] * sign;
        }
        out
    }
}

/// Solves the eigenproblem of a Hermitization.
///
/// Eigenvalues are paired and symmetrized exactly; eigenvectors are gauge
/// fixed so the largest-magnitude entry of each u_i is real and positive. If
/// any two eigenvalues are closer than 1e-12, the base matrix is perturbed by
/// a 1e-12-scaled Gaussian (drawn from a fixed stream) and the solve is
/// retried once; the event is reported through the `perturbed` flag. A
/// non-convergent eigensolver is surfaced as an error, never ignored.
pub fn decompose(h: &Hermitization) -> Result<SpectralDecomposition, SpectralError> {
    decompose_inner(h, false)
}

fn decompose_inner(h: &Hermitization, is_retry: bool) -> Result<SpectralDecomposition, SpectralError> {
    let n = h.n;
    let size = 2 * n;
    let (vals, vecs): (DVector<f64>, DMatrix<C64>) = if let Some(hr) = h.real_matrix() {
        let se = nalgebra::SymmetricEigen::try_new(hr, f64::EPSILON, 100_000)
            .ok_or(SpectralError::NonConvergent { size })?;
        (se.eigenvalues, se.eigenvectors.map(|t| C64::new(t, 0.0)))
    } else {
        let se = nalgebra::SymmetricEigen::try_new(h.matrix(), f64::EPSILON, 100_000)
            .ok_or(SpectralError::NonConvergent { size })?;
        (se.eigenvalues, se.eigenvectors)
    };

    let mut perm: Vec<usize> = (0..size).collect();
    perm.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    let sorted: Vec<f64> = perm.iter().map(|&k| vals[k]).collect();

    if !is_retry {
        let min_gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if min_gap < DEGENERATE_GAP {
            let hp = Hermitization {
                z: h.z,
                n,
                x: perturb(&h.x),
            };
            return decompose_inner(&hp, true);
        }
    }

    let mut lambdas = Vec::with_capacity(n);
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for k in 0..n {
        // Average each eigenvalue with the negated mirror partner so the
        // stored positive value represents the exact +- pair.
        lambdas.push(0.5 * (sorted[n + k] - sorted[n - 1 - k]));
        let col = vecs.column(perm[n + k]);

        // Gauge: rotate the phase so the largest-magnitude entry of the first
        // block is real and positive.
        let mut best = 0usize;
        let mut best_mag = 0.0f64;
        for r in 0..n {
            let mag = col[r].norm_sqr();
            if mag > best_mag {
                best_mag = mag;
                best = r;
            }
        }
        let phase = if best_mag > 0.0 {
            let e = col[best];
            e.conj() / e.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for r in 0..n {
            u[(r, k)] = col[r] * phase;
            v[(r, k)] = col[n + r] * phase;
        }
    }

    Ok(SpectralDecomposition {
        z: h.z,
        n,
        lambdas,
        u,
        v,
        base_real: h.base_real(),
        perturbed: is_retry,
    })
}

/// Adds a tiny Gaussian matrix (entry scale 1e-12) of the same kind as the input.
fn perturb(x: &MatrixData) -> MatrixData {
    let n = x.n();
    let mut rng = StreamKey::new(PERTURBATION_STREAM, 0, 0).rng();
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    match x {
        MatrixData::Real(m) => {
            let g = DMatrix::from_fn(n, n, |_, _| PERTURBATION_SCALE * draw());
            MatrixData::Real(m + g)
        }
        MatrixData::Complex(m) => {
            let s = PERTURBATION_SCALE / 2f64.sqrt();
            let g = DMatrix::from_fn(n, n, |_, _| C64::new(s * draw(), s * draw()));
            MatrixData::Complex(m + g)
        }
    }
}

/// Singular values of X - z in ascending order, computed without eigenvectors.
///
/// These are exactly the positive eigenvalues of the Hermitization; the n x n
/// SVD route is much faster when only the spectrum is needed.
pub fn singular_values(x: &MatrixData, z: C64) -> Result<Vec<f64>, SpectralError> {
    let n = x.n();
    let mut sv: Vec<f64> = match (x, z.im == 0.0) {
        (MatrixData::Real(m), true) => {
            let mut a = m.clone();
            for i in 0..n {
                a[(i, i)] -= z.re;
            }
            a.try_svd(false, false, f64::EPSILON, 100_000)
                .ok_or(SpectralError::NonConvergent { size: n })?
                .singular_values
                .iter()
                .copied()
                .collect()
        }
        _ => {
            let a = hermitize(x, z).shifted();
            a.try_svd(false, false, f64::EPSILON, 100_000)
                .ok_or(SpectralError::NonConvergent { size: n })?
                .singular_values
                .iter()
                .copied()
                .collect()
        }
    };
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sv)
}

// ---------------------------------------------------------------------------
// Eigenvector overlaps
// ---------------------------------------------------------------------------

/// Overlap matrix between two decompositions at shifts z and z'.
///
/// For signed indices i, j the entry is
///
/// ```text
///     Theta_{ij} = 4 Re[ <P1 w'_j, P1 w_i> <P2 w_i, P2 w'_j> ]
/// ```
///
/// where P1, P2 project onto the two blocks. The signed structure follows the
/// block form: Theta_{-i,j} = Theta_{i,-j} = -Theta_{ij}. Only the positive
/// quadrant is stored; [`OverlapMatrix::get`] applies the sign rule.
#[derive(Debug, Clone)]
pub struct OverlapMatrix {
    /// Shift of the row decomposition.
    pub z1: C64,
    /// Shift of the column decomposition.
    pub z2: C64,
    /// Base dimension.
    pub n: usize,
    /// Number of positive indices covered (window K: |i|, |j| <= K).
    pub window: usize,
    theta: DMatrix<f64>,
}

impl OverlapMatrix {
    /// Overlap at a signed index pair.
    pub fn get(&self, i: i64, j: i64) -> f64 {
        assert!(
            i != 0 && j != 0,
            "overlap indices are signed and nonzero, got ({i}, {j})"
        );
        let (ai, aj) = (i.unsigned_abs() as usize, j.unsigned_abs() as usize);
        assert!(
            ai <= self.window && aj <= self.window,
            "index ({i}, {j}) outside window {}",
            self.window
        );
        let sign = if (i > 0) == (j > 0) { 1.0 } else { -1.0 };
        sign * self.theta[(ai - 1, aj - 1)]
    }

    /// The positive-index block Theta_{ij}, 1 <= i, j <= window.
    pub fn positive_block(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// Largest absolute overlap over the stored window.
    pub fn max_abs(&self) -> f64 {
        self.theta.iter().fold(0.0f64, |acc, t| acc.max(t.abs()))
    }
}

/// Computes eigenvector overlaps between two decompositions over an index window.
///
/// The window covers signed indices |i|, |j| <= window; pass `n` for the full
/// matrix. Cost is two K x K Gram products over the windowed eigenvector blocks.
pub fn overlaps(
    d1: &SpectralDecomposition,
    d2: &SpectralDecomposition,
    window: usize,
) -> Result<OverlapMatrix, SpectralError> {
    if d1.n != d2.n {
        return Err(SpectralError::DimensionMismatch { n1: d1.n, n2: d2.n });
    }
    if window == 0 || window > d1.n {
        return Err(SpectralError::WindowTooLarge {
            window,
            n: d1.n,
        });
    }
    let u1 = d1.u.columns(0, window);
    let u2 = d2.u.columns(0, window);
    let v1 = d1.v.columns(0, window);
    let v2 = d2.v.columns(0, window);
    // gu[j, i] = <u'_j, u_i>, gv[i, j] = <v_i, v'_j>
    let gu = u2.ad_mul(&u1);
    let gv = v1.ad_mul(&v2);
    let theta = DMatrix::from_fn(window, window, |i, j| 4.0 * (gu[(j, i)] * gv[(i, j)]).re);
    Ok(OverlapMatrix {
        z1: d1.z,
        z2: d2.z,
        n: d1.n,
        window,
        theta,
    })
}

/// Overlaps between a decomposition at z and its mirror at conj(z), for real
/// base matrices, without a second eigensolve.
///
/// For real X the Hermitization at conj(z) is the entrywise conjugate of the
/// one at z, so its eigenvectors are w_i conjugated and the overlap reduces to
/// bilinear Gram forms of a single decomposition. This is the coupling matrix
/// that feeds the eigenvalue flow with correlated driving noise.
pub fn lambda_overlaps(
    d: &SpectralDecomposition,
    window: usize,
) -> Result<OverlapMatrix, SpectralError> {
    if !d.base_real {
        return Err(SpectralError::ComplexBase);
    }
    if window == 0 || window > d.n {
        return Err(SpectralError::WindowTooLarge { window, n: d.n });
    }
    let u = d.u.columns(0, window);
    let v = d.v.columns(0, window);
    // Bilinear (not sesquilinear) Grams: bu[i, j] = u_i^T u_j, bv[i, j] = v_i^T v_j.
    let bu = u.tr_mul(&u);
    let bv = v.tr_mul(&v);
    // Lambda_{ij} = 4 Re[ (u_j^T u_i) conj(v_i^T v_j) ]; both Grams are
    // symmetric, which makes Lambda symmetric as well.
    let theta = DMatrix::from_fn(window, window, |i, j| {
        4.0 * (bu[(j, i)] * bv[(i, j)].conj()).re
    });
    Ok(OverlapMatrix {
        z1: d.z,
        z2: d.z.conj(),
        n: d.n,
        window,
        theta,
    })
}

// ---------------------------------------------------------------------------
// Resolvent traces
// ---------------------------------------------------------------------------

/// Normalized resolvent trace of a Hermitization at a point i*eta on the
/// imaginary axis.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ResolventTrace {
    /// Shift of the underlying Hermitization.
    pub z: C64,
    /// Imaginary part of the spectral parameter.
    pub eta: f64,
    /// (2n)^{-1} sum over signed indices of (lambda_i - i eta)^{-1}.
    pub value: C64,
}

/// Evaluates the normalized resolvent trace <G^z(i eta)>.
///
/// Mirror pairs combine to 2*i*eta / (lambda^2 + eta^2), so the value is
/// purely imaginary with positive imaginary part for eta > 0.
pub fn resolvent_trace(
    d: &SpectralDecomposition,
    eta: f64,
) -> Result<ResolventTrace, SpectralError> {
    if eta <= 0.0 {
        return Err(SpectralError::NonPositiveEta { eta });
    }
    let sum: f64 = d.lambdas.iter().map(|l| 1.0 / (l * l + eta * eta)).sum();
    Ok(ResolventTrace {
        z: d.z,
        eta,
        value: C64::new(0.0, eta * sum / d.n as f64),
    })
}

/// Which block of the 2n-dimensional space a projection selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockHalf {
    /// The first n coordinates (the u blocks).
    First,
    /// The last n coordinates (the v blocks).
    Second,
}

/// Normalized trace of G1(i eta1) P_a G2(i eta2) P_b for block projections
/// P_a, P_b, evaluated from two spectral decompositions.
///
/// Summing the signed mirror indices in closed form leaves a double sum over
/// positive indices weighted by per-index kernels: 2*i*eta/(lambda^2 + eta^2)
/// when the two projections are equal and 2*lambda/(lambda^2 + eta^2) when
/// they differ. The remaining Gram contractions cost O(n^2).
pub fn resolvent_product_trace(
    d1: &SpectralDecomposition,
    eta1: f64,
    d2: &SpectralDecomposition,
    eta2: f64,
    block_a: BlockHalf,
    block_b: BlockHalf,
) -> Result<C64, SpectralError> {
    if d1.n != d2.n {
        return Err(SpectralError::DimensionMismatch { n1: d1.n, n2: d2.n });
    }
    if eta1 <= 0.0 {
        return Err(SpectralError::NonPositiveEta { eta: eta1 });
    }
    if eta2 <= 0.0 {
        return Err(SpectralError::NonPositiveEta { eta: eta2 });
    }
    let n = d1.n;
    let pick = |d: &SpectralDecomposition, b: BlockHalf| match b {
        BlockHalf::First => d.u.clone(),
        BlockHalf::Second => d.v.clone(),
    };
    // a[i, j] = <a-block of w_i, a-block of w'_j>, b[j, i] likewise for the
    // returning projection.
    let ga = pick(d1, block_a).ad_mul(&pick(d2, block_a));
    let gb = pick(d2, block_b).ad_mul(&pick(d1, block_b));
    let same = block_a == block_b;
    let kernel = |l: f64, eta: f64| -> C64 {
        let den = l * l + eta * eta;
        if same {
            C64::new(0.0, 2.0 * eta / den)
        } else {
            C64::new(2.0 * l / den, 0.0)
        }
    };
    let k1: Vec<C64> = d1.lambdas.iter().map(|&l| kernel(l, eta1)).collect();
    let k2: Vec<C64> = d2.lambdas.iter().map(|&l| kernel(l, eta2)).collect();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..n {
            row += ga[(i, j)] * gb[(j, i)] * k2[j];
        }
        acc += row * k1[i];
    }
    Ok(acc / (2.0 * n as f64))
}

// ---------------------------------------------------------------------------
// Rigidity diagnostics
// ---------------------------------------------------------------------------

/// Maximum deviation of eigenvalues from their deterministic quantiles over an
/// index window.
///
/// Both the eigenvalues and the quantiles are antisymmetric in the signed
/// index, so the positive window 1..=window covers the mirrored indices as
/// well: the report is identical for +-i.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RigidityReport {
    /// Shift of the decomposition.
    pub z: C64,
    /// Base dimension.
    pub n: usize,
    /// Number of positive indices inspected.
    pub window: usize,
    /// max over 1 <= i <= window of |lambda_i - gamma_i|.
    pub max_deviation: f64,
    /// Positive index attaining the maximum.
    pub argmax_index: usize,
    /// Reference scale n^{100 omega_h} / n for the supplied exponent.
    pub threshold: f64,
}

/// Compares eigenvalue locations against deterministic quantiles.
///
/// `omega_h` sets the reference threshold n^{100 omega_h} / n reported next to
/// the measured deviation; the measured value is always exposed rather than
/// asserted against the threshold, since the constant in front is not pinned
/// by theory.
pub fn rigidity_report(
    d: &SpectralDecomposition,
    quantiles: &Quantiles,
    window: usize,
    omega_h: f64,
) -> Result<RigidityReport, SpectralError> {
    if (quantiles.z - d.z).norm() > 1e-9 {
        return Err(SpectralError::MismatchedPoint {
            expected: quantiles.z,
            got: d.z,
        });
    }
    if window == 0 || window > d.n || window > quantiles.gamma.len() {
        return Err(SpectralError::WindowTooLarge {
            window,
            n: d.n.min(quantiles.gamma.len()),
        });
    }
    let mut max_deviation = 0.0f64;
    let mut argmax_index = 1usize;
    for k in 0..window {
        let dev = (d.lambdas[k] - quantiles.gamma[k]).abs();
        if dev > max_deviation {
            max_deviation = dev;
            argmax_index = k + 1;
        }
    }
    let nf = d.n as f64;
    Ok(RigidityReport {
        z: d.z,
        n: d.n,
        window,
        max_deviation,
        argmax_index,
        threshold: nf.powf(100.0 * omega_h) / nf,
    })
}

// ---------------------------------------------------------------------------
// External interface
// ---------------------------------------------------------------------------

/// Dumps the full signed spectrum as CSV with columns `index,lambda`, in
/// ascending eigenvalue order.
pub fn write_spectrum_csv<W: io::Write>(
    out: &mut W,
    d: &SpectralDecomposition,
) -> io::Result<()> {
    writeln!(out, "index,lambda")?;
    for k in (0..d.n).rev() {
        writeln!(out, "{},{:.17e}", -(k as i64 + 1), -d.lambdas[k])?;
    }
    for k in 0..d.n {
        writeln!(out, "{},{:.17e}", k + 1, d.lambdas[k])?;
    }
    Ok(())
}
