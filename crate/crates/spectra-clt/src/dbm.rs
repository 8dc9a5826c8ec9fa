//! Overlap-correlated Dyson Brownian motion for signed singular-value systems.
//!
//! The singular values of a matrix undergoing additive Brownian motion,
//! taken with both signs, form an interacting particle system: each particle
//! repels every other signed particle (including its own mirror image) at
//! strength modulated by eigenvector overlaps, while the driving martingales
//! carry an overlap-dependent covariance. This module implements:
//!
//! * the signed-index SDE with overlap-corrected drift, in two algebraically
//!   equivalent forms (signed sum and explicit mirror decomposition);
//! * correlated noise generation from the overlap covariance, with cutoff,
//!   positive-semidefinite projection, and shared-noise pairing;
//! * the regularized and interpolated comparison processes and the complex
//!   Ginibre reference process;
//! * the matrix-level ground-truth flow with projected noise export, so the
//!   particle SDE can be coupled pathwise to the matrix evolution;
//! * an Euler integrator with an ordering guard that refines the driving
//!   noise by Brownian bridges instead of resampling it.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::{self, EnsembleError, FlowState, MatrixData, MatrixSample, Symmetry};
use crate::rng::StreamKey;
use crate::spectral::{self, OverlapMatrix, SpectralDecomposition, SpectralError};
use crate::C64;

/// Default cutoff exponent: overlaps are zeroed when their maximal magnitude
/// exceeds n^{-omega_e}.
pub const DEFAULT_OMEGA_E: f64 = 0.2;

/// Default noise-regularization exponent: the comparison processes shrink
/// the noise by (1 + n^{-omega_r})^{-1/2}.
pub const DEFAULT_OMEGA_R: f64 = 0.05;

/// Gap below which particles count as coincident and a step is rejected.
const MIN_GAP: f64 = 1e-14;

/// Maximum number of Brownian-bridge halvings before a step gives up.
const MAX_HALVINGS: u32 = 40;

/// Covariance eigenvalues may be clipped up to this magnitude; anything more
/// negative signals an inconsistent overlap matrix.
const PSD_DISTORTION: f64 = 1e-6;

/// Errors from the particle system.
#[derive(Debug, thiserror::Error)]
pub enum DbmError {
    /// Particles not strictly ordered and positive at construction.
    #[error("particles must satisfy 0 < x_1 < ... < x_n")]
    Unordered,
    /// Two signed particles closer than the coincidence threshold.
    #[error("coincident particles {i} and {j}: gap {gap:.3e}")]
    CoincidentParticles { i: i64, j: i64, gap: f64 },
    /// Ordering guard exhausted its halving budget.
    #[error("step retry exhausted after {halvings} halvings at t = {t:.6e}")]
    RetryExhausted { t: f64, halvings: u32 },
    /// Requested index window exceeds the particle count.
    #[error("window {window} exceeds particle count {n}")]
    WindowMismatch { window: usize, n: usize },
    /// PSD projection would distort the covariance beyond tolerance.
    #[error("noise covariance indefinite: min eigenvalue {min_eig:.3e}")]
    CovarianceIndefinite { min_eig: f64 },
    /// State and model sized for different particle counts.
    #[error("dimension mismatch: state n = {state_n}, model n = {model_n}")]
    DimensionMismatch { state_n: usize, model_n: usize },
    /// Propagated spectral failure (trajectory decomposition).
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    /// Propagated sampling/flow failure.
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Which process the state evolves under.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    /// Full overlap-corrected dynamics: noise covariance (delta + Lambda)/2,
    /// drift coefficients 1 + Lambda_ij, noise scale 1/sqrt(n).
    Raw,
    /// Comparison process: cutoff noise, unit interaction, noise scale
    /// 1/sqrt(n (1 + n^{-omega_r})).
    Regularized,
    /// Interpolates the drift coefficient 1 + alpha * (cutoff Lambda)_ij
    /// between the regularized (alpha = 0) and overlap-corrected dynamics,
    /// keeping the regularized noise.
    Interpolated(f64),
    /// Complex Ginibre reference: independent noise of scale 1/sqrt(2n),
    /// unit interaction.
    Ginibre,
}

impl ProcessKind {
    /// Multiplier of the overlap matrix inside the drift coefficient.
    fn drift_coupling(self) -> f64 {
        match self {
            ProcessKind::Raw => 1.0,
            ProcessKind::Interpolated(alpha) => alpha,
            ProcessKind::Regularized | ProcessKind::Ginibre => 0.0,
        }
    }

    /// Factor multiplying the noise increments in the particle update.
    fn noise_scale(self, n: usize, omega_r: f64) -> f64 {
        let nf = n as f64;
        match self {
            ProcessKind::Raw => nf.sqrt().recip(),
            ProcessKind::Regularized | ProcessKind::Interpolated(_) => {
                (nf * (1.0 + nf.powf(-omega_r))).sqrt().recip()
            }
            ProcessKind::Ginibre => (2.0 * nf).sqrt().recip(),
        }
    }
}

/// Signed antisymmetric particle configuration: x_{-i} = -x_i is implied, so
/// only the strictly positive, strictly increasing half is stored.
#[derive(Debug, Clone)]
pub struct DbmState {
    /// Process the state evolves under.
    pub kind: ProcessKind,
    /// Current time.
    pub t: f64,
    x: Vec<f64>,
}

fn strictly_increasing_positive(xs: &[f64]) -> bool {
    !xs.is_empty()
        && xs[0] > 0.0
        && xs.windows(2).all(|w| w[0] < w[1])
        && xs.iter().all(|x| x.is_finite())
}

impl DbmState {
    /// Builds a state from the positive-index particles (ascending).
    pub fn new(positive: Vec<f64>, kind: ProcessKind) -> Result<DbmState, DbmError> {
        if !strictly_increasing_positive(&positive) {
            return Err(DbmError::Unordered);
        }
        Ok(DbmState { kind, t: 0.0, x: positive })
    }

    /// Initial state from a spectral decomposition (its positive half).
    pub fn from_decomposition(
        d: &SpectralDecomposition,
        kind: ProcessKind,
    ) -> Result<DbmState, DbmError> {
        let positive: Vec<f64> = (1..=d.n as i64).map(|i| d.lambda(i)).collect();
        DbmState::new(positive, kind)
    }

    /// Number of positive-index particles.
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// The positive-index particles, ascending.
    pub fn positive(&self) -> &[f64] {
        &self.x
    }

    /// Signed-index accessor: particle(i) for i in -n..-1, 1..n, with
    /// particle(-i) = -particle(i) exact by construction.
    pub fn particle(&self, i: i64) -> f64 {
        let n = self.x.len() as i64;
        assert!(i != 0 && i.abs() <= n, "signed index {i} out of range");
        if i > 0 {
            self.x[(i - 1) as usize]
        } else {
            -self.x[(-i - 1) as usize]
        }
    }

    /// Smallest gap among all signed particles (consecutive gaps and the
    /// mirror gap 2 x_1 through zero).
    pub fn min_gap(&self) -> f64 {
        let through_zero = 2.0 * self.x[0];
        self.x
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(through_zero, f64::min)
    }
}

/// Overlap data driving the drift corrections and the noise covariance.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    n: usize,
    /// Positive-index overlap block Lambda_ij (symmetric); signed entries
    /// follow the sign rule Lambda_{i,-j} = -Lambda_{i,j}.
    lambda: DMatrix<f64>,
    /// Optional cross-point overlap block, included in the cutoff statistic.
    pub theta_cross: Option<DMatrix<f64>>,
    /// Overlap magnitude above which the cutoff deactivates all corrections.
    pub cutoff_threshold: f64,
    /// True when the maximal overlap magnitude is within the threshold; when
    /// false the effective overlap matrix is zero.
    pub cutoff_active: bool,
    /// Noise-regularization exponent for the comparison processes.
    pub omega_r: f64,
}

impl CorrelationModel {
    /// Overlap-free model (independent noise, pure mirror interaction).
    pub fn independent(n: usize) -> CorrelationModel {
        CorrelationModel::from_lambda(DMatrix::zeros(n, n), f64::INFINITY, DEFAULT_OMEGA_R)
    }

    /// Model from an explicit positive-index overlap block.
    pub fn from_lambda(
        lambda: DMatrix<f64>,
        cutoff_threshold: f64,
        omega_r: f64,
    ) -> CorrelationModel {
        let n = lambda.nrows();
        assert_eq!(n, lambda.ncols(), "overlap block must be square");
        let mut model = CorrelationModel {
            n,
            lambda,
            theta_cross: None,
            cutoff_threshold,
            cutoff_active: true,
            omega_r,
        };
        model.refresh_cutoff();
        model
    }

    /// Model from a computed overlap matrix, zero-filled outside its window.
    pub fn from_overlaps(
        om: &OverlapMatrix,
        n: usize,
        cutoff_threshold: f64,
        omega_r: f64,
    ) -> CorrelationModel {
        let mut lambda = DMatrix::zeros(n, n);
        let block = om.positive_block();
        let w = block.nrows().min(n);
        lambda.view_mut((0, 0), (w, w)).copy_from(&block.view((0, 0), (w, w)));
        CorrelationModel::from_lambda(lambda, cutoff_threshold, omega_r)
    }

    /// Attaches a cross-point overlap block and refreshes the cutoff.
    pub fn with_cross(mut self, cross: DMatrix<f64>) -> CorrelationModel {
        self.theta_cross = Some(cross);
        self.refresh_cutoff();
        self
    }

    fn refresh_cutoff(&mut self) {
        self.cutoff_active = self.amax() <= self.cutoff_threshold;
    }

    /// Maximal overlap magnitude entering the cutoff indicator.
    pub fn amax(&self) -> f64 {
        let own = self.lambda.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let cross = self
            .theta_cross
            .as_ref()
            .map(|c| c.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
            .unwrap_or(0.0);
        own + cross
    }

    /// Particle count the model is sized for.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Raw (uncut) positive-index overlap block.
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    /// Cutoff overlap entry: Lambda_ij if the cutoff is inactive, else 0.
    fn effective(&self, i: usize, j: usize) -> f64 {
        if self.cutoff_active {
            self.lambda[(i, j)]
        } else {
            0.0
        }
    }

    /// Linear interpolation of two overlap models (used to supply Lambda(t)
    /// between coarse matrix-flow checkpoints).
    pub fn interpolate(a: &CorrelationModel, b: &CorrelationModel, s: f64) -> CorrelationModel {
        assert_eq!(a.n, b.n, "cannot interpolate differently sized models");
        let lambda = &a.lambda * (1.0 - s) + &b.lambda * s;
        CorrelationModel::from_lambda(lambda, a.cutoff_threshold, a.omega_r)
    }
}

// ---------------------------------------------------------------------------
// Drift
// ---------------------------------------------------------------------------

/// Drift of the signed particle with index i > 0, computed as the signed sum
/// (1/2n) sum over signed j != i of (1 + c Lambda_ij) / (x_i - x_j), where c
/// is the kind-dependent coupling and signed overlap entries follow the sign
/// rule. Negative indices return the exact mirror image.
pub fn drift_at(state: &DbmState, model: &CorrelationModel, i: i64) -> f64 {
    if i < 0 {
        return -drift_at(state, model, -i);
    }
    let n = state.n();
    let c = state.kind.drift_coupling();
    let k = (i - 1) as usize;
    let xi = state.x[k];
    let mut sum = 0.0;
    for m in 0..n {
        let lam = c * model.effective(k, m);
        if m != k {
            // Positive partner j = m + 1.
            sum += (1.0 + lam) / (xi - state.x[m]);
        }
        // Mirror partner j = -(m + 1): Lambda_{i,-j} = -Lambda_{ij}.
        sum += (1.0 - lam) / (xi + state.x[m]);
    }
    sum / (2.0 * n as f64)
}

/// Full positive-index drift vector (the negative half is the exact mirror).
pub fn drift(state: &DbmState, model: &CorrelationModel) -> Result<DVector<f64>, DbmError> {
    if state.n() != model.n {
        return Err(DbmError::DimensionMismatch {
            state_n: state.n(),
            model_n: model.n,
        });
    }
    let gap = state.min_gap();
    if gap < MIN_GAP {
        // Identify the offending pair for the report.
        let (mut bi, mut bj) = (1i64, -1i64);
        let mut best = 2.0 * state.x[0];
        for k in 1..state.n() {
            let g = state.x[k] - state.x[k - 1];
            if g < best {
                best = g;
                bi = (k + 1) as i64;
                bj = k as i64;
            }
        }
        return Err(DbmError::CoincidentParticles { i: bi, j: bj, gap });
    }
    Ok(DVector::from_fn(state.n(), |k, _| {
        drift_at(state, model, (k + 1) as i64)
    }))
}

/// Equivalent drift in the explicit mirror decomposition: interaction with
/// same-sign partners at coefficient 1 + c Lambda_ij, with mirrored partners
/// at 1 - c Lambda_ij, and the self-mirror level repulsion
/// (1 - c Lambda_ii) / (4 n x_i).
pub fn drift_explicit(
    state: &DbmState,
    model: &CorrelationModel,
) -> Result<DVector<f64>, DbmError> {
    if state.n() != model.n {
        return Err(DbmError::DimensionMismatch {
            state_n: state.n(),
            model_n: model.n,
        });
    }
    let n = state.n();
    let c = state.kind.drift_coupling();
    let two_n = 2.0 * n as f64;
    Ok(DVector::from_fn(n, |k, _| {
        let xi = state.x[k];
        let mut pair_sum = 0.0;
        for m in 0..n {
            if m == k {
                continue;
            }
            let lam = c * model.effective(k, m);
            pair_sum += (1.0 + lam) / (xi - state.x[m]);
            pair_sum += (1.0 - lam) / (xi + state.x[m]);
        }
        pair_sum / two_n + (1.0 - c * model.effective(k, k)) / (4.0 * n as f64 * xi)
    }))
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// How a noise block was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Drawn from the (cutoff, PSD-projected) overlap covariance.
    FromOverlaps,
    /// Independent standard increments of variance dt (Ginibre driving).
    Independent,
    /// Projections of a matrix-level Brownian increment onto singular pairs.
    SharedMatrixProjection,
}

/// Correlated increments for the positive indices; the negative half is the
/// exact negation.
#[derive(Debug, Clone)]
pub struct NoiseBlock {
    /// Increments db_i for i = 1..n.
    pub db: DVector<f64>,
    /// Time step the increments cover.
    pub dt: f64,
    /// Smallest covariance eigenvalue before PSD projection (1/2 exactly for
    /// an overlap-free model, 1 for independent mode).
    pub min_eig_pre: f64,
    /// Provenance of the increments.
    pub mode: NoiseMode,
}

/// Square root of the effective noise covariance (I + cutoff Lambda)/2 after
/// PSD projection, together with its smallest pre-projection eigenvalue.
///
/// Eigenvalues in [-1e-6, 0) are clipped to zero (finite-precision overlap
/// matrices are indefinite at the 1e-12 scale); anything more negative
/// signals an inconsistent overlap matrix and fails.
pub fn covariance_sqrt(model: &CorrelationModel) -> Result<(DMatrix<f64>, f64), DbmError> {
    let n = model.n;
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = (((i == j) as u8 as f64) + model.effective(i, j)) / 2.0;
        }
    }
    let eig = c.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -PSD_DISTORTION {
        return Err(DbmError::CovarianceIndefinite { min_eig });
    }
    let mut scaled = eig.eigenvectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[k].max(0.0).sqrt();
    }
    Ok((&scaled * eig.eigenvectors.transpose(), min_eig))
}

/// Draws correlated increments sqrt(dt) * C^{1/2} xi from the model's
/// effective covariance.
pub fn make_noise(
    model: &CorrelationModel,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NoiseBlock, DbmError> {
    let (sqrt_c, min_eig_pre) = covariance_sqrt(model)?;
    let xi = standard_vector(model.n, rng);
    Ok(NoiseBlock {
        db: sqrt_c * xi * dt.sqrt(),
        dt,
        min_eig_pre,
        mode: NoiseMode::FromOverlaps,
    })
}

/// Independent standard increments of variance dt per coordinate (the
/// driving noise of the Ginibre reference process).
pub fn make_noise_independent(n: usize, dt: f64, rng: &mut ChaCha8Rng) -> NoiseBlock {
    NoiseBlock {
        db: standard_vector(n, rng) * dt.sqrt(),
        dt,
        min_eig_pre: 1.0,
        mode: NoiseMode::Independent,
    }
}

/// Draws a shared-noise pair: the raw covariance (I + Lambda)/2 and the
/// cutoff covariance applied to the same standard Gaussian vector, so the
/// overlap-corrected and regularized processes ride the same Brownian path.
pub fn make_noise_pair(
    model: &CorrelationModel,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(NoiseBlock, NoiseBlock), DbmError> {
    let mut uncut = model.clone();
    uncut.cutoff_threshold = f64::INFINITY;
    uncut.cutoff_active = true;
    let (sqrt_raw, min_raw) = covariance_sqrt(&uncut)?;
    let (sqrt_cut, min_cut) = covariance_sqrt(model)?;
    let xi = standard_vector(model.n, rng);
    let raw = NoiseBlock {
        db: &sqrt_raw * &xi * dt.sqrt(),
        dt,
        min_eig_pre: min_raw,
        mode: NoiseMode::FromOverlaps,
    };
    let cut = NoiseBlock {
        db: &sqrt_cut * &xi * dt.sqrt(),
        dt,
        min_eig_pre: min_cut,
        mode: NoiseMode::FromOverlaps,
    };
    Ok((raw, cut))
}

/// Maps raw-covariance increments onto the cutoff covariance along the same
/// underlying Brownian path: given db with per-unit-time covariance
/// C = (I + Lambda)/2, returns sqrt(C_cut) pinv(sqrt(C)) db, which has
/// covariance C_cut and rides the identical driving noise. When the cutoff
/// keeps Lambda the increments pass through unchanged.
pub fn shared_cutoff_noise(
    model: &CorrelationModel,
    raw: &NoiseBlock,
) -> Result<NoiseBlock, DbmError> {
    let n = model.n;
    if raw.db.len() != n {
        return Err(DbmError::DimensionMismatch {
            state_n: raw.db.len(),
            model_n: n,
        });
    }
    if model.cutoff_active {
        return Ok(NoiseBlock {
            db: raw.db.clone(),
            dt: raw.dt,
            min_eig_pre: raw.min_eig_pre,
            mode: NoiseMode::FromOverlaps,
        });
    }
    // Cutoff tripped: the target covariance is I/2. Whiten db through the
    // pseudo-inverse square root of the raw covariance, then scale by
    // sqrt(1/2); zero-variance raw directions carry no noise.
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = (((i == j) as u8 as f64) + model.lambda[(i, j)]) / 2.0;
        }
    }
    let eig = c.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -PSD_DISTORTION {
        return Err(DbmError::CovarianceIndefinite { min_eig });
    }
    let mut scaled = eig.eigenvectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let e = eig.eigenvalues[k].max(0.0);
        col *= if e > 1e-12 { (0.5 / e).sqrt() } else { 0.0 };
    }
    let db = &scaled * (eig.eigenvectors.transpose() * &raw.db);
    Ok(NoiseBlock {
        db,
        dt: raw.dt,
        min_eig_pre: min_eig,
        mode: NoiseMode::FromOverlaps,
    })
}

/// Projects a matrix Brownian increment onto the singular pairs of a
/// decomposition: db_i = sqrt(dt) * 2 Re(u_i^* G v_i) with G the standard
/// noise matrix, matching the covariance (delta + Lambda)/2 per unit time.
pub fn project_noise(
    d: &SpectralDecomposition,
    g: &MatrixData,
    dt: f64,
) -> Result<NoiseBlock, DbmError> {
    if g.n() != d.n {
        return Err(DbmError::DimensionMismatch {
            state_n: d.n,
            model_n: g.n(),
        });
    }
    let gc = g.to_complex();
    let gv = &gc * &d.v;
    let db = DVector::from_fn(d.n, |i, _| {
        2.0 * d.u.column(i).dotc(&gv.column(i)).re * dt.sqrt()
    });
    Ok(NoiseBlock {
        db,
        dt,
        min_eig_pre: 0.5,
        mode: NoiseMode::SharedMatrixProjection,
    })
}

fn standard_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

/// Result of one accepted macro-step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// State advanced by the full requested dt.
    pub state: DbmState,
    /// Deepest Brownian-bridge halving level needed (0 when the plain Euler
    /// step preserved ordering).
    pub halvings: u32,
}

/// One Euler step of length dt driven by the supplied noise block.
///
/// The update is x_i += drift_i * dt + scale * db_i with the kind-dependent
/// noise scale. If the proposal violates the strict signed ordering, the
/// time interval is halved: the driving noise is split by a Brownian bridge
/// (keeping the already-drawn endpoint), the two halves are integrated in
/// order, and each half may split further, up to 40 levels.
pub fn step(
    state: &DbmState,
    model: &CorrelationModel,
    dt: f64,
    noise: &NoiseBlock,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome, DbmError> {
    assert!(dt > 0.0, "step length must be positive");
    let n = state.n();
    let scale = state.kind.noise_scale(n, model.omega_r);
    // Square root of the driving covariance, materialized lazily: it is only
    // needed when a bridge split occurs.
    let mut bridge_sqrt: Option<DMatrix<f64>> = None;
    let ensure_sqrt = |kind: ProcessKind| -> Result<DMatrix<f64>, DbmError> {
        Ok(match kind {
            ProcessKind::Ginibre => DMatrix::identity(n, n),
            _ => covariance_sqrt(model)?.0,
        })
    };
    let mut current = state.clone();
    let mut max_depth = 0u32;
    // LIFO of pending segments (length, noise, depth); the top is always the
    // earliest pending interval.
    let mut stack: Vec<(f64, DVector<f64>, u32)> = vec![(dt, noise.db.clone(), 0)];
    while let Some((h, db, depth)) = stack.pop() {
        let d = drift(&current, model)?;
        let proposal: Vec<f64> = (0..n)
            .map(|k| current.x[k] + d[k] * h + scale * db[k])
            .collect();
        if strictly_increasing_positive(&proposal) {
            current.x = proposal;
            current.t += h;
            continue;
        }
        if depth >= MAX_HALVINGS {
            return Err(DbmError::RetryExhausted {
                t: current.t,
                halvings: depth,
            });
        }
        max_depth = max_depth.max(depth + 1);
        if bridge_sqrt.is_none() {
            bridge_sqrt = Some(ensure_sqrt(state.kind)?);
        }
        let sqrt_c = bridge_sqrt.as_ref().unwrap();
        // Brownian bridge: W(h/2) given W(h) = db is Gaussian with mean db/2
        // and covariance (h/4) C.
        let xi = standard_vector(n, rng);
        let first = &db * 0.5 + sqrt_c * xi * (h / 4.0).sqrt();
        let second = &db - &first;
        stack.push((h / 2.0, second, depth + 1));
        stack.push((h / 2.0, first, depth + 1));
    }
    Ok(StepOutcome {
        state: current,
        halvings: max_depth,
    })
}

/// Initial Ginibre reference configuration: the signed singular values of an
/// independent complex Ginibre matrix.
pub fn ginibre_initial(n: usize, seed: u64, trial: u64) -> Result<DbmState, DbmError> {
    let sample = ensemble::sample_iid(
        &ensemble::EnsembleSpec {
            symmetry: Symmetry::Complex,
            law: ensemble::EntryLaw::Gaussian,
            n,
            seed,
        },
        trial,
    )?;
    let sv = spectral::singular_values(&sample.data, C64::new(0.0, 0.0))?;
    DbmState::new(sv, ProcessKind::Ginibre)
}

// ---------------------------------------------------------------------------
// Matrix-flow ground truth
// ---------------------------------------------------------------------------

/// Snapshot of the matrix flow at one time, with the noise projections of
/// the step that led to it.
#[derive(Debug, Clone)]
pub struct FlowCheckpoint {
    /// Flow time.
    pub t: f64,
    /// Spectral decomposition of the shifted matrix at time t.
    pub decomposition: SpectralDecomposition,
    /// Overlap matrix Lambda at time t (positive window).
    pub overlaps: OverlapMatrix,
    /// Projected increments of the step ending at t, with the projection
    /// taken at the step start (absent on the initial checkpoint).
    pub noise_projection: Option<DVector<f64>>,
}

/// Runs the additive matrix Brownian flow, recording spectra, overlaps and
/// projected noise increments at every step.
///
/// Noise for step k is drawn from the stream (sample seed, trial, k), and it
/// is fed to the flow as shared noise so matrix- and particle-level
/// integrations of the same trajectory agree pathwise.
pub fn matrix_flow_trajectory(
    x0: &MatrixSample,
    z: C64,
    t_final: f64,
    dt: f64,
    window: usize,
) -> Result<Vec<FlowCheckpoint>, DbmError> {
    if t_final < 0.0 || (t_final > 0.0 && dt <= 0.0) {
        return Err(DbmError::Ensemble(EnsembleError::NegativeTime(
            t_final.min(dt),
        )));
    }
    let mut schedule = Vec::new();
    let mut t = 0.0;
    let mut k = 0u64;
    while t < t_final - 1e-15 * t_final.max(1.0) {
        let h = dt.min(t_final - t);
        k += 1;
        let mut rng = StreamKey::new(x0.spec.seed, x0.trial_index, k).rng();
        schedule.push((h, standard_matrix(x0.data.n(), x0.spec.symmetry, &mut rng)));
        t += h;
    }
    matrix_flow_trajectory_with(x0, z, &schedule, window)
}

/// Matrix-flow trajectory with caller-supplied standard noise matrices, one
/// per step of the given lengths.
pub fn matrix_flow_trajectory_with(
    x0: &MatrixSample,
    z: C64,
    schedule: &[(f64, MatrixData)],
    window: usize,
) -> Result<Vec<FlowCheckpoint>, DbmError> {
    let mut flow = FlowState::from_sample(x0);
    let mut d = spectral::decompose(&spectral::hermitize(&flow.x, z))?;
    let mut checkpoints = Vec::with_capacity(schedule.len() + 1);
    checkpoints.push(FlowCheckpoint {
        t: 0.0,
        overlaps: spectral::lambda_overlaps(&d, window)?,
        decomposition: d.clone(),
        noise_projection: None,
    });
    for (h, g) in schedule {
        let projection = project_noise(&d, g, *h)?;
        flow = ensemble::brownian_step(&flow, *h, Some(g))?;
        d = spectral::decompose(&spectral::hermitize(&flow.x, z))?;
        checkpoints.push(FlowCheckpoint {
            t: flow.t,
            overlaps: spectral::lambda_overlaps(&d, window)?,
            decomposition: d.clone(),
            noise_projection: Some(projection.db),
        });
    }
    Ok(checkpoints)
}

fn standard_matrix(n: usize, symmetry: Symmetry, rng: &mut ChaCha8Rng) -> MatrixData {
    match symmetry {
        Symmetry::Real => {
            MatrixData::Real(DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng)))
        }
        Symmetry::Complex => MatrixData::Complex(DMatrix::from_fn(n, n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im) / 2f64.sqrt()
        })),
    }
}

/// Integrates the overlap-corrected particle SDE along an exported
/// matrix-flow trajectory, reusing its projected noise and its overlaps, so
/// the result can be compared pathwise to the matrix eigenvalues.
pub fn integrate_along_flow(
    checkpoints: &[FlowCheckpoint],
    cutoff_threshold: f64,
    omega_r: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DbmState, DbmError> {
    let first = checkpoints.first().expect("empty trajectory");
    let n = first.decomposition.n;
    let mut state = DbmState::from_decomposition(&first.decomposition, ProcessKind::Raw)?;
    for pair in checkpoints.windows(2) {
        let model =
            CorrelationModel::from_overlaps(&pair[0].overlaps, n, cutoff_threshold, omega_r);
        let db = pair[1]
            .noise_projection
            .clone()
            .expect("interior checkpoint lacks noise projection");
        let h = pair[1].t - pair[0].t;
        let noise = NoiseBlock {
            db,
            dt: h,
            min_eig_pre: 0.5,
            mode: NoiseMode::SharedMatrixProjection,
        };
        state = step(&state, &model, h, &noise, rng)?.state;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Comparison utilities and persistence
// ---------------------------------------------------------------------------

/// Maximal rescaled particle discrepancy over the lowest `window` positive
/// indices: max_{1 <= i <= K} |scale_a * a_i - scale_b * b_i|.
pub fn coupling_distance(
    a: &DbmState,
    b: &DbmState,
    window: usize,
    scale_a: f64,
    scale_b: f64,
) -> Result<f64, DbmError> {
    if window > a.n() || window > b.n() {
        return Err(DbmError::WindowMismatch {
            window,
            n: a.n().min(b.n()),
        });
    }
    Ok((0..window)
        .map(|k| (scale_a * a.x[k] - scale_b * b.x[k]).abs())
        .fold(0.0, f64::max))
}

#[derive(serde::Serialize)]
struct CheckpointRecord<'a> {
    t: f64,
    particles: &'a [f64],
    kind: ProcessKind,
}

/// Writes trajectory checkpoints as JSON lines {t, particles[window], kind}.
pub fn write_trajectory_jsonl(
    out: &mut dyn std::io::Write,
    states: &[DbmState],
    window: usize,
) -> std::io::Result<()> {
    for s in states {
        let w = window.min(s.n());
        let record = CheckpointRecord {
            t: s.t,
            particles: &s.positive()[..w],
            kind: s.kind,
        };
        serde_json::to_writer(&mut *out, &record)?;
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_iid, EnsembleSpec, EntryLaw};

    fn test_rng(tag: u64) -> ChaCha8Rng {
        StreamKey::new(0xD13A, tag, 0).rng()
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> DbmState {
        use rand::Rng;
        loop {
            let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..2.0)).collect();
            xs.sort_by(f64::total_cmp);
            if strictly_increasing_positive(&xs)
                && xs.windows(2).all(|w| w[1] - w[0] > 0.02)
                && xs[0] > 0.05
            {
                return DbmState::new(xs, ProcessKind::Raw).unwrap();
            }
        }
    }

    fn random_symmetric(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        use rand::Rng;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
        (&a + a.transpose()) / 2.0
    }

    #[test]
    fn state_accessors_and_ordering() {
        let s = DbmState::new(vec![0.3, 0.7, 1.1], ProcessKind::Raw).unwrap();
        assert_eq!(s.particle(2), 0.7);
        assert_eq!(s.particle(-2), -0.7);
        assert!((s.min_gap() - 0.4).abs() < 1e-15);
        assert!(DbmState::new(vec![0.7, 0.3], ProcessKind::Raw).is_err());
        assert!(DbmState::new(vec![-0.1, 0.3], ProcessKind::Raw).is_err());
        assert!(DbmState::new(vec![0.2, 0.2], ProcessKind::Raw).is_err());
    }

    #[test]
    fn drift_forms_agree_on_random_configs() {
        let mut rng = test_rng(1);
        for trial in 0..1000 {
            let state = random_state(8, &mut rng);
            let lambda = random_symmetric(8, 0.1, &mut rng);
            let model = CorrelationModel::from_lambda(lambda, f64::INFINITY, DEFAULT_OMEGA_R);
            let a = drift(&state, &model).unwrap();
            let b = drift_explicit(&state, &model).unwrap();
            for k in 0..8 {
                assert!(
                    (a[k] - b[k]).abs() <= 1e-12 * (1.0 + a[k].abs()),
                    "trial {trial} index {k}: {} vs {}",
                    a[k],
                    b[k]
                );
            }
        }
    }

    #[test]
    fn smallest_case_single_particle() {
        // One particle at a > 0 with no overlaps: only the mirror partner
        // contributes, (1/2n) / (2a) = 1/(4a) at n = 1, in both drift forms.
        let a = 0.7;
        let state = DbmState::new(vec![a], ProcessKind::Raw).unwrap();
        let model = CorrelationModel::independent(1);
        let d1 = drift(&state, &model).unwrap()[0];
        let d2 = drift_explicit(&state, &model).unwrap()[0];
        assert!((d1 - 1.0 / (4.0 * a)).abs() < 1e-15);
        assert!((d2 - 1.0 / (4.0 * a)).abs() < 1e-15);
    }

    #[test]
    fn drift_is_antisymmetric() {
        let mut rng = test_rng(2);
        let state = random_state(6, &mut rng);
        let model =
            CorrelationModel::from_lambda(random_symmetric(6, 0.1, &mut rng), 10.0, 0.05);
        for i in 1..=6i64 {
            assert_eq!(
                drift_at(&state, &model, -i),
                -drift_at(&state, &model, i)
            );
        }
    }

    #[test]
    fn coincident_particles_reject() {
        let state = DbmState::new(vec![0.5, 0.5 + 5e-15], ProcessKind::Raw).unwrap();
        match drift(&state, &CorrelationModel::independent(2)) {
            Err(DbmError::CoincidentParticles { gap, .. }) => assert!(gap < MIN_GAP),
            other => panic!("expected coincidence rejection, got {other:?}"),
        }
    }

    #[test]
    fn overlap_free_noise_has_half_variance() {
        let n = 4;
        let dt = 0.02;
        let model = CorrelationModel::independent(n);
        let mut rng = test_rng(3);
        let m = 4000;
        let mut acc = DMatrix::zeros(n, n);
        for _ in 0..m {
            let b = make_noise(&model, dt, &mut rng).unwrap();
            acc += &b.db * b.db.transpose();
        }
        acc /= m as f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { dt / 2.0 } else { 0.0 };
                // 4 SE of the sample covariance entry.
                let se = ((dt / 2.0) * (dt / 2.0) * (1.0 + ((i == j) as u8 as f64)) / m as f64)
                    .sqrt();
                assert!(
                    (acc[(i, j)] - target).abs() < 4.0 * se,
                    "({i},{j}): {} vs {target}",
                    acc[(i, j)]
                );
            }
        }
    }

    #[test]
    fn unit_diagonal_overlaps_double_variance() {
        // Lambda = I doubles the diagonal covariance to dt per coordinate.
        let n = 3;
        let dt = 0.05;
        let model =
            CorrelationModel::from_lambda(DMatrix::identity(n, n), f64::INFINITY, 0.05);
        let mut rng = test_rng(4);
        let m = 4000;
        let mut var = vec![0.0; n];
        for _ in 0..m {
            let b = make_noise(&model, dt, &mut rng).unwrap();
            for k in 0..n {
                var[k] += b.db[k] * b.db[k];
            }
        }
        for v in &mut var {
            *v /= m as f64;
        }
        let se = (2.0 * dt * dt / m as f64).sqrt();
        for k in 0..n {
            assert!((var[k] - dt).abs() < 4.0 * se, "var {k}: {}", var[k]);
        }
    }

    #[test]
    fn empirical_covariance_matches_target() {
        use rand::Rng;
        let n = 8;
        let dt = 1.0;
        let mut rng = test_rng(5);
        // Random PSD overlap block of modest norm.
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let lambda = &a * a.transpose() * (0.1 / n as f64);
        let model = CorrelationModel::from_lambda(lambda.clone(), f64::INFINITY, 0.05);
        let target = (DMatrix::identity(n, n) + &lambda) / 2.0;
        let m = 10_000;
        let mut acc = DMatrix::zeros(n, n);
        for _ in 0..m {
            let b = make_noise(&model, dt, &mut rng).unwrap();
            acc += &b.db * b.db.transpose();
        }
        acc /= m as f64;
        for i in 0..n {
            for j in 0..n {
                let se = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2))
                    / m as f64)
                    .sqrt();
                assert!(
                    (acc[(i, j)] - target[(i, j)]).abs() < 4.0 * se,
                    "({i},{j}): {} vs {}",
                    acc[(i, j)],
                    target[(i, j)]
                );
            }
        }
    }

    #[test]
    fn shared_cutoff_noise_whitens_to_half_identity() {
        // A 0.9 off-diagonal overlap trips the 0.5 threshold; the transform
        // must turn raw-covariance draws into I/2-covariance draws.
        let n = 4;
        let mut lambda = DMatrix::zeros(n, n);
        lambda[(0, 1)] = 0.9;
        lambda[(1, 0)] = 0.9;
        let cut = CorrelationModel::from_lambda(lambda.clone(), 0.5, 0.05);
        assert!(!cut.cutoff_active);
        let uncut = CorrelationModel::from_lambda(lambda, f64::INFINITY, 0.05);
        let dt = 0.04;
        let mut rng = test_rng(20);
        let m = 4000;
        let mut acc = DMatrix::zeros(n, n);
        for _ in 0..m {
            let raw = make_noise(&uncut, dt, &mut rng).unwrap();
            let xformed = shared_cutoff_noise(&cut, &raw).unwrap();
            acc += &xformed.db * xformed.db.transpose();
        }
        acc /= m as f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { dt / 2.0 } else { 0.0 };
                let se = ((dt / 2.0) * (dt / 2.0) * (1.0 + ((i == j) as u8 as f64)) / m as f64)
                    .sqrt();
                assert!(
                    (acc[(i, j)] - target).abs() < 4.0 * se,
                    "({i},{j}): {} vs {target}",
                    acc[(i, j)]
                );
            }
        }
        // Cutoff kept: increments pass through bit-for-bit.
        let mild = CorrelationModel::from_lambda(
            DMatrix::from_diagonal_element(n, n, 0.05),
            0.5,
            0.05,
        );
        assert!(mild.cutoff_active);
        let raw = make_noise(&mild, dt, &mut rng).unwrap();
        let same = shared_cutoff_noise(&mild, &raw).unwrap();
        assert_eq!(raw.db.as_slice(), same.db.as_slice());
    }

    #[test]
    fn indefinite_covariance_rejected() {
        // An overlap diagonal of -1.002 drives the covariance eigenvalue to
        // -0.001, far beyond the clipping tolerance.
        let lambda = DMatrix::from_diagonal_element(2, 2, -1.002);
        let model = CorrelationModel::from_lambda(lambda, f64::INFINITY, 0.05);
        match covariance_sqrt(&model) {
            Err(DbmError::CovarianceIndefinite { min_eig }) => assert!(min_eig < -PSD_DISTORTION),
            other => panic!("expected indefinite covariance, got {other:?}"),
        }
    }

    #[test]
    fn cutoff_deactivates_large_overlaps() {
        let mut lambda = DMatrix::zeros(3, 3);
        lambda[(0, 1)] = 0.9;
        lambda[(1, 0)] = 0.9;
        let model = CorrelationModel::from_lambda(lambda, 0.5, 0.05);
        assert!(!model.cutoff_active);
        // Effective covariance falls back to I/2.
        let (sqrt_c, min_eig) = covariance_sqrt(&model).unwrap();
        assert!((min_eig - 0.5).abs() < 1e-12);
        assert!((&sqrt_c * &sqrt_c - DMatrix::identity(3, 3) / 2.0).norm() < 1e-12);
    }

    #[test]
    fn zero_noise_step_is_linear_in_dt() {
        let mut rng = test_rng(6);
        let state = random_state(5, &mut rng);
        let model = CorrelationModel::independent(5);
        let zero = NoiseBlock {
            db: DVector::zeros(5),
            dt: 1e-4,
            min_eig_pre: 0.5,
            mode: NoiseMode::Independent,
        };
        let s1 = step(&state, &model, 1e-4, &zero, &mut rng).unwrap().state;
        let s2 = step(&state, &model, 5e-5, &zero, &mut rng).unwrap().state;
        for k in 0..5 {
            let d1 = s1.positive()[k] - state.positive()[k];
            let d2 = s2.positive()[k] - state.positive()[k];
            assert!(
                (d1 / d2 - 2.0).abs() < 1e-6,
                "index {k}: ratio {}",
                d1 / d2
            );
        }
    }

    #[test]
    fn ginibre_step_coefficients() {
        // Two particles, explicit noise: x_i' = x_i + drift * dt + db_i /
        // sqrt(2n) with unit interaction only.
        let state = DbmState::new(vec![0.4, 1.0], ProcessKind::Ginibre).unwrap();
        let model = CorrelationModel::independent(2);
        let dt = 1e-3;
        let noise = NoiseBlock {
            db: DVector::from_vec(vec![0.02, -0.01]),
            dt,
            min_eig_pre: 1.0,
            mode: NoiseMode::Independent,
        };
        let mut rng = test_rng(7);
        let out = step(&state, &model, dt, &noise, &mut rng).unwrap().state;
        let n = 2.0;
        let drift1 = (1.0 / (0.4 - 1.0) + 1.0 / (0.4 + 1.0) + 1.0 / (2.0 * 0.4)) / (2.0 * n);
        let drift2 = (1.0 / (1.0 - 0.4) + 1.0 / (1.0 + 0.4) + 1.0 / (2.0 * 1.0)) / (2.0 * n);
        let expect1 = 0.4 + drift1 * dt + 0.02 / (2.0f64 * n).sqrt();
        let expect2 = 1.0 + drift2 * dt - 0.01 / (2.0f64 * n).sqrt();
        assert!((out.positive()[0] - expect1).abs() < 1e-15);
        assert!((out.positive()[1] - expect2).abs() < 1e-15);
    }

    #[test]
    fn alpha_zero_interpolation_equals_regularized_bitwise() {
        let mut rng = test_rng(8);
        let base = random_state(6, &mut rng);
        let lambda = random_symmetric(6, 0.08, &mut rng);
        let model = CorrelationModel::from_lambda(lambda, f64::INFINITY, DEFAULT_OMEGA_R);
        let noise = make_noise(&model, 1e-3, &mut rng).unwrap();
        let mut reg = base.clone();
        reg.kind = ProcessKind::Regularized;
        let mut interp = base.clone();
        interp.kind = ProcessKind::Interpolated(0.0);
        let mut rng_a = test_rng(9);
        let mut rng_b = test_rng(9);
        let sa = step(&reg, &model, 1e-3, &noise, &mut rng_a).unwrap().state;
        let sb = step(&interp, &model, 1e-3, &noise, &mut rng_b).unwrap().state;
        assert_eq!(sa.positive(), sb.positive());
    }

    #[test]
    fn ordering_guard_bridges_and_reports_exhaustion() {
        let state = DbmState::new(vec![0.5, 0.52], ProcessKind::Raw).unwrap();
        let model = CorrelationModel::independent(2);
        // Moderate crossing pressure: the bridge resolves it.
        let noise = NoiseBlock {
            db: DVector::from_vec(vec![0.05, -0.05]),
            dt: 1e-3,
            min_eig_pre: 0.5,
            mode: NoiseMode::Independent,
        };
        let mut rng = test_rng(10);
        let out = step(&state, &model, 1e-3, &noise, &mut rng).unwrap();
        assert!(out.halvings > 0);
        assert!(strictly_increasing_positive(out.state.positive()));
        assert!((out.state.t - 1e-3).abs() < 1e-18);
        // A violent kick toward the mirror is survivable: the level
        // repulsion is singular, and the refined segments ride it.
        let violent = NoiseBlock {
            db: DVector::from_vec(vec![-5.0, 0.0]),
            dt: 1e-3,
            min_eig_pre: 0.5,
            mode: NoiseMode::Independent,
        };
        let rescued = step(&state, &model, 1e-3, &violent, &mut rng).unwrap();
        assert!(rescued.halvings > 0);
        assert!(strictly_increasing_positive(rescued.state.positive()));
        // Drift overshoot that no halving can fix: with x_1 = 1e-13 the
        // repulsion is ~1.25e12, and even at depth 40 the Euler proposal
        // throws x_1 past x_2. The budget must run out.
        let tiny = DbmState::new(vec![1e-13, 0.6], ProcessKind::Raw).unwrap();
        let zero = NoiseBlock {
            db: DVector::zeros(2),
            dt: 1.0,
            min_eig_pre: 0.5,
            mode: NoiseMode::Independent,
        };
        match step(&tiny, &model, 1.0, &zero, &mut rng) {
            Err(DbmError::RetryExhausted { halvings, .. }) => {
                assert_eq!(halvings, MAX_HALVINGS)
            }
            other => panic!("expected retry exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_at_zero_time_is_initial_spectrum() {
        let x0 = sample_iid(
            &EnsembleSpec {
                symmetry: Symmetry::Real,
                law: EntryLaw::Gaussian,
                n: 8,
                seed: 11,
            },
            0,
        )
        .unwrap();
        let traj =
            matrix_flow_trajectory(&x0, C64::new(0.3, 0.4), 0.0, 1e-3, 4).unwrap();
        assert_eq!(traj.len(), 1);
        assert!(traj[0].noise_projection.is_none());
        let sv = spectral::singular_values(&x0.data, C64::new(0.3, 0.4)).unwrap();
        let d0 = &traj[0].decomposition;
        for (i, s) in sv.iter().enumerate() {
            assert!((d0.lambda((i + 1) as i64) - s).abs() < 1e-9);
        }
    }

    #[test]
    fn short_time_particle_variance_is_diffusive() {
        // var(lambda_1(t) - lambda_1(0)) should double when t doubles, for t
        // below 1/n.
        let n = 24;
        let z = C64::new(0.3, 0.4);
        let t_long = 0.5 / n as f64;
        let mut deltas = (Vec::new(), Vec::new());
        for trial in 0..200 {
            let x0 = sample_iid(
                &EnsembleSpec {
                    symmetry: Symmetry::Real,
                    law: EntryLaw::Gaussian,
                    n,
                    seed: 13,
                },
                trial,
            )
            .unwrap();
            for (slot, t) in [(0usize, t_long / 2.0), (1, t_long)] {
                let traj = matrix_flow_trajectory(&x0, z, t, t, 1).unwrap();
                let last = traj.last().unwrap();
                let delta = last.decomposition.lambda(1) - traj[0].decomposition.lambda(1);
                if slot == 0 {
                    deltas.0.push(delta);
                } else {
                    deltas.1.push(delta);
                }
            }
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        let ratio = var(&deltas.1) / var(&deltas.0);
        assert!((1.6..=2.4).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn coupled_sde_converges_to_matrix_eigenvalues() {
        // Strong-order check on a single Brownian path: the SDE driven by
        // the exported matrix noise tracks the matrix eigenvalues, with the
        // discrepancy shrinking when the shared path is integrated at 4x
        // finer resolution. The additive matrix flow is discretization-free,
        // so coarse steps built by summing fine noise increments ride the
        // identical path.
        let n = 32;
        let z = C64::new(0.3, 0.4);
        let t_final = 0.2 / n as f64;
        let fine_steps = 32;
        let h_fine = t_final / fine_steps as f64;
        let x0 = sample_iid(
            &EnsembleSpec {
                symmetry: Symmetry::Real,
                law: EntryLaw::Gaussian,
                n,
                seed: 17,
            },
            0,
        )
        .unwrap();
        let mut rng = test_rng(11);
        let fine: Vec<(f64, MatrixData)> = (0..fine_steps)
            .map(|_| (h_fine, standard_matrix(n, Symmetry::Real, &mut rng)))
            .collect();
        let coarse: Vec<(f64, MatrixData)> = fine
            .chunks(4)
            .map(|chunk| {
                let mut acc = DMatrix::zeros(n, n);
                for (_, g) in chunk {
                    acc += g.as_real().unwrap();
                }
                (4.0 * h_fine, MatrixData::Real(acc / 2.0))
            })
            .collect();
        let mut errors = Vec::new();
        for schedule in [&coarse, &fine] {
            let traj = matrix_flow_trajectory_with(&x0, z, schedule, n).unwrap();
            let mut rng_b = test_rng(12);
            let sde =
                integrate_along_flow(&traj, f64::INFINITY, DEFAULT_OMEGA_R, &mut rng_b)
                    .unwrap();
            let matrix_end =
                DbmState::from_decomposition(&traj.last().unwrap().decomposition, ProcessKind::Raw)
                    .unwrap();
            errors.push(coupling_distance(&matrix_end, &sde, n, 1.0, 1.0).unwrap());
        }
        assert!(
            errors[1] < errors[0],
            "fine error {} should beat coarse {}",
            errors[1],
            errors[0]
        );
        // Both integrations stay within the short-time diffusion scale.
        assert!(errors[1] < (t_final / n as f64).sqrt(), "fine error {}", errors[1]);
    }

    #[test]
    fn coupling_distance_basics() {
        let a = DbmState::new(vec![0.2, 0.5, 0.9], ProcessKind::Raw).unwrap();
        let b = DbmState::new(vec![0.25, 0.5, 1.4], ProcessKind::Ginibre).unwrap();
        assert_eq!(coupling_distance(&a, &a, 3, 1.0, 1.0).unwrap(), 0.0);
        let d1 = coupling_distance(&a, &b, 1, 1.0, 1.0).unwrap();
        let d3 = coupling_distance(&a, &b, 3, 1.0, 1.0).unwrap();
        assert!((d1 - 0.05).abs() < 1e-15);
        assert!((d3 - 0.5).abs() < 1e-15);
        assert!(d3 >= d1);
        assert!(matches!(
            coupling_distance(&a, &b, 5, 1.0, 1.0),
            Err(DbmError::WindowMismatch { .. })
        ));
        // Rescaling: distance of (2a, a) with scales (1, 2) vanishes.
        let doubled =
            DbmState::new(a.positive().iter().map(|x| 2.0 * x).collect(), ProcessKind::Raw)
                .unwrap();
        assert!(coupling_distance(&doubled, &a, 3, 1.0, 2.0).unwrap() < 1e-15);
    }

    #[test]
    fn ginibre_initial_is_ordered() {
        let s = ginibre_initial(16, 23, 0).unwrap();
        assert_eq!(s.n(), 16);
        assert!(strictly_increasing_positive(s.positive()));
        assert_eq!(s.kind, ProcessKind::Ginibre);
    }

    #[test]
    fn jsonl_serialization_shape() {
        let a = DbmState::new(vec![0.2, 0.5, 0.9], ProcessKind::Raw).unwrap();
        let mut b = DbmState::new(vec![0.3, 0.6, 1.0], ProcessKind::Interpolated(0.5)).unwrap();
        b.t = 0.125;
        let mut buf = Vec::new();
        write_trajectory_jsonl(&mut buf, &[a, b], 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["particles"].as_array().unwrap().len(), 2);
        assert_eq!(v["kind"], "raw");
        let w: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(w["t"], 0.125);
        assert_eq!(w["kind"]["interpolated"], 0.5);
    }
}
