//! Monte Carlo experiment driver: linear-statistics CLT verification,
//! small-singular-value universality and independence, coupled eigenvalue
//! flows, the log-determinant identity, complex-eigenvalue density checks,
//! and overlap decay, plus statistics aggregation and persistence.
//!
//! Experiments are described by a JSON-serializable [`ExperimentConfig`].
//! Trials are dispatched to a worker pool; each worker is a pure function of
//! (config, trial index) with its own random stream, so a full experiment
//! re-run with the same config and seed reproduces every trial bitwise and
//! the merged output does not depend on the number of threads.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::cltpred::{self, CltError, PredictedMoments};
use crate::dbm::{self, CorrelationModel, DbmError, DbmState, NoiseBlock, NoiseMode, ProcessKind};
use crate::ensemble::{self, EnsembleError, EnsembleSpec, EntryLaw, MatrixData, MatrixSample, Symmetry};
use crate::mde;
use crate::rng::StreamKey;
use crate::spectral::{self, SpectralError};
use crate::stats::{self, Histogram, NormalityReport, StatsError, ZComparison};
use crate::testfn::{TestFnParseError, TestFunction};
use crate::C64;

/// Schema tag stamped into every persisted file's header record.
pub const SCHEMA_VERSION: &str = "spectra-clt.v1";

/// Minimal distance required between the shift points (and their
/// conjugates) of the independence experiment.
pub const Z_SEPARATION: f64 = 0.1;

/// Seed salt deriving the independent complex reference ensemble.
const REFERENCE_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
/// Seed salt for the bridge-refinement noise of the coupled flow.
const BRIDGE_SEED_SALT: u64 = 0x0DD0_2B1D_6E55_1234;
/// Seed salt for the Ginibre reference process.
const GINIBRE_SEED_SALT: u64 = 0x51B6_0E55_ACC0_01AD;

/// Time steps used by the coupled-flow experiment.
const DBM_STEPS: usize = 24;

/// Errors from experiment configuration and execution.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Invalid or hypothesis-violating configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Too few trials or samples for the requested statistic.
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    /// Every trial failed in the eigensolver.
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
    /// Persisted file carries a different schema tag.
    #[error("schema mismatch: found {found:?}, expected {expected:?}")]
    SchemaMismatch {
        found: String,
        expected: &'static str,
    },
    /// Propagated test-function parse failure.
    #[error(transparent)]
    Parse(#[from] TestFnParseError),
    /// Propagated statistics failure.
    #[error(transparent)]
    Stats(#[from] StatsError),
    /// Propagated sampling failure.
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    /// Propagated spectral failure.
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    /// Propagated prediction failure.
    #[error(transparent)]
    Prediction(#[from] CltError),
    /// Propagated particle-flow failure.
    #[error(transparent)]
    Dbm(#[from] DbmError),
    /// Propagated density-solver failure.
    #[error(transparent)]
    Mde(#[from] mde::MdeError),
    /// I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// JSON encoding/decoding failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// CSV encoding failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Which experiment a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Linear eigenvalue statistics against predicted mean/variance.
    Clt,
    /// Rescaled smallest singular value vs the complex reference ensemble.
    Universality,
    /// Resolvent-trace decorrelation and joint-law factorization.
    Independence,
    /// Matrix flow vs regularized particle flow vs Ginibre reference.
    DbmCoupling,
    /// Log-determinant identity residuals.
    GirkoCheck,
    /// Complex-eigenvalue density of the real Gaussian ensemble.
    Edelman,
    /// Cross-shift overlap decay across dimensions.
    Overlaps,
}

/// Serializable ensemble description (mirrors [`EnsembleSpec`] for the
/// built-in entry laws).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EnsembleConfig {
    /// "real" or "complex".
    #[serde(default = "default_symmetry")]
    pub symmetry: String,
    /// "gaussian", "rademacher" or "uniform".
    #[serde(default = "default_law")]
    pub law: String,
    /// Matrix dimension.
    pub n: usize,
    /// Master seed; trial streams derive from (seed, trial, step).
    pub seed: u64,
}

fn default_symmetry() -> String {
    "real".into()
}

fn default_law() -> String {
    "gaussian".into()
}

impl EnsembleConfig {
    /// Resolves the textual fields into a sampling spec.
    pub fn to_spec(&self) -> Result<EnsembleSpec, HarnessError> {
        let symmetry = match self.symmetry.as_str() {
            "real" => Symmetry::Real,
            "complex" => Symmetry::Complex,
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown symmetry {other:?} (expected \"real\" or \"complex\")"
                )))
            }
        };
        let law: EntryLaw = self.law.parse()?;
        Ok(EnsembleSpec {
            symmetry,
            law,
            n: self.n,
            seed: self.seed,
        })
    }
}

/// Cutoff/scale exponents; defaults honor the hierarchy used throughout.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Exponents {
    /// Overlap cutoff exponent: corrections are dropped above n^{-omega_e}.
    #[serde(default = "def_omega_e")]
    pub omega_e: f64,
    /// Noise-regularization exponent of the comparison process.
    #[serde(default = "def_omega_r")]
    pub omega_r: f64,
    /// Flow-horizon exponent: coupled flows run to t_f = n^{-1+omega_f}.
    #[serde(default = "def_omega_f")]
    pub omega_f: f64,
    /// Lower mesoscopic window exponent: eta >= n^{-1-delta_0}.
    #[serde(default = "def_delta")]
    pub delta_0: f64,
    /// Upper mesoscopic window exponent: eta <= n^{-1+delta_1}.
    #[serde(default = "def_delta")]
    pub delta_1: f64,
}

fn def_omega_e() -> f64 {
    dbm::DEFAULT_OMEGA_E
}
fn def_omega_r() -> f64 {
    dbm::DEFAULT_OMEGA_R
}
fn def_omega_f() -> f64 {
    0.2
}
fn def_delta() -> f64 {
    0.1
}

impl Default for Exponents {
    fn default() -> Self {
        Exponents {
            omega_e: def_omega_e(),
            omega_r: def_omega_r(),
            omega_f: def_omega_f(),
            delta_0: def_delta(),
            delta_1: def_delta(),
        }
    }
}

/// Full experiment description; JSON round-trippable.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    /// Experiment selector.
    pub experiment: ExperimentKind,
    /// Matrix ensemble.
    #[serde(alias = "spec")]
    pub ensemble: EnsembleConfig,
    /// Number of Monte Carlo trials (or runs/matrices, per experiment).
    pub trials: usize,
    /// Test functions in the text grammar (z^k, re(z^k), bump(c,r), ...).
    #[serde(default)]
    pub test_functions: Vec<String>,
    /// Shift points; meaning is experiment-specific.
    #[serde(default)]
    pub z_points: Vec<C64>,
    /// Spectral parameters eta for resolvent traces.
    #[serde(default)]
    pub eta_grid: Vec<f64>,
    /// Scale exponents.
    #[serde(default)]
    pub exponents: Exponents,
    /// Optional JSON-lines output path for raw trial records.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Grid resolution per side for the log-determinant identity.
    #[serde(default)]
    pub grid_per_side: Option<usize>,
    /// Dimension sweep for the overlap-decay experiment.
    #[serde(default)]
    pub n_values: Option<Vec<usize>>,
    /// Worker threads (default: all available).
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Parses a config from JSON text.
    pub fn from_json(text: &str) -> Result<ExperimentConfig, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads and parses a config file.
    pub fn from_file(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let mut buf = String::new();
        File::open(path)?.read_to_string(&mut buf)?;
        ExperimentConfig::from_json(&buf)
    }

    /// Validates all experiment hypotheses up front.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let spec = self.ensemble.to_spec()?;
        let n = spec.n as f64;
        if spec.n < 2 {
            return Err(HarnessError::Config(format!(
                "dimension must be at least 2, got {}",
                spec.n
            )));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be positive".into()));
        }
        for text in &self.test_functions {
            TestFunction::parse(text)?;
        }
        match self.experiment {
            ExperimentKind::Clt => {
                if self.test_functions.is_empty() {
                    return Err(HarnessError::Config(
                        "clt experiment needs at least one test function".into(),
                    ));
                }
                if self.trials < 100 {
                    return Err(HarnessError::Config(format!(
                        "clt experiment needs at least 100 trials, got {}",
                        self.trials
                    )));
                }
            }
            ExperimentKind::Universality => {
                let z = self.primary_z()?;
                if z.norm() > 0.95 || z.im.abs() < 0.1 {
                    return Err(HarnessError::Config(format!(
                        "universality needs |z| <= 0.95 and |Im z| >= 0.1, got {z}"
                    )));
                }
                if let Some(zc) = self.z_points.get(1) {
                    if zc.im != 0.0 {
                        return Err(HarnessError::Config(format!(
                            "universality control point must be real, got {zc}"
                        )));
                    }
                }
            }
            ExperimentKind::Independence => {
                if self.z_points.len() < 2 {
                    return Err(HarnessError::Config(
                        "independence needs two shift points".into(),
                    ));
                }
                let zs = &self.z_points;
                for l in 0..zs.len() {
                    if 2.0 * zs[l].im.abs() < Z_SEPARATION {
                        return Err(HarnessError::Config(format!(
                            "shift {} too close to its conjugate: |Im z| = {}",
                            zs[l],
                            zs[l].im.abs()
                        )));
                    }
                    for m in 0..zs.len() {
                        if l != m && (zs[l] - zs[m]).norm() < Z_SEPARATION {
                            return Err(HarnessError::Config(format!(
                                "shifts {} and {} closer than {Z_SEPARATION}",
                                zs[l], zs[m]
                            )));
                        }
                        if (zs[l] - zs[m].conj()).norm() < Z_SEPARATION {
                            return Err(HarnessError::Config(format!(
                                "shift {} too close to the conjugate of {}",
                                zs[l], zs[m]
                            )));
                        }
                    }
                }
                let lo = n.powf(-1.0 - self.exponents.delta_0) * (1.0 - 1e-12);
                let hi = n.powf(-1.0 + self.exponents.delta_1) * (1.0 + 1e-12);
                for &eta in &self.eta_grid {
                    if !(lo..=hi).contains(&eta) {
                        return Err(HarnessError::Config(format!(
                            "eta = {eta} outside the mesoscopic window [{lo:.3e}, {hi:.3e}]"
                        )));
                    }
                }
            }
            ExperimentKind::DbmCoupling => {
                if spec.n > 64 {
                    return Err(HarnessError::Config(format!(
                        "coupled-flow experiment limited to n <= 64, got {}",
                        spec.n
                    )));
                }
                let z = self.primary_z()?;
                if z.norm() >= 1.0 {
                    return Err(HarnessError::Config(format!(
                        "flow shift must satisfy |z| < 1, got {z}"
                    )));
                }
            }
            ExperimentKind::GirkoCheck => {
                if self.test_functions.is_empty() {
                    return Err(HarnessError::Config(
                        "identity check needs a test function".into(),
                    ));
                }
                if self.grid_per_side.unwrap_or(128) < 8 {
                    return Err(HarnessError::Config("grid too coarse (< 8 per side)".into()));
                }
            }
            ExperimentKind::Edelman => {
                if spec.symmetry != Symmetry::Real || !matches!(spec.law, EntryLaw::Gaussian) {
                    return Err(HarnessError::Config(
                        "density experiment requires the real Gaussian ensemble".into(),
                    ));
                }
                if spec.n < 50 {
                    return Err(HarnessError::Config(
                        "density experiment needs n >= 50 for interior bins".into(),
                    ));
                }
            }
            ExperimentKind::Overlaps => {
                if self.z_points.len() < 2 {
                    return Err(HarnessError::Config(
                        "overlap experiment needs two shift points".into(),
                    ));
                }
                for nv in self.n_values_or_default() {
                    if nv < 8 {
                        return Err(HarnessError::Config(format!(
                            "overlap dimension {nv} too small"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn primary_z(&self) -> Result<C64, HarnessError> {
        self.z_points
            .first()
            .copied()
            .ok_or_else(|| HarnessError::Config("experiment needs a shift point z".into()))
    }

    fn n_values_or_default(&self) -> Vec<usize> {
        self.n_values.clone().unwrap_or_else(|| {
            let n = self.ensemble.n;
            vec![(n / 4).max(8), (n / 2).max(8), n]
        })
    }
}

/// Runs a closure on a dedicated pool of `threads` workers (or the global
/// pool when unset).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .expect("worker pool")
            .install(f),
    }
}

// ---------------------------------------------------------------------------
// Trial records
// ---------------------------------------------------------------------------

/// One linear statistic Sum f(sigma_i), uncentered.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NamedStatistic {
    /// Test-function name.
    pub name: String,
    /// Sum of f over the eigenvalues of this trial's matrix.
    pub value: C64,
}

/// Normalized resolvent trace of the shifted Hermitization at i eta.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ResolventPoint {
    /// Shift point.
    pub z: C64,
    /// Spectral parameter.
    pub eta: f64,
    /// (2n)^{-1} Tr (H^z - i eta)^{-1}; purely imaginary by symmetry.
    pub trace: C64,
}

/// Smallest singular values of X - z.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SingularPoint {
    /// Shift point.
    pub z: C64,
    /// Smallest singular value.
    pub lambda1: f64,
    /// Second-smallest singular value.
    pub lambda2: f64,
}

/// Everything measured on one sampled matrix. Reproducible bitwise from
/// (config, trial_index).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrialResult {
    /// Trial index (also the random-stream index).
    pub trial_index: u64,
    /// Linear statistics, one per configured test function.
    pub statistics: Vec<NamedStatistic>,
    /// Resolvent traces at every configured (z, eta).
    pub resolvent_traces: Vec<ResolventPoint>,
    /// Smallest singular values at every configured z.
    pub smallest_singular: Vec<SingularPoint>,
    /// Wall-clock time of the trial in milliseconds (not reproducible).
    pub runtime_ms: f64,
}

/// Eigenvalues via a Schur decomposition; None when the iteration fails.
pub fn try_eigenvalues(data: &MatrixData) -> Option<Vec<C64>> {
    const MAX_ITER: usize = 50_000;
    match data {
        MatrixData::Real(m) => {
            nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, MAX_ITER)
                .map(|s| s.complex_eigenvalues().iter().copied().collect())
        }
        MatrixData::Complex(m) => {
            nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, MAX_ITER)
                .and_then(|s| s.eigenvalues())
                .map(|v| v.iter().copied().collect())
        }
    }
}

/// Normalized imaginary resolvent trace from the positive singular values:
/// Im <G^z(i eta)> = n^{-1} Sum_i eta / (lambda_i^2 + eta^2).
fn imag_resolvent_trace(sv: &[f64], eta: f64) -> f64 {
    sv.iter().map(|l| eta / (l * l + eta * eta)).sum::<f64>() / sv.len() as f64
}

/// Runs one trial. Returns Ok(None) when the eigensolver fails (the trial is
/// skipped and counted by the caller).
fn run_trial(
    spec: &EnsembleSpec,
    trial: u64,
    funcs: &[TestFunction],
    z_points: &[C64],
    etas: &[f64],
) -> Result<Option<TrialResult>, HarnessError> {
    let t0 = Instant::now();
    let sample = ensemble::sample_iid(spec, trial)?;
    let mut statistics = Vec::with_capacity(funcs.len());
    if !funcs.is_empty() {
        let Some(eigs) = try_eigenvalues(&sample.data) else {
            return Ok(None);
        };
        for f in funcs {
            let value = eigs.iter().map(|&l| f.eval(l)).sum();
            statistics.push(NamedStatistic {
                name: f.name().to_string(),
                value,
            });
        }
    }
    let mut resolvent_traces = Vec::new();
    let mut smallest_singular = Vec::new();
    for &z in z_points {
        let sv = spectral::singular_values(&sample.data, z)?;
        smallest_singular.push(SingularPoint {
            z,
            lambda1: sv[0],
            lambda2: if sv.len() > 1 { sv[1] } else { sv[0] },
        });
        for &eta in etas {
            resolvent_traces.push(ResolventPoint {
                z,
                eta,
                trace: C64::new(0.0, imag_resolvent_trace(&sv, eta)),
            });
        }
    }
    Ok(Some(TrialResult {
        trial_index: trial,
        statistics,
        resolvent_traces,
        smallest_singular,
        runtime_ms: t0.elapsed().as_secs_f64() * 1e3,
    }))
}

/// Collects `trials` trial results in parallel, merged in index order.
/// Returns the completed records and the skipped-trial count.
fn collect_trials(
    spec: &EnsembleSpec,
    trials: usize,
    funcs: &[TestFunction],
    z_points: &[C64],
    etas: &[f64],
) -> Result<(Vec<TrialResult>, usize), HarnessError> {
    let results: Vec<Option<TrialResult>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(spec, t, funcs, z_points, etas))
        .collect::<Result<_, _>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let done: Vec<TrialResult> = results.into_iter().flatten().collect();
    if done.is_empty() {
        return Err(HarnessError::AllTrialsFailed(trials));
    }
    Ok((done, skipped))
}

// ---------------------------------------------------------------------------
// CLT experiment
// ---------------------------------------------------------------------------

/// Per-function comparison of Monte Carlo moments against predictions.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FunctionSummary {
    /// Test-function name.
    pub name: String,
    /// Mean of Re Sum f vs the predicted expectation (batch-means SE).
    pub mean_re: ZComparison,
    /// Mean of Im Sum f vs the predicted expectation.
    pub mean_im: ZComparison,
    /// Total complex variance E|L - mean|^2 vs the predicted variance.
    pub variance: ZComparison,
    /// Batch-means SE of the real part.
    pub batch_se: f64,
    /// Naive SE of the real part.
    pub naive_se: f64,
    /// Sample skewness of the real part.
    pub skewness: f64,
    /// Sample excess kurtosis of the real part.
    pub excess_kurtosis: f64,
    /// Normality tests on the standardized real part.
    pub normality_real: NormalityReport,
    /// Normality tests on the imaginary part when it fluctuates.
    pub normality_imag: Option<NormalityReport>,
}

/// Aggregated output of the CLT experiment.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SummaryStats {
    /// Schema tag.
    pub schema: String,
    /// Matrix dimension.
    pub n: usize,
    /// Trials requested.
    pub trials_requested: usize,
    /// Trials completed.
    pub trials_completed: usize,
    /// Trials skipped on eigensolver failure (counted, never dropped).
    pub skipped: usize,
    /// Fourth cumulant of the entry law.
    pub kappa4: f64,
    /// Per-function comparisons.
    pub functions: Vec<FunctionSummary>,
    /// Empirical covariance of the real parts across functions (symmetric
    /// PSD by construction).
    pub covariance: Vec<Vec<f64>>,
    /// Deterministic predictions the comparisons were made against.
    pub predictions: Vec<PredictedMoments>,
    /// Largest relative deviation between batch-means and naive SEs across
    /// functions; values far from 0 indicate cross-trial dependence.
    pub max_batch_naive_deviation: f64,
}

impl SummaryStats {
    /// Desk-scale acceptance: every mean within 3 SE, every variance within
    /// 4 SE, and no skipped trials.
    pub fn passes(&self) -> bool {
        self.skipped == 0
            && self.functions.iter().all(|f| {
                f.mean_re.z.abs() <= 3.0
                    && (f.mean_im.se == 0.0 || f.mean_im.z.abs() <= 3.0)
                    && f.variance.z.abs() <= 4.0
            })
    }

    /// Human-readable report.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "CLT run: n = {}, trials = {} ({} skipped), kappa4 = {}\n",
            self.n, self.trials_completed, self.skipped, self.kappa4
        );
        for f in &self.functions {
            out.push_str(&format!(
                "  {}: mean {:.6} (SE {:.2e}, predicted {:.6}, z = {:+.2}); \
                 variance {:.6} (SE {:.2e}, predicted {:.6}, z = {:+.2}); AD p = {:.3}\n",
                f.name,
                f.mean_re.estimate,
                f.mean_re.se,
                f.mean_re.prediction,
                f.mean_re.z,
                f.variance.estimate,
                f.variance.se,
                f.variance.prediction,
                f.variance.z,
                f.normality_real.p_anderson_darling,
            ));
        }
        out
    }
}

/// Output of the CLT experiment: raw trials plus the aggregated summary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CltRun {
    /// Aggregated statistics.
    pub summary: SummaryStats,
    /// Raw per-trial records.
    pub trials: Vec<TrialResult>,
}

/// Samples linear eigenvalue statistics and compares their first two moments
/// (and normality) against the deterministic predictions.
pub fn run_clt(config: &ExperimentConfig) -> Result<CltRun, HarnessError> {
    config.validate()?;
    if config.experiment != ExperimentKind::Clt {
        return Err(HarnessError::Config("config is not a clt experiment".into()));
    }
    let spec = config.ensemble.to_spec()?;
    let kappa4 = ensemble::kappa4_of(&spec.law)?;
    let funcs: Vec<TestFunction> = config
        .test_functions
        .iter()
        .map(|t| TestFunction::parse(t))
        .collect::<Result<_, _>>()?;
    let predictions: Vec<PredictedMoments> = funcs
        .iter()
        .map(|f| cltpred::predict(f, kappa4, spec.n))
        .collect::<Result<_, _>>()?;
    let (trials, skipped) =
        collect_trials(&spec, config.trials, &funcs, &config.z_points, &config.eta_grid)?;
    let t = trials.len();
    let mut functions = Vec::with_capacity(funcs.len());
    let mut re_series: Vec<Vec<f64>> = Vec::with_capacity(funcs.len());
    for (idx, pred) in predictions.iter().enumerate() {
        let values: Vec<C64> = trials.iter().map(|r| r.statistics[idx].value).collect();
        let re: Vec<f64> = values.iter().map(|v| v.re).collect();
        let im: Vec<f64> = values.iter().map(|v| v.im).collect();
        let mean = C64::new(
            re.iter().sum::<f64>() / t as f64,
            im.iter().sum::<f64>() / t as f64,
        );
        let batch = stats::batch_means_se(&re, stats::default_batches(t))?;
        let naive = stats::naive_se(&re)?;
        let im_se = stats::naive_se(&im)?;
        // Total complex variance against the predicted variance, with a
        // delta-method SE from the squared deviations.
        let dev2: Vec<f64> = values.iter().map(|v| (v - mean).norm_sqr()).collect();
        let var_est = dev2.iter().sum::<f64>() / (t as f64 - 1.0);
        let var_se = stats::naive_se(&dev2)? * t as f64 / (t as f64 - 1.0);
        let m = stats::moments(&re)?;
        let normality_real = stats::normality_test(&re)?;
        let normality_imag = if im_se > 1e-10 * (1.0 + mean.norm()) {
            Some(stats::normality_test(&im)?)
        } else {
            None
        };
        functions.push(FunctionSummary {
            name: pred.name.clone(),
            mean_re: stats::z_comparison(mean.re, batch, pred.e_f.re),
            mean_im: ZComparison {
                estimate: mean.im,
                se: im_se,
                prediction: pred.e_f.im,
                z: if im_se > 0.0 {
                    (mean.im - pred.e_f.im) / im_se
                } else {
                    0.0
                },
            },
            variance: stats::z_comparison(var_est, var_se, pred.v_f),
            batch_se: batch,
            naive_se: naive,
            skewness: m.skewness,
            excess_kurtosis: m.excess_kurtosis,
            normality_real,
            normality_imag,
        });
        re_series.push(re);
    }
    // Empirical covariance of the real parts (a centered Gram matrix, hence
    // symmetric PSD).
    let k = re_series.len();
    let mut covariance = vec![vec![0.0; k]; k];
    for a in 0..k {
        let ma = re_series[a].iter().sum::<f64>() / t as f64;
        for b in a..k {
            let mb = re_series[b].iter().sum::<f64>() / t as f64;
            let c = (0..t)
                .map(|i| (re_series[a][i] - ma) * (re_series[b][i] - mb))
                .sum::<f64>()
                / (t as f64 - 1.0);
            covariance[a][b] = c;
            covariance[b][a] = c;
        }
    }
    let max_batch_naive_deviation = functions
        .iter()
        .map(|f| (f.batch_se / f.naive_se - 1.0).abs())
        .fold(0.0, f64::max);
    let summary = SummaryStats {
        schema: SCHEMA_VERSION.to_string(),
        n: spec.n,
        trials_requested: config.trials,
        trials_completed: t,
        skipped,
        kappa4,
        functions,
        covariance,
        predictions,
        max_batch_naive_deviation,
    };
    Ok(CltRun { summary, trials })
}

// ---------------------------------------------------------------------------
// Universality and independence experiments
// ---------------------------------------------------------------------------

/// A labeled histogram.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NamedHistogram {
    /// What was binned.
    pub label: String,
    /// The normalized histogram.
    pub histogram: Histogram,
}

/// A labeled Kolmogorov-Smirnov distance.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct KsEntry {
    /// Which pair of samples was compared.
    pub label: String,
    /// sup-norm ECDF distance.
    pub distance: f64,
}

/// Correlation of resolvent traces at one spectral parameter.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CorrelationEntry {
    /// Spectral parameter.
    pub eta: f64,
    /// Pearson correlation across trials.
    pub correlation: f64,
    /// Asymptotic SE (1 - r^2)/sqrt(T - 1).
    pub se: f64,
}

/// Output of the universality and independence experiments.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CorrelationEstimate {
    /// Normalized histograms of rescaled small singular values.
    pub histograms: Vec<NamedHistogram>,
    /// ECDF distances between rescaled samples (universality).
    pub ks_distances: Vec<KsEntry>,
    /// Resolvent-trace correlations per eta (independence).
    pub correlations: Vec<CorrelationEntry>,
    /// Sup distance between the joint law of (lambda_1^{z_1}, lambda_1^{z_2})
    /// and the product of its marginals on an 8x8 grid (independence).
    pub joint_product_distance: Option<f64>,
    /// Rescaled n rho(0) lambda_1 samples of the primary ensemble.
    pub rescaled_primary: Vec<f64>,
    /// Rescaled samples of the complex reference ensemble.
    pub rescaled_reference: Vec<f64>,
    /// Rescaled samples of the real-axis negative control (universality).
    pub rescaled_control: Vec<f64>,
    /// Skipped trials across all sample sets.
    pub skipped: usize,
}

impl CorrelationEstimate {
    /// Desk-scale acceptance. Universality runs check the reference distance
    /// and the negative control; independence runs check decorrelation and
    /// joint-law factorization.
    pub fn passes(&self) -> bool {
        let ks_ok = self.ks_distances.iter().all(|e| {
            if e.label.contains("control") {
                e.distance > 0.15
            } else {
                e.distance < 0.08
            }
        });
        let corr_ok = self.correlations.iter().all(|c| c.correlation.abs() < 0.1);
        let joint_ok = self.joint_product_distance.map_or(true, |d| d < 0.05);
        ks_ok && corr_ok && joint_ok
    }

    /// Human-readable report.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for e in &self.ks_distances {
            out.push_str(&format!("  KS {}: {:.4}\n", e.label, e.distance));
        }
        for c in &self.correlations {
            out.push_str(&format!(
                "  corr at eta = {:.3e}: {:+.4} (SE {:.4})\n",
                c.eta, c.correlation, c.se
            ));
        }
        if let Some(d) = self.joint_product_distance {
            out.push_str(&format!("  joint vs product sup distance: {d:.4}\n"));
        }
        out
    }
}

fn rescaled_lambda1(trials: &[TrialResult], n: usize, rho: f64, slot: usize) -> Vec<f64> {
    trials
        .iter()
        .map(|r| n as f64 * rho * r.smallest_singular[slot].lambda1)
        .collect()
}

/// Compares the rescaled smallest singular value of the primary ensemble
/// against an independent complex Gaussian reference, with a real-axis
/// negative control.
pub fn run_universality(config: &ExperimentConfig) -> Result<CorrelationEstimate, HarnessError> {
    config.validate()?;
    if config.experiment != ExperimentKind::Universality {
        return Err(HarnessError::Config(
            "config is not a universality experiment".into(),
        ));
    }
    let spec = config.ensemble.to_spec()?;
    let n = spec.n;
    let z0 = config.primary_z()?;
    let z_control = config
        .z_points
        .get(1)
        .copied()
        .unwrap_or_else(|| C64::new(0.5, 0.0));
    let rho0 = mde::rho_at_zero_bulk(z0);
    let rho_c = mde::rho_at_zero_bulk(z_control);
    let reference_spec = EnsembleSpec {
        symmetry: Symmetry::Complex,
        law: EntryLaw::Gaussian,
        n,
        seed: spec.seed ^ REFERENCE_SEED_SALT,
    };
    let (primary, s1) = collect_trials(&spec, config.trials, &[], &[z0], &[])?;
    let (reference, s2) = collect_trials(&reference_spec, config.trials, &[], &[z0], &[])?;
    let (control, s3) = collect_trials(&spec, config.trials, &[], &[z_control], &[])?;
    let rp = rescaled_lambda1(&primary, n, rho0, 0);
    let rr = rescaled_lambda1(&reference, n, rho0, 0);
    let rc = rescaled_lambda1(&control, n, rho_c, 0);
    let second = |set: &[TrialResult], rho: f64| -> Vec<f64> {
        set.iter()
            .map(|r| n as f64 * rho * r.smallest_singular[0].lambda2)
            .collect()
    };
    let histograms = vec![
        NamedHistogram {
            label: "primary_lambda1".into(),
            histogram: stats::histogram(&rp, 0.0, 4.0, 32)?,
        },
        NamedHistogram {
            label: "reference_lambda1".into(),
            histogram: stats::histogram(&rr, 0.0, 4.0, 32)?,
        },
        NamedHistogram {
            label: "control_lambda1".into(),
            histogram: stats::histogram(&rc, 0.0, 4.0, 32)?,
        },
        NamedHistogram {
            label: "primary_lambda2".into(),
            histogram: stats::histogram(&second(&primary, rho0), 0.0, 6.0, 32)?,
        },
        NamedHistogram {
            label: "reference_lambda2".into(),
            histogram: stats::histogram(&second(&reference, rho0), 0.0, 6.0, 32)?,
        },
    ];
    // The complex-class rescaled law is shift-invariant, so the z0 reference
    // also serves as the control's comparison set.
    let ks_distances = vec![
        KsEntry {
            label: "real_vs_ginibre".into(),
            distance: stats::ks_two_sample(&rp, &rr)?,
        },
        KsEntry {
            label: "real_axis_control_vs_ginibre".into(),
            distance: stats::ks_two_sample(&rc, &rr)?,
        },
    ];
    Ok(CorrelationEstimate {
        histograms,
        ks_distances,
        correlations: Vec::new(),
        joint_product_distance: None,
        rescaled_primary: rp,
        rescaled_reference: rr,
        rescaled_control: rc,
        skipped: s1 + s2 + s3,
    })
}

/// Correlation entries for two resolvent-trace series sharing a trial axis.
fn trace_correlations(
    trials: &[TrialResult],
    etas: &[f64],
) -> Result<Vec<CorrelationEntry>, HarnessError> {
    let t = trials.len();
    let mut out = Vec::with_capacity(etas.len());
    for (j, &eta) in etas.iter().enumerate() {
        // Traces are stored [z][eta]-major: slot j for z1, etas.len() + j for z2.
        let s1: Vec<f64> = trials
            .iter()
            .map(|r| r.resolvent_traces[j].trace.im)
            .collect();
        let s2: Vec<f64> = trials
            .iter()
            .map(|r| r.resolvent_traces[etas.len() + j].trace.im)
            .collect();
        let r = stats::pearson_correlation(&s1, &s2)?;
        out.push(CorrelationEntry {
            eta,
            correlation: r,
            se: (1.0 - r * r) / ((t as f64 - 1.0).sqrt()),
        });
    }
    Ok(out)
}

/// Estimates the decorrelation of resolvent traces at two separated shifts
/// and the factorization of the joint law of the smallest singular values.
pub fn run_independence(config: &ExperimentConfig) -> Result<CorrelationEstimate, HarnessError> {
    config.validate()?;
    if config.experiment != ExperimentKind::Independence {
        return Err(HarnessError::Config(
            "config is not an independence experiment".into(),
        ));
    }
    let spec = config.ensemble.to_spec()?;
    let n = spec.n;
    let z1 = config.z_points[0];
    let z2 = config.z_points[1];
    let etas = if config.eta_grid.is_empty() {
        vec![(n as f64).powf(-0.9)]
    } else {
        config.eta_grid.clone()
    };
    let (trials, skipped) = collect_trials(&spec, config.trials, &[], &[z1, z2], &etas)?;
    let correlations = trace_correlations(&trials, &etas)?;
    let l1: Vec<f64> = trials
        .iter()
        .map(|r| r.smallest_singular[0].lambda1)
        .collect();
    let l2: Vec<f64> = trials
        .iter()
        .map(|r| r.smallest_singular[1].lambda1)
        .collect();
    let joint = stats::joint_product_distance(&l1, &l2, 8, 8)?;
    let rho1 = mde::rho_at_zero_bulk(z1);
    let rho2 = mde::rho_at_zero_bulk(z2);
    let rp: Vec<f64> = l1.iter().map(|l| n as f64 * rho1 * l).collect();
    let rr: Vec<f64> = l2.iter().map(|l| n as f64 * rho2 * l).collect();
    let histograms = vec![
        NamedHistogram {
            label: "z1_lambda1".into(),
            histogram: stats::histogram(&rp, 0.0, 4.0, 32)?,
        },
        NamedHistogram {
            label: "z2_lambda1".into(),
            histogram: stats::histogram(&rr, 0.0, 4.0, 32)?,
        },
    ];
    Ok(CorrelationEstimate {
        histograms,
        ks_distances: Vec::new(),
        correlations,
        joint_product_distance: Some(joint),
        rescaled_primary: rp,
        rescaled_reference: rr,
        rescaled_control: Vec::new(),
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Coupled-flow experiment
// ---------------------------------------------------------------------------

/// Output of the coupled-flow experiment.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DbmCouplingReport {
    /// Matrix dimension.
    pub n: usize,
    /// Number of independent runs.
    pub runs: usize,
    /// Euler steps per run.
    pub steps: usize,
    /// Flow horizon n^{-1 + omega_f}.
    pub t_final: f64,
    /// Index window of the coupling distance.
    pub window: usize,
    /// Per-run max_{i <= window} |lambda_i - ring-lambda_i| * n at t_final.
    pub distances_times_n: Vec<f64>,
    /// Median of the above.
    pub median_distance_times_n: f64,
    /// Mean of the above.
    pub mean_distance_times_n: f64,
    /// ECDF distance between rescaled ring-lambda_1 and the rescaled
    /// Ginibre-reference mu_1 at t_final.
    pub ks_regularized_vs_ginibre: f64,
    /// Fraction of steps on which the overlap cutoff tripped.
    pub cutoff_trip_fraction: f64,
    /// Coupling distance at t = 0 (identically 0: same initial data).
    pub initial_distance: f64,
}

impl DbmCouplingReport {
    /// Desk-scale acceptance: sub-rigidity shared-noise coupling, matching
    /// reference distribution, exact initial coincidence.
    pub fn passes(&self) -> bool {
        self.median_distance_times_n <= 0.5
            && self.ks_regularized_vs_ginibre < 0.12
            && self.initial_distance == 0.0
    }

    /// Human-readable report.
    pub fn describe(&self) -> String {
        format!(
            "Coupled flow: n = {}, runs = {}, t_f = {:.4}\n  median n|lambda - ring| = {:.3} \
             (mean {:.3}); KS(ring vs reference) = {:.4}; cutoff tripped on {:.1}% of steps\n",
            self.n,
            self.runs,
            self.t_final,
            self.median_distance_times_n,
            self.mean_distance_times_n,
            self.ks_regularized_vs_ginibre,
            100.0 * self.cutoff_trip_fraction,
        )
    }
}

/// Runs the matrix flow, the shared-noise regularized particle flow, and the
/// independent Ginibre reference to t_f = n^{-1+omega_f}; reports windowed
/// coupling distances (in units of 1/n) and the distributional distance of
/// the rescaled smallest particles.
pub fn run_dbm_coupling(config: &ExperimentConfig) -> Result<DbmCouplingReport, HarnessError> {
    config.validate()?;
    if config.experiment != ExperimentKind::DbmCoupling {
        return Err(HarnessError::Config(
            "config is not a coupled-flow experiment".into(),
        ));
    }
    let spec = config.ensemble.to_spec()?;
    let n = spec.n;
    let z = config.primary_z()?;
    let exps = config.exponents;
    let t_final = (n as f64).powf(-1.0 + exps.omega_f);
    let steps = DBM_STEPS;
    let dt = t_final / steps as f64;
    let cutoff = (n as f64).powf(-exps.omega_e);
    let rho_z = mde::rho_at_zero_bulk(z);
    let rho_ref = mde::rho_at_zero_bulk(C64::new(0.0, 0.0));
    let window = 3.min(n);
    struct RunOut {
        distance_times_n: f64,
        lambda1_rescaled: f64,
        mu1_rescaled: f64,
        trips: usize,
        initial_distance: f64,
    }
    let runs: Vec<RunOut> = (0..config.trials as u64)
        .into_par_iter()
        .map(|r| -> Result<RunOut, HarnessError> {
            let x0 = ensemble::sample_iid(&spec, r)?;
            let traj = dbm::matrix_flow_trajectory(&x0, z, t_final, dt, n)?;
            let matrix_start =
                DbmState::from_decomposition(&traj[0].decomposition, ProcessKind::Raw)?;
            let mut state =
                DbmState::from_decomposition(&traj[0].decomposition, ProcessKind::Regularized)?;
            let initial_distance =
                dbm::coupling_distance(&matrix_start, &state, window, 1.0, 1.0)?;
            let mut bridge_rng = StreamKey::new(spec.seed ^ BRIDGE_SEED_SALT, r, 0).rng();
            let mut trips = 0;
            for k in 1..=steps {
                let model = CorrelationModel::from_overlaps(
                    &traj[k - 1].overlaps,
                    n,
                    cutoff,
                    exps.omega_r,
                );
                if !model.cutoff_active {
                    trips += 1;
                }
                let h = traj[k].t - traj[k - 1].t;
                let raw = NoiseBlock {
                    db: traj[k]
                        .noise_projection
                        .clone()
                        .expect("interior checkpoint carries noise"),
                    dt: h,
                    min_eig_pre: 0.5,
                    mode: NoiseMode::SharedMatrixProjection,
                };
                let noise = dbm::shared_cutoff_noise(&model, &raw)?;
                state = dbm::step(&state, &model, h, &noise, &mut bridge_rng)?.state;
            }
            let matrix_end = DbmState::from_decomposition(
                &traj.last().expect("nonempty trajectory").decomposition,
                ProcessKind::Raw,
            )?;
            let distance_times_n =
                dbm::coupling_distance(&matrix_end, &state, window, 1.0, 1.0)? * n as f64;
            // Independent Ginibre reference process.
            let mut mu = dbm::ginibre_initial(n, spec.seed ^ GINIBRE_SEED_SALT, r)?;
            let indep = CorrelationModel::independent(n);
            let mut mu_rng = StreamKey::new(spec.seed ^ GINIBRE_SEED_SALT, r, 1).rng();
            for _ in 0..steps {
                let noise = dbm::make_noise_independent(n, dt, &mut mu_rng);
                mu = dbm::step(&mu, &indep, dt, &noise, &mut mu_rng)?.state;
            }
            Ok(RunOut {
                distance_times_n,
                lambda1_rescaled: n as f64 * rho_z * state.positive()[0],
                mu1_rescaled: n as f64 * rho_ref * mu.positive()[0],
                trips,
                initial_distance,
            })
        })
        .collect::<Result<_, _>>()?;
    let mut distances: Vec<f64> = runs.iter().map(|r| r.distance_times_n).collect();
    let lam: Vec<f64> = runs.iter().map(|r| r.lambda1_rescaled).collect();
    let mu: Vec<f64> = runs.iter().map(|r| r.mu1_rescaled).collect();
    let initial_distance = runs
        .iter()
        .map(|r| r.initial_distance)
        .fold(0.0, f64::max);
    let trips: usize = runs.iter().map(|r| r.trips).sum();
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    distances.sort_unstable_by(f64::total_cmp);
    let median = distances[distances.len() / 2];
    Ok(DbmCouplingReport {
        n,
        runs: runs.len(),
        steps,
        t_final,
        window,
        median_distance_times_n: median,
        mean_distance_times_n: mean,
        ks_regularized_vs_ginibre: stats::ks_two_sample(&lam, &mu)?,
        cutoff_trip_fraction: trips as f64 / (steps * runs.len()) as f64,
        initial_distance,
        distances_times_n: distances,
    })
}

// ---------------------------------------------------------------------------
// Log-determinant identity experiment
// ---------------------------------------------------------------------------

/// Residual of the identity at one grid resolution.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RefinementLevel {
    /// Grid cells per side.
    pub per_side: usize,
    /// Relative residual at this resolution.
    pub residual: f64,
}

/// Output of the log-determinant identity experiment.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GirkoReport {
    /// Matrix dimension.
    pub n: usize,
    /// Grid cells per side at the finest level.
    pub per_side: usize,
    /// Per-matrix relative residuals |estimate - direct| / max(1, |direct|).
    pub residuals: Vec<f64>,
    /// Median residual.
    pub median_residual: f64,
    /// Residuals of the first matrix under grid refinement (coarse to fine).
    pub refinement: Vec<RefinementLevel>,
    /// Eigensolver-skipped matrices.
    pub skipped: usize,
}

impl GirkoReport {
    /// Desk-scale acceptance: median residual below 1e-2 and monotone
    /// improvement under refinement.
    pub fn passes(&self) -> bool {
        self.median_residual < 1e-2
            && self
                .refinement
                .windows(2)
                .all(|w| w[1].residual < w[0].residual)
    }

    /// Human-readable report.
    pub fn describe(&self) -> String {
        let levels: Vec<String> = self
            .refinement
            .iter()
            .map(|l| format!("{}^2 -> {:.2e}", l.per_side, l.residual))
            .collect();
        format!(
            "Spectral-shift identity: n = {}, grid {}^2, median residual {:.3e} \
             over {} matrices; refinement {}\n",
            self.n,
            self.per_side,
            self.median_residual,
            self.residuals.len(),
            levels.join(", "),
        )
    }
}

fn girko_residual(
    x: &MatrixSample,
    f: &TestFunction,
    per_side: usize,
    n: usize,
) -> Result<Option<f64>, HarnessError> {
    let Some(eigs) = try_eigenvalues(&x.data) else {
        return Ok(None);
    };
    let direct: C64 = eigs.iter().map(|&l| f.eval(l)).sum();
    let grid = cltpred::ZGrid::covering(f, per_side);
    let (cells, area) = cltpred::girko_cells(&x.data, &grid)?;
    let split = cltpred::GirkoSplit::standard(n);
    let est = cltpred::girko_evaluate(&cells, area, f, &split, n, f64::INFINITY)?;
    Ok(Some(
        (est.value - direct).norm() / direct.norm().max(1.0),
    ))
}

/// Checks the log-determinant identity: the grid quadrature of the Laplacian
/// of f against per-cell log-determinants reproduces Sum f(sigma_i).
pub fn run_girko_check(config: &ExperimentConfig) -> Result<GirkoReport, HarnessError> {
    config.validate()?;
    if config.experiment != ExperimentKind::GirkoCheck {
        return Err(HarnessError::Config(
            "config is not an identity-check experiment".into(),
        ));
    }
    let spec = config.ensemble.to_spec()?;
    let f = TestFunction::parse(&config.test_functions[0])?;
    let per_side = config.grid_per_side.unwrap_or(128);
    let results: Vec<Option<f64>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let x = ensemble::sample_iid(&spec, t)?;
            girko_residual(&x, &f, per_side, spec.n)
        })
        .collect::<Result<_, _>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let mut residuals: Vec<f64> = results.into_iter().flatten().collect();
    if residuals.is_empty() {
        return Err(HarnessError::AllTrialsFailed(config.trials));
    }
    // Refinement study on the first matrix: three dyadic levels up to the
    // configured resolution.
    let x0 = ensemble::sample_iid(&spec, 0)?;
    let mut refinement = Vec::new();
    for ps in [per_side / 4, per_side / 2, per_side] {
        if ps >= 8 {
            if let Some(res) = girko_residual(&x0, &f, ps, spec.n)? {
                refinement.push(RefinementLevel {
                    per_side: ps,
                    residual: res,
                });
            }
        }
    }
    let median = {
        let mut sorted = residuals.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        sorted[sorted.len() / 2]
    };
    residuals.sort_unstable_by(f64::total_cmp);
    Ok(GirkoReport {
        n: spec.n,
        per_side,
        residuals,
        median_residual: median,
        refinement,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Complex-eigenvalue density experiment
// ---------------------------------------------------------------------------

/// One interior density bin.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct EdelmanBin {
    /// Bin-center abscissa.
    pub x: f64,
    /// Bin-center ordinate.
    pub y: f64,
    /// Observed count over all trials.
    pub count: u64,
    /// Predicted count: trials * n * density * area.
    pub expected: f64,
    /// (count - expected) / sqrt(expected).
    pub z_score: f64,
}

/// Deterministic check of the finite-size density correction at fixed y.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CorrectionCheck {
    /// Height above the real axis.
    pub y: f64,
    /// Fitted 1/n coefficient from a two-point fit in n.
    pub fitted: f64,
    /// Asymptotic coefficient -1/(4 pi y^2).
    pub target: f64,
    /// |fitted - target| / |target|.
    pub rel_err: f64,
}

/// Output of the complex-eigenvalue density experiment.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EdelmanReport {
    /// Matrix dimension.
    pub n: usize,
    /// Trials used.
    pub trials: usize,
    /// Bin side length.
    pub bin_width: f64,
    /// Minimal |y| of retained bins (3/sqrt(n)).
    pub y_min: f64,
    /// Interior bins with per-bin z-scores.
    pub bins: Vec<EdelmanBin>,
    /// Fraction of bins with |z| <= 3.
    pub fraction_within_3se: f64,
    /// Empirical fraction of genuinely complex eigenvalues.
    pub complex_fraction_empirical: f64,
    /// Predicted complex fraction 1 - sqrt(2/(pi n)).
    pub complex_fraction_predicted: f64,
    /// Deterministic finite-size correction checks.
    pub correction_checks: Vec<CorrectionCheck>,
    /// Eigensolver-skipped trials.
    pub skipped: usize,
}

impl EdelmanReport {
    /// Desk-scale acceptance: at least 90% of interior bins within 3 SE and
    /// every correction coefficient matching within 50%.
    pub fn passes(&self) -> bool {
        self.fraction_within_3se >= 0.9
            && self
                .correction_checks
                .iter()
                .all(|c| c.rel_err <= 0.5 && c.fitted < 0.0)
    }

    /// Human-readable report.
    pub fn describe(&self) -> String {
        format!(
            "Complex-eigenvalue density: n = {}, trials = {}, {} interior bins, \
             {:.1}% within 3 SE; complex fraction {:.4} vs predicted {:.4}\n",
            self.n,
            self.trials,
            self.bins.len(),
            100.0 * self.fraction_within_3se,
            self.complex_fraction_empirical,
            self.complex_fraction_predicted,
        )
    }
}

/// Two-point fit of the 1/n density correction at heights `ys` above the
/// origin, compared against the asymptotic coefficient -1/(4 pi y^2).
pub fn edelman_correction_checks(
    n: usize,
    ys: &[f64],
) -> Result<Vec<CorrectionCheck>, HarnessError> {
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        let z = C64::new(0.0, y);
        let rho_n = cltpred::edelman_density(z, n)?;
        let rho_2n = cltpred::edelman_density(z, 2 * n)?;
        // Model rho_n = a + b/n: b = 2n (rho_n - rho_2n).
        let fitted = 2.0 * n as f64 * (rho_n - rho_2n);
        let target = -1.0 / (4.0 * std::f64::consts::PI * y * y);
        out.push(CorrectionCheck {
            y,
            fitted,
            target,
            rel_err: (fitted - target).abs() / target.abs(),
        });
    }
    Ok(out)
}

/// Bins the complex eigenvalues of the real Gaussian ensemble and compares
/// per-bin counts against the finite-n density, plus the deterministic
/// finite-size correction fit.
pub fn run_edelman(config: &ExperimentConfig) -> Result<EdelmanReport, HarnessError> {
    config.validate()?;
    if config.experiment != ExperimentKind::Edelman {
        return Err(HarnessError::Config(
            "config is not a density experiment".into(),
        ));
    }
    let spec = config.ensemble.to_spec()?;
    let n = spec.n;
    let y_min = 3.0 / (n as f64).sqrt();
    let bin_width: f64 = 0.1;
    let half: f64 = 0.8;
    let cells = (2.0 * half / bin_width).round() as usize;
    let per_trial: Vec<Option<(Vec<C64>, usize)>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<_, HarnessError> {
            let x = ensemble::sample_iid(&spec, t)?;
            Ok(try_eigenvalues(&x.data).map(|eigs| {
                let complex: Vec<C64> = eigs.into_iter().filter(|l| l.im != 0.0).collect();
                let count = complex.len();
                (complex, count)
            }))
        })
        .collect::<Result<_, _>>()?;
    let skipped = per_trial.iter().filter(|r| r.is_none()).count();
    let done: Vec<(Vec<C64>, usize)> = per_trial.into_iter().flatten().collect();
    if done.is_empty() {
        return Err(HarnessError::AllTrialsFailed(config.trials));
    }
    let trials = done.len();
    let mut grid = stats::Grid2D::new(-half, half, -half, half, cells, cells)?;
    let mut complex_count = 0usize;
    for (eigs, count) in &done {
        complex_count += count;
        for l in eigs {
            grid.add(l.re, l.im);
        }
    }
    let area = grid.cell_area();
    let mut bins = Vec::new();
    let mut within = 0usize;
    for iy in 0..cells {
        for ix in 0..cells {
            let (cx, cy) = grid.center(ix, iy);
            let r = bin_width / 2.0;
            // Keep bins entirely inside |z| <= 0.8 and entirely off-axis.
            let corner = (cx.abs() + r).hypot(cy.abs() + r);
            if corner > half || cy.abs() - r < y_min {
                continue;
            }
            let density = cltpred::edelman_density(C64::new(cx, cy), n)?;
            let expected = trials as f64 * n as f64 * density * area;
            if expected < 10.0 {
                continue;
            }
            let count = grid.count(ix, iy);
            let z_score = (count as f64 - expected) / expected.sqrt();
            if z_score.abs() <= 3.0 {
                within += 1;
            }
            bins.push(EdelmanBin {
                x: cx,
                y: cy,
                count,
                expected,
                z_score,
            });
        }
    }
    let correction_checks = edelman_correction_checks(n, &[0.2, 0.25, 0.3])?;
    Ok(EdelmanReport {
        n,
        trials,
        bin_width,
        y_min,
        fraction_within_3se: within as f64 / bins.len().max(1) as f64,
        bins,
        complex_fraction_empirical: complex_count as f64 / (trials * n) as f64,
        complex_fraction_predicted: 1.0 - (2.0 / (std::f64::consts::PI * n as f64)).sqrt(),
        correction_checks,
        skipped,
    })
}

// ---------------------------------------------------------------------------
// Overlap-decay experiment
// ---------------------------------------------------------------------------

/// Median windowed overlap magnitude at one dimension.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OverlapRow {
    /// Matrix dimension.
    pub n: usize,
    /// Trials aggregated.
    pub trials: usize,
    /// Median over trials of max_{|i|,|j| <= window} |Theta_{ij}|.
    pub median_max_overlap: f64,
}

/// Output of the overlap-decay experiment.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OverlapReport {
    /// First shift.
    pub z1: C64,
    /// Second shift.
    pub z2: C64,
    /// Index window.
    pub window: usize,
    /// One row per dimension, ascending n.
    pub rows: Vec<OverlapRow>,
    /// Whether the medians strictly decrease with n.
    pub strictly_decreasing: bool,
}

impl OverlapReport {
    /// Desk-scale acceptance: strict decay across the dimension sweep.
    pub fn passes(&self) -> bool {
        self.strictly_decreasing
    }

    /// Human-readable report.
    pub fn describe(&self) -> String {
        let rows: Vec<String> = self
            .rows
            .iter()
            .map(|r| format!("n = {}: {:.4}", r.n, r.median_max_overlap))
            .collect();
        format!(
            "Cross-shift overlaps (window {}): {} ({})\n",
            self.window,
            rows.join("; "),
            if self.strictly_decreasing {
                "strictly decreasing"
            } else {
                "NOT decreasing"
            },
        )
    }
}

/// Measures the decay of windowed cross-shift eigenvector overlaps across a
/// dimension sweep.
pub fn run_overlaps(config: &ExperimentConfig) -> Result<OverlapReport, HarnessError> {
    config.validate()?;
    if config.experiment != ExperimentKind::Overlaps {
        return Err(HarnessError::Config(
            "config is not an overlap experiment".into(),
        ));
    }
    let base = config.ensemble.to_spec()?;
    let z1 = config.z_points[0];
    let z2 = config.z_points[1];
    let window = 5usize;
    let mut ns = config.n_values_or_default();
    ns.sort_unstable();
    ns.dedup();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        let spec = EnsembleSpec { n, ..base.clone() };
        let mut maxima: Vec<f64> = (0..config.trials as u64)
            .into_par_iter()
            .map(|t| -> Result<f64, HarnessError> {
                let x = ensemble::sample_iid(&spec, t)?;
                let d1 = spectral::decompose(&spectral::hermitize(&x.data, z1))?;
                let d2 = spectral::decompose(&spectral::hermitize(&x.data, z2))?;
                let om = spectral::overlaps(&d1, &d2, window.min(n))?;
                Ok(om.max_abs())
            })
            .collect::<Result<_, _>>()?;
        maxima.sort_unstable_by(f64::total_cmp);
        rows.push(OverlapRow {
            n,
            trials: maxima.len(),
            median_max_overlap: maxima[maxima.len() / 2],
        });
    }
    let strictly_decreasing = rows
        .windows(2)
        .all(|w| w[1].median_max_overlap < w[0].median_max_overlap);
    Ok(OverlapReport {
        z1,
        z2,
        window,
        rows,
        strictly_decreasing,
    })
}

// ---------------------------------------------------------------------------
// Normality test (experiment-level wrapper)
// ---------------------------------------------------------------------------

/// Composite normality test requiring at least 500 samples.
pub fn normality_test(samples: &[f64]) -> Result<NormalityReport, HarnessError> {
    if samples.len() < 500 {
        return Err(HarnessError::TooFewSamples {
            got: samples.len(),
            need: 500,
        });
    }
    Ok(stats::normality_test(samples)?)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Uniform wrapper over all experiment outputs.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentOutput {
    /// CLT experiment.
    Clt(SummaryStats),
    /// Universality or independence experiment.
    Correlation(CorrelationEstimate),
    /// Coupled-flow experiment.
    Dbm(DbmCouplingReport),
    /// Identity-check experiment.
    Girko(GirkoReport),
    /// Density experiment.
    Edelman(EdelmanReport),
    /// Overlap-decay experiment.
    Overlaps(OverlapReport),
}

impl ExperimentOutput {
    /// Whether the experiment's configured acceptance checks pass.
    pub fn passes(&self) -> bool {
        match self {
            ExperimentOutput::Clt(s) => s.passes(),
            ExperimentOutput::Correlation(c) => c.passes(),
            ExperimentOutput::Dbm(d) => d.passes(),
            ExperimentOutput::Girko(g) => g.passes(),
            ExperimentOutput::Edelman(e) => e.passes(),
            ExperimentOutput::Overlaps(o) => o.passes(),
        }
    }

    /// Human-readable report.
    pub fn describe(&self) -> String {
        match self {
            ExperimentOutput::Clt(s) => s.describe(),
            ExperimentOutput::Correlation(c) => c.describe(),
            ExperimentOutput::Dbm(d) => d.describe(),
            ExperimentOutput::Girko(g) => g.describe(),
            ExperimentOutput::Edelman(e) => e.describe(),
            ExperimentOutput::Overlaps(o) => o.describe(),
        }
    }
}

/// Runs the configured experiment on the configured worker pool; raw trial
/// records (where the experiment produces them) are written to output_path
/// as JSON lines by the single writer.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    config.validate()?;
    let output = with_threads(config.threads, || -> Result<ExperimentOutput, HarnessError> {
        Ok(match config.experiment {
            ExperimentKind::Clt => {
                let run = run_clt(config)?;
                if let Some(path) = &config.output_path {
                    persist_trials(path, &run.trials)?;
                }
                ExperimentOutput::Clt(run.summary)
            }
            ExperimentKind::Universality => {
                ExperimentOutput::Correlation(run_universality(config)?)
            }
            ExperimentKind::Independence => {
                ExperimentOutput::Correlation(run_independence(config)?)
            }
            ExperimentKind::DbmCoupling => ExperimentOutput::Dbm(run_dbm_coupling(config)?),
            ExperimentKind::GirkoCheck => ExperimentOutput::Girko(run_girko_check(config)?),
            ExperimentKind::Edelman => ExperimentOutput::Edelman(run_edelman(config)?),
            ExperimentKind::Overlaps => ExperimentOutput::Overlaps(run_overlaps(config)?),
        })
    })?;
    Ok(output)
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct SchemaHeader {
    schema: String,
}

/// Writes trial records as JSON lines behind a schema header record.
pub fn persist_trials(path: &Path, trials: &[TrialResult]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(
        &mut w,
        &SchemaHeader {
            schema: SCHEMA_VERSION.to_string(),
        },
    )?;
    writeln!(w)?;
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Result of loading a trial file, tolerating a truncated tail.
#[derive(Debug)]
pub struct LoadOutcome {
    /// Complete records, in file order.
    pub trials: Vec<TrialResult>,
    /// Whether the file ended in an incomplete record.
    pub truncated: bool,
    /// Index of the last complete record, if any.
    pub last_complete_index: Option<usize>,
}

/// Loads trial records; a malformed tail yields a truncated outcome instead
/// of an error, reporting the last complete record index.
pub fn load_trials(path: &Path) -> Result<LoadOutcome, HarnessError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines.next().ok_or_else(|| HarnessError::SchemaMismatch {
        found: "<empty file>".to_string(),
        expected: SCHEMA_VERSION,
    })?;
    let header: SchemaHeader =
        serde_json::from_str(header_line).map_err(|_| HarnessError::SchemaMismatch {
            found: header_line.chars().take(64).collect(),
            expected: SCHEMA_VERSION,
        })?;
    if header.schema != SCHEMA_VERSION {
        return Err(HarnessError::SchemaMismatch {
            found: header.schema,
            expected: SCHEMA_VERSION,
        });
    }
    let mut trials = Vec::new();
    let mut truncated = false;
    for line in lines {
        match serde_json::from_str::<TrialResult>(line) {
            Ok(t) => trials.push(t),
            Err(_) => {
                truncated = true;
                break;
            }
        }
    }
    Ok(LoadOutcome {
        last_complete_index: trials.len().checked_sub(1),
        trials,
        truncated,
    })
}

/// Writes the per-function summary table as RFC-4180 CSV.
pub fn write_summary_csv<W: Write>(out: W, summary: &SummaryStats) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "function",
        "mean",
        "mean_se",
        "mean_predicted",
        "mean_z",
        "variance",
        "variance_se",
        "variance_predicted",
        "variance_z",
        "p_anderson_darling",
        "p_skewness",
        "p_kurtosis",
    ])?;
    for f in &summary.functions {
        w.write_record([
            f.name.clone(),
            format!("{:.12e}", f.mean_re.estimate),
            format!("{:.6e}", f.mean_re.se),
            format!("{:.12e}", f.mean_re.prediction),
            format!("{:.4}", f.mean_re.z),
            format!("{:.12e}", f.variance.estimate),
            format!("{:.6e}", f.variance.se),
            format!("{:.12e}", f.variance.prediction),
            format!("{:.4}", f.variance.z),
            format!("{:.6}", f.normality_real.p_anderson_darling),
            format!("{:.6}", f.normality_real.p_skewness),
            format!("{:.6}", f.normality_real.p_kurtosis),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn base_config(kind: ExperimentKind, n: usize, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            experiment: kind,
            ensemble: EnsembleConfig {
                symmetry: "real".into(),
                law: "gaussian".into(),
                n,
                seed: 0xC0FFEE,
            },
            trials,
            test_functions: vec![],
            z_points: vec![],
            eta_grid: vec![],
            exponents: Exponents::default(),
            output_path: None,
            grid_per_side: None,
            n_values: None,
            threads: Some(1),
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let mut cfg = base_config(ExperimentKind::Clt, 100, 200);
        cfg.test_functions = vec!["z^2".into(), "bump(0.1-0.2i,0.5)".into()];
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.trials, 200);
        assert_eq!(back.test_functions.len(), 2);
        back.validate().unwrap();
        // Too few trials for the CLT experiment.
        let mut bad = cfg.clone();
        bad.trials = 5;
        assert!(matches!(bad.validate(), Err(HarnessError::Config(_))));
        // Unknown entry law.
        let mut bad = cfg.clone();
        bad.ensemble.law = "cauchy".into();
        assert!(bad.validate().is_err());
        // Separation violated: conjugate pair.
        let mut ind = base_config(ExperimentKind::Independence, 64, 10);
        ind.z_points = vec![C64::new(0.4, 0.4), C64::new(0.4, -0.4)];
        assert!(matches!(ind.validate(), Err(HarnessError::Config(_))));
        // Valid separation.
        ind.z_points = vec![C64::new(0.4, 0.4), C64::new(-0.4, 0.4)];
        ind.validate().unwrap();
        // Eta outside the mesoscopic window.
        ind.eta_grid = vec![0.5];
        assert!(matches!(ind.validate(), Err(HarnessError::Config(_))));
        // Universality shift too close to the real axis.
        let mut uni = base_config(ExperimentKind::Universality, 64, 10);
        uni.z_points = vec![C64::new(0.5, 0.01)];
        assert!(uni.validate().is_err());
    }

    #[test]
    fn trials_reproduce_bitwise() {
        let spec = EnsembleSpec {
            symmetry: Symmetry::Real,
            law: EntryLaw::Gaussian,
            n: 24,
            seed: 42,
        };
        let funcs = vec![TestFunction::parse("z^2").unwrap()];
        let zs = vec![C64::new(0.3, 0.4)];
        let etas = vec![0.1];
        let (a, sa) = collect_trials(&spec, 6, &funcs, &zs, &etas).unwrap();
        let (b, sb) = collect_trials(&spec, 6, &funcs, &zs, &etas).unwrap();
        assert_eq!(sa, sb);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trial_index, y.trial_index);
            assert_eq!(x.statistics[0].value, y.statistics[0].value);
            assert_eq!(x.resolvent_traces[0].trace, y.resolvent_traces[0].trace);
            assert_eq!(
                x.smallest_singular[0].lambda1,
                y.smallest_singular[0].lambda1
            );
        }
    }

    #[test]
    fn clt_run_structure() {
        let mut cfg = base_config(ExperimentKind::Clt, 24, 120);
        cfg.test_functions = vec!["z^2".into(), "re(z^2)".into()];
        let run = run_clt(&cfg).unwrap();
        let s = &run.summary;
        assert_eq!(s.functions.len(), 2);
        assert_eq!(s.trials_completed + s.skipped, 120);
        assert_eq!(run.trials.len(), s.trials_completed);
        // Covariance is symmetric PSD.
        let k = s.covariance.len();
        let m = DMatrix::from_fn(k, k, |i, j| s.covariance[i][j]);
        assert_eq!(m.clone().transpose(), m);
        let min_eig = m.symmetric_eigen().eigenvalues.min();
        assert!(min_eig > -1e-10, "covariance min eigenvalue {min_eig}");
        // Both functions measure the same real statistic on a real matrix,
        // so their summaries agree.
        let d = (s.functions[0].mean_re.estimate - s.functions[1].mean_re.estimate).abs();
        assert!(d < 1e-12, "psym equivalence on spectra: {d}");
        assert!(s.predictions.len() == 2);
    }

    #[test]
    fn identical_shifts_are_perfectly_correlated() {
        let spec = EnsembleSpec {
            symmetry: Symmetry::Real,
            law: EntryLaw::Gaussian,
            n: 32,
            seed: 7,
        };
        let z = C64::new(0.3, 0.4);
        let eta = 0.05;
        let (trials, _) = collect_trials(&spec, 20, &[], &[z, z], &[eta]).unwrap();
        let entries = trace_correlations(&trials, &[eta]).unwrap();
        assert!((entries[0].correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn universality_small_run_shape() {
        let mut cfg = base_config(ExperimentKind::Universality, 32, 60);
        cfg.z_points = vec![C64::new(0.3, 0.5)];
        let est = run_universality(&cfg).unwrap();
        assert_eq!(est.rescaled_primary.len(), 60);
        assert_eq!(est.rescaled_reference.len(), 60);
        assert_eq!(est.rescaled_control.len(), 60);
        assert_eq!(est.ks_distances.len(), 2);
        for e in &est.ks_distances {
            assert!((0.0..=1.0).contains(&e.distance));
        }
        assert!(est.histograms.len() == 5);
        assert!(est.rescaled_primary.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn independence_small_run_shape() {
        let mut cfg = base_config(ExperimentKind::Independence, 48, 40);
        cfg.z_points = vec![C64::new(0.4, 0.4), C64::new(-0.4, 0.4)];
        let est = run_independence(&cfg).unwrap();
        assert_eq!(est.correlations.len(), 1);
        assert!(est.correlations[0].correlation.abs() <= 1.0);
        let d = est.joint_product_distance.unwrap();
        assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn dbm_coupling_small_run() {
        let mut cfg = base_config(ExperimentKind::DbmCoupling, 8, 3);
        cfg.z_points = vec![C64::new(0.3, 0.5)];
        let rep = run_dbm_coupling(&cfg).unwrap();
        assert_eq!(rep.runs, 3);
        assert_eq!(rep.initial_distance, 0.0);
        assert_eq!(rep.distances_times_n.len(), 3);
        assert!((0.0..=1.0).contains(&rep.ks_regularized_vs_ginibre));
        assert!(rep.t_final > 0.0 && rep.distances_times_n.iter().all(|d| d.is_finite()));
    }

    #[test]
    fn girko_small_run_refines() {
        let mut cfg = base_config(ExperimentKind::GirkoCheck, 16, 1);
        cfg.test_functions = vec!["bump(0.1-0.2i,0.5)".into()];
        cfg.grid_per_side = Some(96);
        let rep = run_girko_check(&cfg).unwrap();
        assert_eq!(rep.refinement.len(), 3);
        assert!(
            rep.refinement.windows(2).all(|w| w[1].residual < w[0].residual),
            "refinement {:?}",
            rep.refinement
        );
        assert!(rep.median_residual < 0.1, "residual {}", rep.median_residual);
    }

    #[test]
    fn edelman_correction_fit_matches_asymptotics() {
        let checks = edelman_correction_checks(500, &[0.2, 0.3]).unwrap();
        for c in &checks {
            assert!(c.fitted < 0.0, "correction must be negative at y = {}", c.y);
            assert!(c.rel_err < 0.5, "rel err {} at y = {}", c.rel_err, c.y);
        }
    }

    #[test]
    fn overlaps_small_run() {
        let mut cfg = base_config(ExperimentKind::Overlaps, 24, 9);
        cfg.z_points = vec![C64::new(0.3, 0.4), C64::new(-0.5, 0.2)];
        cfg.n_values = Some(vec![12, 24]);
        let rep = run_overlaps(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows.iter().all(|r| r.median_max_overlap > 0.0));
    }

    #[test]
    fn normality_op_guards() {
        assert!(matches!(
            normality_test(&[0.0; 100]),
            Err(HarnessError::TooFewSamples { need: 500, .. })
        ));
        assert!(matches!(
            normality_test(&[1.5; 600]),
            Err(HarnessError::Stats(StatsError::DegenerateSample))
        ));
        let mut rng = StreamKey::new(99, 0, 0).rng();
        use rand_distr::Distribution;
        let xs: Vec<f64> = (0..600)
            .map(|_| rand_distr::StandardNormal.sample(&mut rng))
            .collect();
        let rep = normality_test(&xs).unwrap();
        assert!(rep.p_anderson_darling > 0.0 && rep.p_anderson_darling <= 1.0);
    }

    #[test]
    fn persist_load_round_trip_and_partial_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let spec = EnsembleSpec {
            symmetry: Symmetry::Real,
            law: EntryLaw::Gaussian,
            n: 16,
            seed: 5,
        };
        let funcs = vec![TestFunction::parse("z^2").unwrap()];
        let (trials, _) = collect_trials(&spec, 3, &funcs, &[C64::new(0.2, 0.3)], &[0.1]).unwrap();
        persist_trials(&path, &trials).unwrap();
        let loaded = load_trials(&path).unwrap();
        assert!(!loaded.truncated);
        assert_eq!(loaded.trials.len(), 3);
        assert_eq!(loaded.last_complete_index, Some(2));
        for (a, b) in trials.iter().zip(&loaded.trials) {
            assert_eq!(a.trial_index, b.trial_index);
            assert_eq!(a.statistics[0].value, b.statistics[0].value);
        }
        // Truncated tail: keep the header and first record, cut the second.
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let cut = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..lines[2].len() / 2]);
        let partial = dir.path().join("partial.jsonl");
        std::fs::write(&partial, cut).unwrap();
        let outcome = load_trials(&partial).unwrap();
        assert!(outcome.truncated);
        assert_eq!(outcome.trials.len(), 1);
        assert_eq!(outcome.last_complete_index, Some(0));
        // Wrong schema.
        let wrong = dir.path().join("wrong.jsonl");
        std::fs::write(&wrong, "{\"schema\":\"other.v9\"}\n").unwrap();
        assert!(matches!(
            load_trials(&wrong),
            Err(HarnessError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn summary_csv_has_one_row_per_function() {
        let mut cfg = base_config(ExperimentKind::Clt, 16, 100);
        cfg.test_functions = vec!["z".into(), "z^2".into()];
        let run = run_clt(&cfg).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &run.summary).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("function,mean,"));
        assert!(lines[1].starts_with("z^1,"));
        assert!(lines[2].starts_with("z^2,"));
    }
}
