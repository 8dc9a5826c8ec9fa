//! Statistical machinery for the Monte Carlo experiments: descriptive
//! moments, standard errors (naive and batch-means), two-sample
//! Kolmogorov-Smirnov distance, Anderson-Darling and moment-based normality
//! tests, correlation, and histogram utilities.
//!
//! Every experiment-level comparison in this crate reports an estimate
//! together with a standard error, so the helpers here return both pieces
//! wherever they are defined.

use statrs::function::erf::erfc;

/// Errors from statistical routines.
#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    /// Not enough samples for the requested statistic.
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    /// Sample variance is (numerically) zero; standardization impossible.
    #[error("degenerate sample: variance is zero")]
    DegenerateSample,
    /// Histogram or batch configuration invalid.
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    /// Input vectors of mismatched lengths.
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
}

/// Standard normal CDF.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Descriptive moments of a sample.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Moments {
    /// Sample size.
    pub n: usize,
    /// Sample mean.
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Population skewness m3 / m2^{3/2}.
    pub skewness: f64,
    /// Population excess kurtosis m4 / m2^2 - 3.
    pub excess_kurtosis: f64,
}

/// Computes mean, unbiased variance, skewness and excess kurtosis.
pub fn moments(xs: &[f64]) -> Result<Moments, StatsError> {
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { got: n, need: 2 });
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let variance = m2 * nf / (nf - 1.0);
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(Moments {
        n,
        mean,
        variance,
        skewness,
        excess_kurtosis,
    })
}

/// Naive standard error of the mean, sqrt(s^2 / n).
pub fn naive_se(xs: &[f64]) -> Result<f64, StatsError> {
    let m = moments(xs)?;
    Ok((m.variance / m.n as f64).sqrt())
}

/// Batch-means standard error of the mean: the sample is cut into
/// `n_batches` equal contiguous batches (a trailing remainder is dropped)
/// and the SE is the standard deviation of batch means divided by
/// sqrt(n_batches). Agrees with the naive SE for independent samples and
/// detects serial correlation otherwise.
pub fn batch_means_se(xs: &[f64], n_batches: usize) -> Result<f64, StatsError> {
    if n_batches < 2 {
        return Err(StatsError::InvalidPartition(format!(
            "need at least 2 batches, got {n_batches}"
        )));
    }
    let q = xs.len() / n_batches;
    if q == 0 {
        return Err(StatsError::TooFewSamples {
            got: xs.len(),
            need: n_batches,
        });
    }
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * q..(b + 1) * q].iter().sum::<f64>() / q as f64)
        .collect();
    let m = moments(&means)?;
    Ok((m.variance / n_batches as f64).sqrt())
}

/// Default batch count: the integer square root of the sample size.
pub fn default_batches(n: usize) -> usize {
    ((n as f64).sqrt() as usize).max(2)
}

/// Standard error of the unbiased sample variance,
/// sqrt((m4 - s^4 (n-3)/(n-1)) / n), from the asymptotic variance of s^2.
pub fn variance_se(xs: &[f64]) -> Result<f64, StatsError> {
    let n = xs.len();
    if n < 4 {
        return Err(StatsError::TooFewSamples { got: n, need: 4 });
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m4 /= nf;
    let s2 = m2 * nf / (nf - 1.0);
    Ok(((m4 - s2 * s2 * (nf - 3.0) / (nf - 1.0)).max(0.0) / nf).sqrt())
}

/// An estimate-versus-prediction comparison with its standard error.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ZComparison {
    /// Monte Carlo estimate.
    pub estimate: f64,
    /// Standard error of the estimate.
    pub se: f64,
    /// Deterministic prediction being tested.
    pub prediction: f64,
    /// (estimate - prediction) / se.
    pub z: f64,
}

/// Packages an estimate, its SE and a prediction into a z-score record.
pub fn z_comparison(estimate: f64, se: f64, prediction: f64) -> ZComparison {
    ZComparison {
        estimate,
        se,
        prediction,
        z: (estimate - prediction) / se,
    }
}

/// Pearson correlation coefficient of two equal-length samples.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            a: x.len(),
            b: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { got: n, need: 2 });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let dx = x[k] - mx;
        let dy = y[k] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Two-sample Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFewSamples {
            got: a.len().min(b.len()),
            need: 1,
        });
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable_by(f64::total_cmp);
    sb.sort_unstable_by(f64::total_cmp);
    let (m, k) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let v = sa[i].min(sb[j]);
        // Advance both ECDFs past the tie value before comparing.
        while i < sa.len() && sa[i] == v {
            i += 1;
        }
        while j < sb.len() && sb[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / k).abs());
    }
    // One sample exhausted: the residual gap is attained immediately.
    d = d.max((1.0 - j as f64 / k).abs().max((1.0 - i as f64 / m).abs()));
    Ok(d)
}

/// Result of the composite normality test.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct NormalityReport {
    /// Sample size.
    pub n: usize,
    /// Size-adjusted Anderson-Darling statistic.
    pub a_squared_star: f64,
    /// Anderson-Darling p-value (mean and variance estimated).
    pub p_anderson_darling: f64,
    /// Skewness z-score against SE sqrt(6/n).
    pub skewness_z: f64,
    /// Two-sided skewness p-value.
    pub p_skewness: f64,
    /// Excess-kurtosis z-score against SE sqrt(24/n).
    pub kurtosis_z: f64,
    /// Two-sided kurtosis p-value.
    pub p_kurtosis: f64,
}

/// Anderson-Darling test of normality with estimated mean and variance.
///
/// Returns the size-adjusted statistic A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)
/// and its p-value from Stephens' piecewise approximation for the
/// both-parameters-estimated case.
pub fn anderson_darling_normal(xs: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = xs.len();
    if n < 8 {
        return Err(StatsError::TooFewSamples { got: n, need: 8 });
    }
    let m = moments(xs)?;
    if m.variance <= 0.0 || !m.variance.is_finite() {
        return Err(StatsError::DegenerateSample);
    }
    let sd = m.variance.sqrt();
    let mut y: Vec<f64> = xs.iter().map(|x| (x - m.mean) / sd).collect();
    y.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        // ln Phi and ln(1 - Phi) via the appropriate erfc tail each, so
        // neither factor loses precision for extreme standardized values.
        let lo = ln_phi(y[i]);
        let hi = ln_phi(-y[n - 1 - i]);
        acc += (2.0 * (i as f64) + 1.0) * (lo + hi);
    }
    let a2 = -nf - acc / nf;
    let a2_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    Ok((a2_star, anderson_darling_p(a2_star)))
}

/// ln Phi(x) computed through the erfc tail (accurate for x << 0).
fn ln_phi(x: f64) -> f64 {
    let t = 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    if t > 1e-280 {
        t.ln()
    } else {
        // Asymptotic tail: ln Phi(x) ~ -x^2/2 - ln(-x sqrt(2 pi)) for x -> -inf.
        -0.5 * x * x - (-x * (2.0 * std::f64::consts::PI).sqrt()).ln()
    }
}

/// Stephens' p-value approximation for the size-adjusted statistic.
fn anderson_darling_p(a: f64) -> f64 {
    let p = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a > 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a > 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    p.clamp(0.0, 1.0)
}

/// Composite normality test: Anderson-Darling plus moment z-tests with the
/// asymptotic standard errors sqrt(6/n) (skewness) and sqrt(24/n) (excess
/// kurtosis). Rejects degenerate (zero-variance) input.
pub fn normality_test(xs: &[f64]) -> Result<NormalityReport, StatsError> {
    let (a2_star, p_ad) = anderson_darling_normal(xs)?;
    let m = moments(xs)?;
    let nf = m.n as f64;
    let sz = m.skewness / (6.0 / nf).sqrt();
    let kz = m.excess_kurtosis / (24.0 / nf).sqrt();
    let two_sided = |z: f64| 2.0 * (1.0 - standard_normal_cdf(z.abs()));
    Ok(NormalityReport {
        n: m.n,
        a_squared_star: a2_star,
        p_anderson_darling: p_ad,
        skewness_z: sz,
        p_skewness: two_sided(sz),
        kurtosis_z: kz,
        p_kurtosis: two_sided(kz),
    })
}

/// A one-dimensional histogram with normalized masses.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Histogram {
    /// Lower edge of the binned range.
    pub lo: f64,
    /// Upper edge of the binned range.
    pub hi: f64,
    /// Raw counts per bin.
    pub counts: Vec<u64>,
    /// Per-bin probability mass relative to the TOTAL sample size, so the
    /// masses sum to the in-range fraction.
    pub mass: Vec<f64>,
    /// Total number of samples offered (including out-of-range ones).
    pub n_samples: usize,
}

impl Histogram {
    /// Probability density estimate in bin k (mass / width).
    pub fn density(&self, k: usize) -> f64 {
        self.mass[k] * self.counts.len() as f64 / (self.hi - self.lo)
    }

    /// Center of bin k.
    pub fn center(&self, k: usize) -> f64 {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        self.lo + (k as f64 + 0.5) * w
    }
}

/// Bins samples uniformly over [lo, hi); out-of-range samples are counted in
/// `n_samples` but not binned.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, nbins: usize) -> Result<Histogram, StatsError> {
    if !(hi > lo) || nbins == 0 {
        return Err(StatsError::InvalidPartition(format!(
            "range [{lo}, {hi}) with {nbins} bins"
        )));
    }
    let mut counts = vec![0u64; nbins];
    let scale = nbins as f64 / (hi - lo);
    for &x in xs {
        if x >= lo && x < hi {
            let k = ((x - lo) * scale) as usize;
            counts[k.min(nbins - 1)] += 1;
        }
    }
    let nf = xs.len() as f64;
    let mass = counts.iter().map(|&c| c as f64 / nf).collect();
    Ok(Histogram {
        lo,
        hi,
        counts,
        mass,
        n_samples: xs.len(),
    })
}

/// A two-dimensional histogram on a uniform grid.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Grid2D {
    /// Horizontal range.
    pub x_lo: f64,
    /// Horizontal range.
    pub x_hi: f64,
    /// Vertical range.
    pub y_lo: f64,
    /// Vertical range.
    pub y_hi: f64,
    /// Cells per axis (nx horizontal, ny vertical).
    pub nx: usize,
    /// Cells per axis.
    pub ny: usize,
    /// Row-major counts, index iy * nx + ix.
    pub counts: Vec<u64>,
    /// Total samples offered.
    pub n_samples: usize,
}

impl Grid2D {
    /// Empty grid over the given ranges.
    pub fn new(
        x_lo: f64,
        x_hi: f64,
        y_lo: f64,
        y_hi: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Grid2D, StatsError> {
        if !(x_hi > x_lo) || !(y_hi > y_lo) || nx == 0 || ny == 0 {
            return Err(StatsError::InvalidPartition(format!(
                "grid [{x_lo},{x_hi})x[{y_lo},{y_hi}) with {nx}x{ny} cells"
            )));
        }
        Ok(Grid2D {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
            nx,
            ny,
            counts: vec![0; nx * ny],
            n_samples: 0,
        })
    }

    /// Adds one sample; out-of-range points count toward n_samples only.
    pub fn add(&mut self, x: f64, y: f64) {
        self.n_samples += 1;
        if x < self.x_lo || x >= self.x_hi || y < self.y_lo || y >= self.y_hi {
            return;
        }
        let ix = (((x - self.x_lo) / (self.x_hi - self.x_lo)) * self.nx as f64) as usize;
        let iy = (((y - self.y_lo) / (self.y_hi - self.y_lo)) * self.ny as f64) as usize;
        self.counts[iy.min(self.ny - 1) * self.nx + ix.min(self.nx - 1)] += 1;
    }

    /// Count in cell (ix, iy).
    pub fn count(&self, ix: usize, iy: usize) -> u64 {
        self.counts[iy * self.nx + ix]
    }

    /// Center of cell (ix, iy).
    pub fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let wx = (self.x_hi - self.x_lo) / self.nx as f64;
        let wy = (self.y_hi - self.y_lo) / self.ny as f64;
        (
            self.x_lo + (ix as f64 + 0.5) * wx,
            self.y_lo + (iy as f64 + 0.5) * wy,
        )
    }

    /// Area of one cell.
    pub fn cell_area(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64 * (self.y_hi - self.y_lo) / self.ny as f64
    }
}

/// Sup-norm distance between the joint 2D mass of (x, y) and the product of
/// its marginal masses, on an nx-by-ny grid covering the sample range.
/// Values near zero indicate factorization (independence at grid scale).
pub fn joint_product_distance(
    x: &[f64],
    y: &[f64],
    nx: usize,
    ny: usize,
) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            a: x.len(),
            b: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewSamples {
            got: x.len(),
            need: 2,
        });
    }
    let pad = |lo: f64, hi: f64| {
        let w = (hi - lo).max(1e-300);
        (lo - 1e-9 * w, hi + 1e-9 * w)
    };
    let (x_lo, x_hi) = pad(
        x.iter().cloned().fold(f64::INFINITY, f64::min),
        x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y_lo, y_hi) = pad(
        y.iter().cloned().fold(f64::INFINITY, f64::min),
        y.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let mut grid = Grid2D::new(x_lo, x_hi, y_lo, y_hi, nx, ny)?;
    for k in 0..x.len() {
        grid.add(x[k], y[k]);
    }
    let nf = x.len() as f64;
    let mut marg_x = vec![0.0; nx];
    let mut marg_y = vec![0.0; ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let mass = grid.count(ix, iy) as f64 / nf;
            marg_x[ix] += mass;
            marg_y[iy] += mass;
        }
    }
    let mut d: f64 = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let joint = grid.count(ix, iy) as f64 / nf;
            d = d.max((joint - marg_x[ix] * marg_y[iy]).abs());
        }
    }
    Ok(d)
}
