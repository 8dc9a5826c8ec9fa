//! Command-line driver: deterministic utilities (density solver, spectral
//! edges, moment predictions, matrix sampling) and the Monte Carlo
//! experiment suite, all exposed as subcommands.
//!
//! Exit codes: 0 on success, 1 when an experiment's acceptance checks fail
//! (or a runtime failure occurs), 2 on configuration errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spectra_clt::ensemble::{EnsembleSpec, EntryLaw, Symmetry};
use spectra_clt::harness::{
    self, EnsembleConfig, ExperimentConfig, ExperimentKind, ExperimentOutput, HarnessError,
};
use spectra_clt::testfn::parse_complex;
use spectra_clt::{cltpred, mde, selftest, spectral, testfn, C64};

#[derive(Parser)]
#[command(
    name = "spectra-clt",
    version,
    about = "Spectral statistics of i.i.d. random matrices: deterministic \
             predictions and Monte Carlo experiments",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the self-consistent density equation at one (z, w).
    Mde {
        /// Shift point, e.g. 0.3+0.4i.
        #[arg(long)]
        z: String,
        /// Spectral parameter with Im w > 0, e.g. 0+1i.
        #[arg(long)]
        w: String,
        /// Write the solution as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral edges of the singular-value density of X - z.
    Edges {
        /// Shift point.
        #[arg(long)]
        z: String,
        /// Write the edge data as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predicted mean and variance of the linear statistic for one function.
    Predict {
        /// Test function, e.g. z^2, re(z^3), bump(0.1-0.2i,0.5).
        #[arg(long)]
        f: String,
        /// Fourth cumulant of the entry law.
        #[arg(long, default_value_t = 0.0)]
        kappa4: f64,
        /// Matrix dimension entering the expectation's bulk term.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Write the prediction as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample one matrix and report the singular spectrum of X - z.
    Sample {
        /// Matrix dimension.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Random seed (required: sampling is stochastic).
        #[arg(long)]
        seed: Option<u64>,
        /// Entry law: gaussian, rademacher or uniform.
        #[arg(long, default_value = "gaussian")]
        law: String,
        /// Symmetry class: real or complex.
        #[arg(long, default_value = "real")]
        symmetry: String,
        /// Shift point (default 0+0i).
        #[arg(long)]
        z: Option<String>,
        /// Trial index within the seed's stream family.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Write the full signed spectrum as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear-statistics CLT experiment: moments vs predictions.
    Clt(RunArgs),
    /// Rescaled smallest singular value vs the complex reference ensemble.
    Universality(RunArgs),
    /// Decorrelation of resolvent traces at separated shifts.
    Independence(RunArgs),
    /// Coupled matrix-flow / particle-flow / reference-flow experiment.
    Dbm(RunArgs),
    /// Log-determinant identity residuals on a z-grid.
    Girko(RunArgs),
    /// Complex-eigenvalue density of the real Gaussian ensemble.
    Edelman(RunArgs),
    /// Decay of cross-shift eigenvector overlaps with dimension.
    Overlaps(RunArgs),
    /// Deterministic invariant suite (no Monte Carlo).
    Selftest,
}

/// Flags shared by every experiment subcommand. A config file provides the
/// base; individual flags override it. Without a config file the experiment's
/// documented defaults are used and --seed is required.
#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master random seed (required unless the config file provides one).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials / runs / matrices.
    #[arg(long)]
    trials: Option<usize>,
    /// Matrix dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Machine-readable output path (trial records for clt, report JSON
    /// otherwise; clt also writes <out>.report.json and <out>.summary.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (fallback: SPECTRA_CLT_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Entry law: gaussian, rademacher or uniform.
    #[arg(long)]
    law: Option<String>,
    /// Symmetry class: real or complex.
    #[arg(long)]
    symmetry: Option<String>,
    /// Test function (repeatable).
    #[arg(long = "f")]
    functions: Vec<String>,
    /// Shift point (repeatable), e.g. --z 0.3+0.5i.
    #[arg(long = "z")]
    z_points: Vec<String>,
    /// Spectral parameter eta (repeatable).
    #[arg(long = "eta")]
    etas: Vec<f64>,
    /// Grid cells per side (identity-check experiment).
    #[arg(long)]
    grid: Option<usize>,
    /// Comma-separated dimension sweep (overlap experiment), e.g. 100,200,400.
    #[arg(long)]
    dims: Option<String>,
}

/// Errors mapped onto the exit-code contract.
enum CliError {
    /// Invalid invocation or config: exit 2.
    Config(String),
    /// Runtime or acceptance failure: exit 1.
    Failure(String),
}

impl CliError {
    fn exit(self) -> ExitCode {
        match self {
            CliError::Config(msg) => {
                eprintln!("config error: {msg}");
                ExitCode::from(2)
            }
            CliError::Failure(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_)
            | HarnessError::Parse(_)
            | HarnessError::SchemaMismatch { .. }
            | HarnessError::Ensemble(_) => CliError::Config(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => e.exit(),
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.cmd {
        Cmd::Mde { z, w, out } => cmd_mde(&z, &w, out.as_deref()),
        Cmd::Edges { z, out } => cmd_edges(&z, out.as_deref()),
        Cmd::Predict { f, kappa4, n, out } => cmd_predict(&f, kappa4, n, out.as_deref()),
        Cmd::Sample {
            n,
            seed,
            law,
            symmetry,
            z,
            trial,
            out,
        } => cmd_sample(n, seed, &law, &symmetry, z.as_deref(), trial, out.as_deref()),
        Cmd::Clt(args) => run_experiment(ExperimentKind::Clt, &args),
        Cmd::Universality(args) => run_experiment(ExperimentKind::Universality, &args),
        Cmd::Independence(args) => run_experiment(ExperimentKind::Independence, &args),
        Cmd::Dbm(args) => run_experiment(ExperimentKind::DbmCoupling, &args),
        Cmd::Girko(args) => run_experiment(ExperimentKind::GirkoCheck, &args),
        Cmd::Edelman(args) => run_experiment(ExperimentKind::Edelman, &args),
        Cmd::Overlaps(args) => run_experiment(ExperimentKind::Overlaps, &args),
        Cmd::Selftest => cmd_selftest(),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(failure)?;
    std::fs::write(path, text + "\n").map_err(failure)
}

fn cmd_mde(z_text: &str, w_text: &str, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let z = parse_complex(z_text).map_err(config_err)?;
    let w = parse_complex(w_text).map_err(config_err)?;
    let sol = mde::solve_m(z, w).map_err(failure)?;
    println!("self-consistent solution at z = {z}, w = {w}");
    println!("  m        = {:.6}{:+.6}i", sol.m.re, sol.m.im);
    println!("  u        = {:.6}{:+.6}i", sol.u.re, sol.u.im);
    println!("  rho      = {:.6}", sol.rho);
    println!("  residual = {:.3e}", sol.residual);
    if let Some(path) = out {
        write_json(path, &sol)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_edges(z_text: &str, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let z = parse_complex(z_text).map_err(config_err)?;
    let e = mde::edges(z);
    println!("singular-value support of X - z at |z| = {:.6}", e.z_abs);
    println!("  e_minus     = {:.10}", e.e_minus);
    println!("  e_plus      = {:.10}", e.e_plus);
    match e.lambda_minus {
        Some(lm) => println!("  support     = [{:.10}, {:.10}]", lm, e.lambda_plus),
        None => println!("  support     = [0, {:.10}]", e.lambda_plus),
    }
    if e.origin_limit {
        println!("  (analytic limit at z = 0)");
    }
    if let Some(path) = out {
        write_json(path, &e)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_predict(
    f_text: &str,
    kappa4: f64,
    n: usize,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let f = testfn::TestFunction::parse(f_text).map_err(config_err)?;
    let p = cltpred::predict(&f, kappa4, n).map_err(failure)?;
    println!(
        "prediction for f = {} (kappa4 = {}, n = {})",
        p.name, p.kappa4, p.n
    );
    println!("  E(f) = {:.6}{:+.6}i", p.e_f.re, p.e_f.im);
    let t = &p.expectation_terms;
    println!("    bulk (n x disk average) = {:.6}{:+.6}i", t.bulk.re, t.bulk.im);
    println!("    real-axis correction    = {:.6}{:+.6}i", t.axis.re, t.axis.im);
    println!("    kurtosis term           = {:.6}{:+.6}i", t.kurtosis.re, t.kurtosis.im);
    println!("    boundary term           = {:.6}{:+.6}i", t.boundary.re, t.boundary.im);
    println!("    arcsine term            = {:.6}{:+.6}i", t.arcsine.re, t.arcsine.im);
    println!("    endpoint term           = {:.6}{:+.6}i", t.endpoint.re, t.endpoint.im);
    println!("  V(f) = {:.6}", p.v_f);
    println!(
        "    gradient part           = {:.6}{:+.6}i",
        p.covariance_parts[0].re, p.covariance_parts[0].im
    );
    println!(
        "    boundary-trace part     = {:.6}{:+.6}i",
        p.covariance_parts[1].re, p.covariance_parts[1].im
    );
    println!(
        "    kurtosis part           = {:.6}{:+.6}i",
        p.covariance_parts[2].re, p.covariance_parts[2].im
    );
    if p.tail_warning {
        println!("  warning: boundary Fourier tail decays slowly; values may be inaccurate");
    }
    if let Some(path) = out {
        write_json(path, &p)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(
    n: usize,
    seed: Option<u64>,
    law: &str,
    symmetry: &str,
    z_text: Option<&str>,
    trial: u64,
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let seed = seed.ok_or_else(|| {
        CliError::Config("--seed is required: sampling is stochastic".into())
    })?;
    let z = match z_text {
        Some(t) => parse_complex(t).map_err(config_err)?,
        None => C64::new(0.0, 0.0),
    };
    let parsed_law: EntryLaw = law.parse().map_err(config_err)?;
    let parsed_symmetry = match symmetry {
        "real" => Symmetry::Real,
        "complex" => Symmetry::Complex,
        other => return Err(CliError::Config(format!("unknown symmetry {other:?}"))),
    };
    let spec = EnsembleSpec {
        symmetry: parsed_symmetry,
        law: parsed_law,
        n,
        seed,
    };
    let x = spectra_clt::ensemble::sample_iid(&spec, trial).map_err(failure)?;
    let d = spectral::decompose(&spectral::hermitize(&x.data, z)).map_err(failure)?;
    let sv: Vec<f64> = (1..=3.min(n as i64)).map(|i| d.lambda(i)).collect();
    println!("sampled {symmetry} {law} matrix, n = {n}, seed = {seed}, trial = {trial}");
    println!("  smallest singular values at z = {z}: {sv:?}");
    println!("  largest singular value: {:.6}", d.lambda(n as i64));
    println!("  spectral norm of the shifted block matrix: {:.6}", d.h_norm());
    if let Some(path) = out {
        let mut file = std::fs::File::create(path).map_err(failure)?;
        spectral::write_spectrum_csv(&mut file, &d).map_err(failure)?;
        file.flush().map_err(failure)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Built-in defaults giving each experiment subcommand a meaningful bare
/// invocation (modulo the mandatory seed).
struct Defaults {
    n: usize,
    trials: usize,
    functions: &'static [&'static str],
    z_points: &'static [(f64, f64)],
    grid: Option<usize>,
}

fn defaults_for(kind: ExperimentKind) -> Defaults {
    match kind {
        ExperimentKind::Clt => Defaults {
            n: 200,
            trials: 2000,
            functions: &["z^1", "z^2"],
            z_points: &[],
            grid: None,
        },
        ExperimentKind::Universality => Defaults {
            n: 300,
            trials: 2000,
            functions: &[],
            z_points: &[(0.3, 0.5)],
            grid: None,
        },
        ExperimentKind::Independence => Defaults {
            n: 256,
            trials: 400,
            functions: &[],
            z_points: &[(0.4, 0.4), (-0.4, 0.4)],
            grid: None,
        },
        ExperimentKind::DbmCoupling => Defaults {
            n: 32,
            trials: 500,
            functions: &[],
            z_points: &[(0.3, 0.5)],
            grid: None,
        },
        ExperimentKind::GirkoCheck => Defaults {
            n: 100,
            trials: 3,
            functions: &["bump(0.1-0.2i,0.5)"],
            z_points: &[],
            grid: Some(128),
        },
        ExperimentKind::Edelman => Defaults {
            n: 500,
            trials: 200,
            functions: &[],
            z_points: &[],
            grid: None,
        },
        ExperimentKind::Overlaps => Defaults {
            n: 400,
            trials: 20,
            functions: &[],
            z_points: &[(0.3, 0.4), (-0.5, 0.2)],
            grid: None,
        },
    }
}

fn env_threads() -> Option<usize> {
    std::env::var("SPECTRA_CLT_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
}

fn build_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_file(path)?;
            if cfg.experiment != kind {
                return Err(CliError::Config(format!(
                    "config file describes a {:?} experiment, but the {:?} subcommand was invoked",
                    cfg.experiment, kind
                )));
            }
            cfg
        }
        None => {
            let d = defaults_for(kind);
            let seed = args.seed.ok_or_else(|| {
                CliError::Config(
                    "--seed is required for stochastic subcommands (or use --config)".into(),
                )
            })?;
            ExperimentConfig {
                experiment: kind,
                ensemble: EnsembleConfig {
                    symmetry: "real".into(),
                    law: "gaussian".into(),
                    n: d.n,
                    seed,
                },
                trials: d.trials,
                test_functions: d.functions.iter().map(|s| s.to_string()).collect(),
                z_points: d.z_points.iter().map(|&(x, y)| C64::new(x, y)).collect(),
                eta_grid: vec![],
                exponents: Default::default(),
                output_path: None,
                grid_per_side: d.grid,
                n_values: None,
                threads: None,
            }
        }
    };
    // Flag overrides, applied on top of the config file or the defaults.
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(n) = args.n {
        cfg.ensemble.n = n;
    }
    if let Some(law) = &args.law {
        cfg.ensemble.law = law.clone();
    }
    if let Some(sym) = &args.symmetry {
        cfg.ensemble.symmetry = sym.clone();
    }
    if !args.functions.is_empty() {
        cfg.test_functions = args.functions.clone();
    }
    if !args.z_points.is_empty() {
        cfg.z_points = args
            .z_points
            .iter()
            .map(|t| parse_complex(t))
            .collect::<Result<_, _>>()
            .map_err(config_err)?;
    }
    if !args.etas.is_empty() {
        cfg.eta_grid = args.etas.clone();
    }
    if let Some(grid) = args.grid {
        cfg.grid_per_side = Some(grid);
    }
    if let Some(dims) = &args.dims {
        let parsed: Result<Vec<usize>, _> = dims.split(',').map(|s| s.trim().parse()).collect();
        cfg.n_values = Some(parsed.map_err(|_| {
            CliError::Config(format!("--dims expects comma-separated integers, got {dims:?}"))
        })?);
    }
    if let Some(threads) = args.threads.or_else(env_threads) {
        cfg.threads = Some(threads);
    }
    if kind == ExperimentKind::Clt {
        // For the CLT experiment --out names the trial-record file.
        if let Some(out) = &args.out {
            cfg.output_path = Some(out.clone());
        }
    }
    Ok(cfg)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> Result<ExitCode, CliError> {
    let cfg = build_config(kind, args)?;
    cfg.validate()?;
    let output = harness::run_experiment(&cfg)?;
    print!("{}", output.describe());
    if let Some(out) = &args.out {
        match &output {
            ExperimentOutput::Clt(summary) => {
                // Trial records were already written to `out` by the runner.
                write_json(&with_suffix(out, ".report.json"), &output)?;
                let csv_path = with_suffix(out, ".summary.csv");
                let file = std::fs::File::create(&csv_path).map_err(failure)?;
                harness::write_summary_csv(file, summary)?;
                println!(
                    "wrote {}, {} and {}",
                    out.display(),
                    with_suffix(out, ".report.json").display(),
                    csv_path.display()
                );
            }
            _ => {
                write_json(out, &output)?;
                println!("wrote {}", out.display());
            }
        }
    }
    if output.passes() {
        println!("acceptance checks: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("acceptance checks: FAIL");
        Ok(ExitCode::from(1))
    }
}

fn cmd_selftest() -> Result<ExitCode, CliError> {
    let results = selftest::run_all();
    let mut failed = 0usize;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("selftest: all {} checks passed", results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("selftest: {failed} of {} checks FAILED", results.len());
        Ok(ExitCode::from(1))
    }
}
