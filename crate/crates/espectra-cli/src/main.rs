//! Command-line front end: builds ensembles, computes spectra, solves the
//! deterministic self-consistent equation, and runs the statistical
//! verification experiments.
//!
//! Exit codes: 0 success, 1 a declared threshold failed (the report is still
//! written), 2 configuration problem, 3 I/O problem, 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use espectra::atoms::{AtomFamily, AtomPairSpec, DiagSpec};
use espectra::dyson::{
    density_grid, invert_stieltjes, solve_fixed_point, FixedPointOpts, SigmaSpec,
};
use espectra::ensembles::{
    build_block_linearization, build_elliptic, build_product, EnsembleSpec, FactorSpec,
    PerturbationSpec, ProductSpec,
};
use espectra::error::Error;
use espectra::export::{
    save_matrix, save_report, load_matrix, write_density_csv, write_spectral_csv, MatrixFormat,
};
use espectra::metrics::{
    circular_law_report, concentration_experiment, elliptic_law_report,
    expectation_gap_experiment, lsv_experiment, product_law_report, ExperimentReport,
};
use espectra::spectral::{eigenvalues, nu_measure, singular_values, QPoint};

const EXIT_THRESHOLD: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidSpec(_) | Error::Dimension(_) => EXIT_CONFIG,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format(_) => EXIT_IO,
            Error::Numerical(_) | Error::Backend(_) => EXIT_NUMERICAL,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, msg: msg.into() }
}

// ---------------------------------------------------------------------------
// grammar

#[derive(Parser)]
#[command(
    name = "espectra",
    version,
    about = "Products of elliptic random matrices: spectra, limit laws, and the deterministic equation"
)]
struct Cli {
    /// Worker threads; falls back to the ESPECTRA_THREADS environment
    /// variable, then to all cores. Never changes any emitted number.
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    /// JSON file whose keys mirror this command's flags (unknown keys are
    /// rejected); explicit flags win on conflict.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a matrix and write it to a file.
    Generate(GenerateArgs),
    /// Compute a spectrum of a stored matrix and write it as CSV.
    Spectrum(SpectrumArgs),
    /// Run a verification experiment and write a JSON report.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Deterministic-limit computations.
    #[command(subcommand)]
    Dyson(DysonCommand),
    /// Tabulate the limiting symmetrized singular-value density at a shift z.
    Density(DensityArgs),
    /// Least-singular-value experiment for the shifted linearization.
    Lsv(LsvArgs),
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Pooled product eigenvalues against the m-th power of the circular law.
    ProductLaw(ProductLawArgs),
    /// Linearization eigenvalues against the circular law.
    CircularLaw(CircularLawArgs),
    /// Single-matrix eigenvalues against the uniform-ellipse law.
    EllipticLaw(EllipticLawArgs),
    /// Fluctuation decay of the partial-trace resolvent across sizes.
    Concentration(ScalingArgs),
    /// Bias decay of the mean partial-trace resolvent against the closed form.
    Gap(ScalingArgs),
}

#[derive(Subcommand)]
enum DysonCommand {
    /// Solve the 2m x 2m self-consistent equation at one (z, eta) point.
    Solve(DysonSolveArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum EnsembleArg {
    /// One unnormalized square matrix of correlated mirror pairs.
    Elliptic,
    /// The scaled m-fold factor product N^{-m/2} (Y_1 + A_1) ... (Y_m + A_m).
    Product,
    /// The mN x mN cyclic block linearization Z = (Y + A) / sqrt(N).
    Linearization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum AtomsArg {
    Gaussian,
    Rademacher,
    Pareto,
}

impl From<AtomsArg> for AtomFamily {
    fn from(a: AtomsArg) -> AtomFamily {
        match a {
            AtomsArg::Gaussian => AtomFamily::GaussianPair,
            AtomsArg::Rademacher => AtomFamily::RademacherMix,
            AtomsArg::Pareto => AtomFamily::ParetoSymmetrized,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FormatArg {
    Csv,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum KindArg {
    Eigenvalues,
    Singular,
    Symmetrized,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GenerateArgs {
    /// What to build [default: elliptic].
    #[arg(long, value_enum)]
    ensemble: Option<EnsembleArg>,
    /// Matrix size N (required).
    #[arg(long)]
    n: Option<usize>,
    /// Factor count m for product/linearization [default: 2].
    #[arg(long)]
    m: Option<usize>,
    /// Mirror-pair correlation; a comma list gives one value per factor
    /// [default: 0].
    #[arg(long)]
    rho: Option<String>,
    /// Atom family [default: gaussian].
    #[arg(long, value_enum)]
    atoms: Option<AtomsArg>,
    /// Moment-surplus parameter of the heavy-tailed family [default: 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Allow |rho| = 1 (symmetric mirror pairs).
    #[arg(long)]
    #[serde(default)]
    wigner: bool,
    /// Truncate atoms at 4 N^delta and zero the diagonal.
    #[arg(long, value_name = "DELTA")]
    truncate: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; a .csv extension selects CSV, anything else raw binary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Force the on-disk format regardless of extension.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SpectrumArgs {
    /// Input matrix file (.csv or raw binary by extension).
    #[arg(long = "in", value_name = "FILE")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// Force the input format regardless of extension.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// What to compute [default: eigenvalues].
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Shift z ("a+bi") for the symmetrized singular spectrum [default: 0].
    #[arg(long)]
    z: Option<String>,
    /// Output CSV file (required).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ProductLawArgs {
    /// Factor count [default: 2].
    #[arg(long)]
    m: Option<usize>,
    /// Matrix size [default: 512].
    #[arg(long)]
    n: Option<usize>,
    /// Independently seeded trials to pool [default: 20].
    #[arg(long)]
    trials: Option<usize>,
    /// Mirror-pair correlation, single value or one per factor
    /// [default: 0.5].
    #[arg(long)]
    rho: Option<String>,
    /// Atom family for non-wigner factors [default: gaussian].
    #[arg(long, value_enum)]
    atoms: Option<AtomsArg>,
    /// Moment-surplus parameter of the heavy-tailed family [default: 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Comma list of factor indices built as symmetric (rho = 1) matrices.
    #[arg(long, value_name = "INDICES")]
    wigner_factors: Option<String>,
    /// Truncate atoms at 4 N^delta and zero the diagonal.
    #[arg(long, value_name = "DELTA")]
    truncate: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Pass threshold on the pooled radial KS statistic [default: 0.05].
    #[arg(long)]
    ks_threshold: Option<f64>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CircularLawArgs {
    /// Factor count [default: 3].
    #[arg(long)]
    m: Option<usize>,
    /// Matrix size [default: 256].
    #[arg(long)]
    n: Option<usize>,
    /// Independently seeded trials to pool [default: 10].
    #[arg(long)]
    trials: Option<usize>,
    /// Mirror-pair correlation, single value or one per factor
    /// [default: 0.5].
    #[arg(long)]
    rho: Option<String>,
    /// Atom family [default: gaussian].
    #[arg(long, value_enum)]
    atoms: Option<AtomsArg>,
    /// Moment-surplus parameter of the heavy-tailed family [default: 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Attach a rank-one constant-mean perturbation with this entry mean to
    /// every factor.
    #[arg(long, value_name = "MU")]
    mean: Option<f64>,
    /// Truncate atoms at 4 N^delta and zero the diagonal.
    #[arg(long, value_name = "DELTA")]
    truncate: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Pass threshold on the pooled radial KS statistic [default: 0.05].
    #[arg(long)]
    ks_threshold: Option<f64>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EllipticLawArgs {
    /// Matrix size [default: 1024].
    #[arg(long)]
    n: Option<usize>,
    /// Independently seeded trials to pool [default: 5].
    #[arg(long)]
    trials: Option<usize>,
    /// Mirror-pair correlation [default: 0.5].
    #[arg(long)]
    rho: Option<f64>,
    /// Atom family [default: gaussian].
    #[arg(long, value_enum)]
    atoms: Option<AtomsArg>,
    /// Moment-surplus parameter of the heavy-tailed family [default: 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ScalingArgs {
    /// Factor count [default: 2].
    #[arg(long)]
    m: Option<usize>,
    /// Comma list of sizes N to sample [default: 128,512].
    #[arg(long)]
    n_list: Option<String>,
    /// Replicas per size [default: 50].
    #[arg(long)]
    reps: Option<usize>,
    /// Mirror-pair correlation, single value or one per factor
    /// [default: 0.5].
    #[arg(long)]
    rho: Option<String>,
    /// Atom family [default: gaussian].
    #[arg(long, value_enum)]
    atoms: Option<AtomsArg>,
    /// Moment-surplus parameter of the heavy-tailed family [default: 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Spectral parameter eta ("a+bi", upper half-plane) [default: i].
    #[arg(long)]
    eta: Option<String>,
    /// Shift z ("a+bi") [default: 0.5].
    #[arg(long)]
    z: Option<String>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LsvArgs {
    /// Factor count [default: 2].
    #[arg(long)]
    m: Option<usize>,
    /// Matrix size [default: 256].
    #[arg(long)]
    n: Option<usize>,
    /// Independently seeded trials [default: 100].
    #[arg(long)]
    trials: Option<usize>,
    /// Shift z ("a+bi") [default: 1].
    #[arg(long)]
    z: Option<String>,
    /// Cutoff exponent: a trial fails below N^{-a_exponent} [default: 10].
    #[arg(long)]
    a_exponent: Option<f64>,
    /// Mirror-pair correlation, single value or one per factor
    /// [default: 0.5].
    #[arg(long)]
    rho: Option<String>,
    /// Atom family [default: gaussian].
    #[arg(long, value_enum)]
    atoms: Option<AtomsArg>,
    /// Moment-surplus parameter of the heavy-tailed family [default: 1].
    #[arg(long)]
    tau: Option<f64>,
    /// Comma list of factor indices built as symmetric (rho = 1) matrices.
    #[arg(long, value_name = "INDICES")]
    wigner_factors: Option<String>,
    /// Truncate atoms at 4 N^delta and zero the diagonal.
    #[arg(long, value_name = "DELTA")]
    truncate: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DysonSolveArgs {
    /// Block count m >= 2 [default: 2].
    #[arg(long)]
    m: Option<usize>,
    /// Shift z ("a+bi") [default: 0].
    #[arg(long)]
    z: Option<String>,
    /// Spectral parameter eta ("a+bi", upper half-plane) [default: i].
    #[arg(long)]
    eta: Option<String>,
    /// Mirror correlations, single value or one per factor [default: 0.5].
    #[arg(long)]
    rho: Option<String>,
    /// Fixed-point damping weight in (0, 1] [default: 0.5].
    #[arg(long)]
    damping: Option<f64>,
    /// Convergence tolerance on the max-norm residual [default: 1e-12].
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap [default: 10000].
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DensityArgs {
    /// Shift z ("a+bi") [default: 0].
    #[arg(long)]
    z: Option<String>,
    /// Imaginary offset eps of the evaluation line [default: 1e-4].
    #[arg(long)]
    eps: Option<f64>,
    /// Grid points across the support [default: 2001].
    #[arg(long)]
    points: Option<usize>,
    /// Output CSV file (required).
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// config-file merging: explicit flags win, file values fill the gaps

trait Merge {
    fn merge_over(self, fallback: Self) -> Self;
}

macro_rules! impl_merge {
    ($ty:ty { $($opt:ident),* $(,)? } flags { $($flag:ident),* $(,)? }) => {
        impl Merge for $ty {
            fn merge_over(mut self, fallback: Self) -> Self {
                $( if self.$opt.is_none() { self.$opt = fallback.$opt; } )*
                $( self.$flag = self.$flag || fallback.$flag; )*
                self
            }
        }
    };
}

impl_merge!(GenerateArgs { ensemble, n, m, rho, atoms, tau, truncate, seed, out, format } flags { wigner });
impl_merge!(SpectrumArgs { input, format, kind, z, out } flags {});
impl_merge!(ProductLawArgs { m, n, trials, rho, atoms, tau, wigner_factors, truncate, seed, ks_threshold, report } flags {});
impl_merge!(CircularLawArgs { m, n, trials, rho, atoms, tau, mean, truncate, seed, ks_threshold, report } flags {});
impl_merge!(EllipticLawArgs { n, trials, rho, atoms, tau, seed, report } flags {});
impl_merge!(ScalingArgs { m, n_list, reps, rho, atoms, tau, eta, z, seed, report } flags {});
impl_merge!(LsvArgs { m, n, trials, z, a_exponent, rho, atoms, tau, wigner_factors, truncate, seed, report } flags {});
impl_merge!(DysonSolveArgs { m, z, eta, rho, damping, tol, max_iters } flags {});
impl_merge!(DensityArgs { z, eps, points, out } flags {});

fn merged<T: Merge + DeserializeOwned>(cli: T, config: Option<&Path>) -> Result<T, Failure> {
    match config {
        None => Ok(cli),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure {
                code: EXIT_IO,
                msg: format!("cannot read config {}: {e}", path.display()),
            })?;
            let file: T = serde_json::from_str(&text)
                .map_err(|e| config_err(format!("config {}: {e}", path.display())))?;
            Ok(cli.merge_over(file))
        }
    }
}

// ---------------------------------------------------------------------------
// small parsers

fn parse_complex(s: &str) -> Result<Complex64, Failure> {
    let t = s.trim();
    let bad = || config_err(format!("cannot parse complex number {t:?}; use the form a+bi"));
    if t.is_empty() {
        return Err(bad());
    }
    let real = |p: &str| p.parse::<f64>().map_err(|_| bad());
    let coeff = |p: &str| match p {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        _ => p.parse::<f64>().map_err(|_| bad()),
    };
    match t.strip_suffix(['i', 'I']) {
        None => Ok(Complex64::new(real(t)?, 0.0)),
        Some(body) => {
            let bytes = body.as_bytes();
            let split = (1..bytes.len())
                .rev()
                .find(|&k| {
                    matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E')
                });
            match split {
                Some(k) => Ok(Complex64::new(real(&body[..k])?, coeff(&body[k..])?)),
                None => Ok(Complex64::new(0.0, coeff(body)?)),
            }
        }
    }
}

fn parse_complex_opt(opt: &Option<String>, default: Complex64) -> Result<Complex64, Failure> {
    match opt {
        None => Ok(default),
        Some(s) => parse_complex(s),
    }
}

/// One value for every factor, or a comma list of exactly m values.
fn parse_rho_list(opt: &Option<String>, m: usize, default: f64) -> Result<Vec<f64>, Failure> {
    let Some(s) = opt else {
        return Ok(vec![default; m]);
    };
    let vals: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_err(format!("cannot parse rho list {s:?}")))?;
    match vals.len() {
        1 => Ok(vec![vals[0]; m]),
        k if k == m => Ok(vals),
        k => Err(config_err(format!("rho list has {k} entries but m = {m}"))),
    }
}

fn parse_index_list(opt: &Option<String>, m: usize) -> Result<Vec<usize>, Failure> {
    let Some(s) = opt else { return Ok(Vec::new()) };
    let vals: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_err(format!("cannot parse index list {s:?}")))?;
    for &k in &vals {
        if k >= m {
            return Err(config_err(format!("factor index {k} out of range for m = {m}")));
        }
    }
    Ok(vals)
}

fn parse_size_list(opt: &Option<String>, default: &[usize]) -> Result<Vec<usize>, Failure> {
    let Some(s) = opt else { return Ok(default.to_vec()) };
    let vals: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_err(format!("cannot parse size list {s:?}")))?;
    if vals.is_empty() {
        return Err(config_err("size list is empty"));
    }
    Ok(vals)
}

fn require_flag<T>(opt: Option<T>, flag: &str) -> Result<T, Failure> {
    opt.ok_or_else(|| config_err(format!("{flag} is required (flag or config file)")))
}

fn format_complex(v: Complex64) -> String {
    format!("{:+.12e}{:+.12e}i", v.re, v.im)
}

// ---------------------------------------------------------------------------
// spec assembly

fn make_atom(
    atoms: Option<AtomsArg>,
    rho: f64,
    tau: Option<f64>,
    wigner: bool,
) -> Result<AtomPairSpec, Failure> {
    let family = atoms.unwrap_or(AtomsArg::Gaussian);
    Ok(AtomPairSpec::new(
        family.into(),
        rho,
        tau.unwrap_or(1.0),
        wigner,
        DiagSpec::standard_gaussian(),
    )?)
}

#[allow(clippy::too_many_arguments)]
fn make_product(
    m: usize,
    n: usize,
    atoms: Option<AtomsArg>,
    rho: &Option<String>,
    rho_default: f64,
    tau: Option<f64>,
    wigner_factors: &Option<String>,
    mean: Option<f64>,
    truncate: Option<f64>,
    seed: u64,
) -> Result<ProductSpec, Failure> {
    let rhos = parse_rho_list(rho, m, rho_default)?;
    let wigner = parse_index_list(wigner_factors, m)?;
    let mut factors = Vec::with_capacity(m);
    for (k, &r) in rhos.iter().enumerate() {
        let atom = if wigner.contains(&k) {
            AtomPairSpec::gaussian_wigner()
        } else {
            make_atom(atoms, r, tau, false)?
        };
        let perturbation = match mean {
            Some(mu) => PerturbationSpec::constant_mean(mu),
            None => PerturbationSpec::zero(),
        };
        factors.push(FactorSpec { atom, perturbation });
    }
    let spec = ProductSpec::new(n, factors, seed)?;
    match truncate {
        Some(delta) => Ok(spec.with_truncation(delta)?),
        None => Ok(spec),
    }
}

// ---------------------------------------------------------------------------
// commands

fn cmd_generate(a: GenerateArgs) -> Result<u8, Failure> {
    let n = require_flag(a.n, "--n")?;
    let out = require_flag(a.out, "--out")?;
    let seed = a.seed.unwrap_or(0);
    let ensemble = a.ensemble.unwrap_or(EnsembleArg::Elliptic);
    let (matrix, fingerprint) = match ensemble {
        EnsembleArg::Elliptic => {
            let rhos = parse_rho_list(&a.rho, 1, 0.0)?;
            let atom = make_atom(a.atoms, rhos[0], a.tau, a.wigner)?;
            let spec = match a.truncate {
                Some(delta) => EnsembleSpec::truncated(n, atom, seed, delta)?,
                None => EnsembleSpec::new(n, atom, seed)?,
            };
            (build_elliptic(&spec)?, spec.fingerprint())
        }
        EnsembleArg::Product | EnsembleArg::Linearization => {
            let m = a.m.unwrap_or(2);
            if a.wigner {
                return Err(config_err(
                    "--wigner applies to single elliptic matrices; use --wigner-factors on verify/lsv commands",
                ));
            }
            let prod = make_product(
                m, n, a.atoms, &a.rho, 0.0, a.tau, &None, None, a.truncate, seed,
            )?;
            let fp = prod.fingerprint();
            let matrix = if ensemble == EnsembleArg::Product {
                build_product(&prod)?
            } else {
                build_block_linearization(&prod)?.z
            };
            (matrix, fp)
        }
    };
    let format = match a.format {
        Some(FormatArg::Csv) => MatrixFormat::Csv,
        Some(FormatArg::Binary) => MatrixFormat::Binary,
        None => MatrixFormat::from_path(&out),
    };
    save_matrix(&out, &matrix, format)?;
    println!(
        "fingerprint=0x{fingerprint:016x} seed={seed} rows={} cols={} out={}",
        matrix.nrows(),
        matrix.ncols(),
        out.display()
    );
    Ok(0)
}

fn cmd_spectrum(a: SpectrumArgs) -> Result<u8, Failure> {
    let input = require_flag(a.input, "--in")?;
    let out = require_flag(a.out, "--out")?;
    let format = match a.format {
        Some(FormatArg::Csv) => MatrixFormat::Csv,
        Some(FormatArg::Binary) => MatrixFormat::Binary,
        None => MatrixFormat::from_path(&input),
    };
    let matrix = load_matrix(&input, format)?;
    let kind = a.kind.unwrap_or(KindArg::Eigenvalues);
    let sample = match kind {
        KindArg::Eigenvalues => eigenvalues(&matrix)?,
        KindArg::Singular => singular_values(&matrix)?,
        KindArg::Symmetrized => {
            let z = parse_complex_opt(&a.z, Complex64::new(0.0, 0.0))?;
            nu_measure(&matrix, z)?
        }
    };
    let file = std::io::BufWriter::new(std::fs::File::create(&out).map_err(Error::from)?);
    write_spectral_csv(&sample, file)?;
    println!("kind={kind:?} values={} out={}", sample.values.len(), out.display());
    Ok(0)
}

/// Prints one line per scored statistic, writes the report if requested, and
/// maps overall pass/fail onto the exit code. The report is written before
/// the threshold verdict so a failing run still leaves the evidence behind.
fn finish_report(report: &ExperimentReport, path: Option<&Path>) -> Result<u8, Failure> {
    if let Some(p) = path {
        save_report(p, report)?;
    }
    for row in &report.per_n {
        println!(
            "{} N={} {} stat={:.6e} threshold={:.6e} {}",
            report.name,
            row.n,
            row.metric,
            row.stat,
            row.threshold,
            if row.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if report.passed() { 0 } else { EXIT_THRESHOLD })
}

fn cmd_product_law(a: ProductLawArgs) -> Result<u8, Failure> {
    let m = a.m.unwrap_or(2);
    let n = a.n.unwrap_or(512);
    let trials = a.trials.unwrap_or(20);
    let prod = make_product(
        m,
        n,
        a.atoms,
        &a.rho,
        0.5,
        a.tau,
        &a.wigner_factors,
        None,
        a.truncate,
        a.seed.unwrap_or(0),
    )?;
    let report = product_law_report(&prod, trials, a.ks_threshold.unwrap_or(0.05))?;
    finish_report(&report, a.report.as_deref())
}

fn cmd_circular_law(a: CircularLawArgs) -> Result<u8, Failure> {
    let m = a.m.unwrap_or(3);
    let n = a.n.unwrap_or(256);
    let trials = a.trials.unwrap_or(10);
    let prod = make_product(
        m,
        n,
        a.atoms,
        &a.rho,
        0.5,
        a.tau,
        &None,
        a.mean,
        a.truncate,
        a.seed.unwrap_or(0),
    )?;
    let report = circular_law_report(&prod, trials, a.ks_threshold.unwrap_or(0.05))?;
    finish_report(&report, a.report.as_deref())
}

fn cmd_elliptic_law(a: EllipticLawArgs) -> Result<u8, Failure> {
    let n = a.n.unwrap_or(1024);
    let trials = a.trials.unwrap_or(5);
    let atom = make_atom(a.atoms, a.rho.unwrap_or(0.5), a.tau, false)?;
    let spec = EnsembleSpec::new(n, atom, a.seed.unwrap_or(0))?;
    let report = elliptic_law_report(&spec, trials)?;
    finish_report(&report, a.report.as_deref())
}

fn cmd_scaling(a: ScalingArgs, gap: bool) -> Result<u8, Failure> {
    let m = a.m.unwrap_or(2);
    let n_list = parse_size_list(&a.n_list, &[128, 512])?;
    let reps = a.reps.unwrap_or(50);
    let eta = parse_complex_opt(&a.eta, Complex64::new(0.0, 1.0))?;
    let z = parse_complex_opt(&a.z, Complex64::new(0.5, 0.0))?;
    let q = QPoint::new(eta, z, m)?;
    let base_n = *n_list.iter().max().expect("nonempty");
    let prod = make_product(
        m,
        base_n,
        a.atoms,
        &a.rho,
        0.5,
        a.tau,
        &None,
        None,
        None,
        a.seed.unwrap_or(0),
    )?;
    let report = if gap {
        expectation_gap_experiment(&prod, &q, &n_list, reps)?
    } else {
        concentration_experiment(&prod, &q, &n_list, reps)?
    };
    finish_report(&report, a.report.as_deref())
}

fn cmd_lsv(a: LsvArgs) -> Result<u8, Failure> {
    let m = a.m.unwrap_or(2);
    let n = a.n.unwrap_or(256);
    let trials = a.trials.unwrap_or(100);
    let z = parse_complex_opt(&a.z, Complex64::new(1.0, 0.0))?;
    let prod = make_product(
        m,
        n,
        a.atoms,
        &a.rho,
        0.5,
        a.tau,
        &a.wigner_factors,
        None,
        a.truncate,
        a.seed.unwrap_or(0),
    )?;
    let report = lsv_experiment(&prod, z, a.a_exponent.unwrap_or(10.0), trials)?;
    finish_report(&report, a.report.as_deref())
}

fn cmd_dyson_solve(a: DysonSolveArgs) -> Result<u8, Failure> {
    let m = a.m.unwrap_or(2);
    let z = parse_complex_opt(&a.z, Complex64::new(0.0, 0.0))?;
    let eta = parse_complex_opt(&a.eta, Complex64::new(0.0, 1.0))?;
    let q = QPoint::new(eta, z, m)?;
    let rhos = parse_rho_list(&a.rho, m, 0.5)?;
    let sigma = SigmaSpec::new(m, rhos)?;
    let mut opts = FixedPointOpts::default();
    if let Some(w) = a.damping {
        opts.damping = w;
    }
    if let Some(t) = a.tol {
        opts.tol = t;
    }
    if let Some(k) = a.max_iters {
        opts.max_iters = k;
    }
    let sol = solve_fixed_point(&q, &sigma, &opts)?;
    let g = &sol.gamma.entries;
    for a_idx in 0..g.nrows() {
        for b_idx in 0..g.ncols() {
            println!("gamma[{a_idx}][{b_idx}] = {}", format_complex(g[[a_idx, b_idx]]));
        }
    }
    println!(
        "{}",
        serde_json::json!({
            "residual": sol.residual,
            "iterations": sol.iterations,
            "damping_final": sol.damping_final,
        })
    );
    Ok(0)
}

fn cmd_density(a: DensityArgs) -> Result<u8, Failure> {
    let out = require_flag(a.out, "--out")?;
    let z = parse_complex_opt(&a.z, Complex64::new(0.0, 0.0))?;
    let eps = a.eps.unwrap_or(1e-4);
    let points = a.points.unwrap_or(2001);
    let curve = invert_stieltjes(z, &density_grid(z, points), eps)?;
    let file = std::io::BufWriter::new(std::fs::File::create(&out).map_err(Error::from)?);
    write_density_csv(&curve, file)?;
    println!(
        "points={} mass={:.6} max={:.6} out={}",
        curve.xs.len(),
        curve.mass(),
        curve.max_value(),
        out.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------

fn setup_threads(flag: Option<usize>) -> Result<(), Failure> {
    let threads = match flag {
        Some(k) => Some(k),
        None => match std::env::var("ESPECTRA_THREADS") {
            Err(_) => None,
            Ok(text) => Some(text.parse::<usize>().map_err(|_| {
                config_err(format!("ESPECTRA_THREADS must be an unsigned integer, got {text:?}"))
            })?),
        },
    };
    if let Some(k) = threads {
        if k > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .map_err(|e| config_err(format!("thread pool: {e}")))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    setup_threads(cli.threads)?;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Generate(a) => cmd_generate(merged(a, config)?),
        Command::Spectrum(a) => cmd_spectrum(merged(a, config)?),
        Command::Verify(v) => match v {
            VerifyCommand::ProductLaw(a) => cmd_product_law(merged(a, config)?),
            VerifyCommand::CircularLaw(a) => cmd_circular_law(merged(a, config)?),
            VerifyCommand::EllipticLaw(a) => cmd_elliptic_law(merged(a, config)?),
            VerifyCommand::Concentration(a) => cmd_scaling(merged(a, config)?, false),
            VerifyCommand::Gap(a) => cmd_scaling(merged(a, config)?, true),
        },
        Command::Dyson(d) => match d {
            DysonCommand::Solve(a) => cmd_dyson_solve(merged(a, config)?),
        },
        Command::Density(a) => cmd_density(merged(a, config)?),
        Command::Lsv(a) => cmd_lsv(merged(a, config)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        let cases = [
            ("0.3+0.1i", 0.3, 0.1),
            ("0.2i", 0.0, 0.2),
            ("-i", 0.0, -1.0),
            ("i", 0.0, 1.0),
            ("2", 2.0, 0.0),
            ("-1.5-0.5i", -1.5, -0.5),
            ("1e-3i", 0.0, 1e-3),
            ("-2e-1+3e0i", -0.2, 3.0),
            ("4+i", 4.0, 1.0),
        ];
        for (text, re, im) in cases {
            let v = parse_complex(text).unwrap();
            assert_eq!((v.re, v.im), (re, im), "{text}");
        }
        for bad in ["", "abc", "1+2j", "i2", "1ii", "+-3i"] {
            assert!(parse_complex(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn rho_lists_broadcast_or_match_m() {
        assert_eq!(parse_rho_list(&None, 3, 0.5).unwrap(), vec![0.5, 0.5, 0.5]);
        assert_eq!(
            parse_rho_list(&Some("0.1".into()), 2, 0.0).unwrap(),
            vec![0.1, 0.1]
        );
        assert_eq!(
            parse_rho_list(&Some("0.1,0.2".into()), 2, 0.0).unwrap(),
            vec![0.1, 0.2]
        );
        assert!(parse_rho_list(&Some("0.1,0.2".into()), 3, 0.0).is_err());
        assert!(parse_rho_list(&Some("x".into()), 2, 0.0).is_err());
    }

    #[test]
    fn flags_win_over_config() {
        let cli = ProductLawArgs {
            n: Some(64),
            ..Default::default()
        };
        let file = ProductLawArgs {
            n: Some(512),
            trials: Some(7),
            ..Default::default()
        };
        let eff = cli.merge_over(file);
        assert_eq!(eff.n, Some(64));
        assert_eq!(eff.trials, Some(7));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<ProductLawArgs>("{\"bogus\": 1}");
        assert!(err.is_err());
        let ok = serde_json::from_str::<ProductLawArgs>("{\"m\": 2, \"ks_threshold\": 0.05}");
        assert!(ok.is_ok());
    }
}
