//! Atom distributions for matrix entries.
//!
//! A matrix ensemble is driven by a *pair law*: the two entries mirrored
//! across the diagonal, `(y_ij, y_ji)` with `i < j`, are drawn jointly from a
//! centered, unit-variance bivariate law with cross-correlation `rho`, and a
//! separate scalar law fills the diagonal. Three pair families are provided:
//!
//! * `gaussian-pair`: jointly Gaussian, correlation exactly `rho`;
//! * `rademacher-mix`: signs coupled by a mixture (with probability `|rho|`
//!   the second coordinate copies the first up to `sign(rho)`, otherwise it
//!   is independent);
//! * `pareto-symmetrized`: sign-symmetrized Pareto tail with exponent
//!   `2 + tau + 1/2`, rescaled to unit variance, coupled by the same
//!   mixture. Its `2 + tau` absolute moment is finite, higher ones are not.
//!
//! [`truncate_spec`] computes the centering/rescaling constants for entries
//! truncated at `N^delta`, which the heavy-tailed theory needs; the
//! rescaled variable stays within `4 N^delta` and its correlation drifts
//! from `rho` by at most a dimension-free multiple of `N^{-delta tau / 2}`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::numeric::adaptive_simpson;
use crate::rng::SplitMix64;

/// Pair families for the mirrored off-diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomFamily {
    GaussianPair,
    RademacherMix,
    ParetoSymmetrized,
}

/// Scalar laws for the diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagFamily {
    Gaussian,
    Rademacher,
    Zero,
}

/// Law of the diagonal entries: centered, with the stated variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagSpec {
    pub family: DiagFamily,
    pub variance: f64,
}

impl DiagSpec {
    pub fn new(family: DiagFamily, variance: f64) -> Result<Self> {
        require(
            variance.is_finite() && variance >= 0.0,
            format!("diagonal variance must be finite and >= 0, got {variance}"),
        )?;
        Ok(DiagSpec { family, variance })
    }

    pub fn zero() -> Self {
        DiagSpec { family: DiagFamily::Zero, variance: 0.0 }
    }

    pub fn standard_gaussian() -> Self {
        DiagSpec { family: DiagFamily::Gaussian, variance: 1.0 }
    }
}

/// Joint law of a mirrored entry pair plus the diagonal law.
///
/// `tau` declares the moment surplus: the marginals have a finite
/// `2 + tau` absolute moment (for the Pareto family nothing beyond it).
/// `wigner` widens the admissible correlation to `|rho| = 1`, which makes
/// the sampled matrix symmetric (`rho = 1`) or antisymmetric off the
/// diagonal (`rho = -1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAtomPairSpec", into = "RawAtomPairSpec")]
pub struct AtomPairSpec {
    family: AtomFamily,
    rho: f64,
    tau: f64,
    wigner: bool,
    diag: DiagSpec,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtomPairSpec {
    family: AtomFamily,
    rho: f64,
    tau: f64,
    wigner: bool,
    diag: DiagSpec,
}

impl TryFrom<RawAtomPairSpec> for AtomPairSpec {
    type Error = Error;
    fn try_from(raw: RawAtomPairSpec) -> Result<Self> {
        AtomPairSpec::new(raw.family, raw.rho, raw.tau, raw.wigner, raw.diag)
    }
}

impl From<AtomPairSpec> for RawAtomPairSpec {
    fn from(s: AtomPairSpec) -> Self {
        RawAtomPairSpec { family: s.family, rho: s.rho, tau: s.tau, wigner: s.wigner, diag: s.diag }
    }
}

impl AtomPairSpec {
    pub fn new(
        family: AtomFamily,
        rho: f64,
        tau: f64,
        wigner: bool,
        diag: DiagSpec,
    ) -> Result<Self> {
        require(rho.is_finite(), "rho must be finite")?;
        if wigner {
            require(
                rho.abs() <= 1.0,
                format!("|rho| <= 1 required even for symmetric ensembles, got {rho}"),
            )?;
        } else {
            require(
                rho.abs() < 1.0,
                format!("|rho| < 1 required (pass wigner=true to allow rho = +-1), got {rho}"),
            )?;
        }
        require(
            tau.is_finite() && tau > 0.0,
            format!("moment surplus tau must be > 0, got {tau}"),
        )?;
        DiagSpec::new(diag.family, diag.variance)?;
        Ok(AtomPairSpec { family, rho, tau, wigner, diag })
    }

    /// Correlated Gaussian pair with standard-Gaussian diagonal.
    pub fn gaussian(rho: f64) -> Result<Self> {
        AtomPairSpec::new(AtomFamily::GaussianPair, rho, 1.0, false, DiagSpec::standard_gaussian())
    }

    /// Symmetric Wigner-type atoms: `rho = 1`, Gaussian marginals and
    /// diagonal.
    pub fn gaussian_wigner() -> Self {
        AtomPairSpec {
            family: AtomFamily::GaussianPair,
            rho: 1.0,
            tau: 1.0,
            wigner: true,
            diag: DiagSpec::standard_gaussian(),
        }
    }

    pub fn family(&self) -> AtomFamily {
        self.family
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn wigner(&self) -> bool {
        self.wigner
    }

    pub fn diag(&self) -> DiagSpec {
        self.diag
    }

    /// Pareto tail exponent used by the heavy-tailed family.
    fn pareto_exponent(&self) -> f64 {
        2.0 + self.tau + 0.5
    }

    /// Scale putting the symmetrized Pareto variable at unit variance.
    fn pareto_scale(&self) -> f64 {
        let alpha = self.pareto_exponent();
        ((alpha - 2.0) / alpha).sqrt()
    }

    /// One draw of the mirrored pair `(xi_1, xi_2)`.
    pub fn sample_pair(&self, rng: &mut SplitMix64) -> (f64, f64) {
        match self.family {
            AtomFamily::GaussianPair => {
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                let rho = self.rho;
                (g1, rho * g1 + (1.0 - rho * rho).max(0.0).sqrt() * g2)
            }
            AtomFamily::RademacherMix => {
                let x1 = rademacher(rng);
                let x2 = self.mixture_partner(x1, rng, rademacher);
                (x1, x2)
            }
            AtomFamily::ParetoSymmetrized => {
                let alpha = self.pareto_exponent();
                let scale = self.pareto_scale();
                let draw = move |r: &mut SplitMix64| pareto_symmetrized(alpha, scale, r);
                let x1 = draw(rng);
                let x2 = self.mixture_partner(x1, rng, draw);
                (x1, x2)
            }
        }
    }

    /// Mixture coupling shared by the non-Gaussian families: with
    /// probability `|rho|` the partner equals `sign(rho) * x1`, otherwise it
    /// is an independent fresh draw. The cross moment is exactly `rho`.
    fn mixture_partner(
        &self,
        x1: f64,
        rng: &mut SplitMix64,
        fresh: impl Fn(&mut SplitMix64) -> f64,
    ) -> f64 {
        let couple = rng.open01() < self.rho.abs();
        // Draw unconditionally so the stream advances the same way on both
        // branches; a pair site always consumes the same number of words.
        let independent = fresh(rng);
        if couple {
            self.rho.signum() * x1
        } else {
            independent
        }
    }

    /// One draw of the diagonal law.
    pub fn sample_diag(&self, rng: &mut SplitMix64) -> f64 {
        let sd = self.diag.variance.sqrt();
        match self.diag.family {
            DiagFamily::Gaussian => {
                let g: f64 = rng.sample(StandardNormal);
                sd * g
            }
            DiagFamily::Rademacher => sd * rademacher(rng),
            DiagFamily::Zero => 0.0,
        }
    }

    /// Exact absolute moment `E|xi|^p` of one marginal.
    pub fn marginal_abs_moment(&self, p: f64) -> f64 {
        match self.family {
            AtomFamily::GaussianPair => {
                // E|g|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)
                let g = statrs::function::gamma::gamma((p + 1.0) / 2.0);
                2f64.powf(p / 2.0) * g / std::f64::consts::PI.sqrt()
            }
            AtomFamily::RademacherMix => 1.0,
            AtomFamily::ParetoSymmetrized => {
                let alpha = self.pareto_exponent();
                let s = self.pareto_scale();
                assert!(p < alpha, "moment of order {p} diverges at tail exponent {alpha}");
                s.powf(p) * alpha / (alpha - p)
            }
        }
    }

    /// `M_{2+tau}`: the summed `2 + tau` absolute moments of the pair.
    pub fn moment_sum(&self) -> f64 {
        2.0 * self.marginal_abs_moment(2.0 + self.tau)
    }
}

fn rademacher(rng: &mut SplitMix64) -> f64 {
    if rng.next() >> 63 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Sign-symmetrized Pareto draw scaled to unit variance: `s * sign * u^{-1/alpha}`.
fn pareto_symmetrized(alpha: f64, scale: f64, rng: &mut SplitMix64) -> f64 {
    let sign = rademacher(rng);
    let u = rng.open01();
    scale * sign * u.powf(-1.0 / alpha)
}

/// Centering and rescaling constants for entries truncated at `N^delta`.
///
/// The transformed variable is `(xi 1{|xi| <= threshold} - center) / scale`;
/// it has mean zero, unit variance, and absolute value at most
/// `4 * threshold` whenever `scale^2 >= 1/2`, which the constructor
/// enforces. `rho_hat` is the correlation of the transformed pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConstants {
    pub threshold: f64,
    pub center_1: f64,
    pub center_2: f64,
    pub scale_1: f64,
    pub scale_2: f64,
    pub delta: f64,
    pub rho_hat: f64,
}

/// Number of Monte Carlo draws used for the Pareto truncation constants.
const PARETO_MC_SAMPLES: u64 = 1_000_000;
const PARETO_MC_SEED: u64 = 0x7ab3_19c5_52ee_0d41;

fn pareto_mc_cache() -> &'static Mutex<HashMap<(u64, u64), (f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), (f64, f64)>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn big_phi(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// `E[Y 1{-t <= Y <= t}]` for `Y ~ N(mu, sigma^2)`.
fn gaussian_windowed_mean(mu: f64, sigma: f64, t: f64) -> f64 {
    let a = (-t - mu) / sigma;
    let b = (t - mu) / sigma;
    mu * (big_phi(b) - big_phi(a)) - sigma * (phi(b) - phi(a))
}

/// Truncation constants for entries clipped at `threshold = N^delta`.
///
/// Gaussian and Rademacher marginals use closed forms (the Gaussian
/// truncated correlation needs one quadrature of a closed-form integrand);
/// Pareto constants come from a seeded Monte Carlo run that is memoized per
/// `(tau, threshold)`.
pub fn truncate_spec(spec: &AtomPairSpec, n: usize, delta: f64) -> Result<TruncationConstants> {
    require(n >= 1, "matrix size must be >= 1")?;
    require(
        delta.is_finite() && delta > 0.0,
        format!("truncation exponent delta must be > 0, got {delta}"),
    )?;
    require(
        delta * spec.tau() < 1.0,
        format!(
            "delta * tau must be < 1 for the truncated law of large numbers \
             (got delta = {delta}, tau = {})",
            spec.tau()
        ),
    )?;
    let t = (n as f64).powf(delta);

    let (center, var) = match spec.family {
        AtomFamily::GaussianPair => {
            // Symmetric law: the truncated mean vanishes; second moment by
            // the standard Gaussian window formula.
            let v = statrs::function::erf::erf(t / std::f64::consts::SQRT_2)
                - 2.0 * t * phi(t);
            (0.0, v)
        }
        AtomFamily::RademacherMix => {
            // |xi| = 1 <= N^delta always: truncation is the identity.
            (0.0, 1.0)
        }
        AtomFamily::ParetoSymmetrized => pareto_truncation_moments(spec, t),
    };

    if var < 0.5 {
        return Err(Error::Numerical(format!(
            "truncated variance {var:.4} < 1/2 at threshold {t:.4}: \
             matrix size {n} is below the stabilization size for these atoms"
        )));
    }
    let scale = var.sqrt();

    let rho_hat = match spec.family {
        AtomFamily::GaussianPair => {
            if spec.rho.abs() == 1.0 {
                // Degenerate pair: xi_2 = sign(rho) xi_1 survives truncation.
                spec.rho
            } else {
                let rho = spec.rho;
                let sigma = (1.0 - rho * rho).sqrt();
                let integrand = move |x: f64| x * gaussian_windowed_mean(rho * x, sigma, t) * phi(x);
                adaptive_simpson(&integrand, -t, t, 1e-13) / var
            }
        }
        // Mixture coupling: the coupled branch truncates coherently, the
        // independent branch stays centered, so the truncated cross moment
        // is rho * var and the normalization cancels it back to rho.
        AtomFamily::RademacherMix | AtomFamily::ParetoSymmetrized => spec.rho,
    };

    Ok(TruncationConstants {
        threshold: t,
        center_1: center,
        center_2: center,
        scale_1: scale,
        scale_2: scale,
        delta,
        rho_hat,
    })
}

/// Monte Carlo estimate of the truncated mean and variance of the
/// symmetrized Pareto marginal, memoized per `(tau, threshold)`.
fn pareto_truncation_moments(spec: &AtomPairSpec, t: f64) -> (f64, f64) {
    let key = (spec.tau.to_bits(), t.to_bits());
    if let Some(&hit) = pareto_mc_cache().lock().unwrap().get(&key) {
        return hit;
    }
    let alpha = spec.pareto_exponent();
    let scale = spec.pareto_scale();
    let mut rng = SplitMix64::for_site(PARETO_MC_SEED, &[spec.tau.to_bits(), t.to_bits()]);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..PARETO_MC_SAMPLES {
        let x = pareto_symmetrized(alpha, scale, &mut rng);
        let clipped = if x.abs() <= t { x } else { 0.0 };
        sum += clipped;
        sumsq += clipped * clipped;
    }
    let mean = sum / PARETO_MC_SAMPLES as f64;
    let var = sumsq / PARETO_MC_SAMPLES as f64 - mean * mean;
    pareto_mc_cache().lock().unwrap().insert(key, (mean, var));
    (mean, var)
}

impl TruncationConstants {
    /// Apply the truncation transform to one sampled pair.
    pub fn apply(&self, pair: (f64, f64)) -> (f64, f64) {
        let clip = |x: f64, c: f64, s: f64| {
            let kept = if x.abs() <= self.threshold { x } else { 0.0 };
            (kept - c) / s
        };
        (clip(pair.0, self.center_1, self.scale_1), clip(pair.1, self.center_2, self.scale_2))
    }
}

/// Draw a mirrored pair and push it through the truncation transform.
pub fn sample_pair_truncated(
    spec: &AtomPairSpec,
    tc: &TruncationConstants,
    rng: &mut SplitMix64,
) -> (f64, f64) {
    tc.apply(spec.sample_pair(rng))
}

/// Worst-case drift of the variance under truncation at `N^delta`:
/// `|1 - Var(truncated)| <= 2 M_{2+tau} N^{-delta tau}`.
pub fn truncation_variance_bound(moment_sum: f64, n: usize, delta: f64, tau: f64) -> f64 {
    2.0 * moment_sum * (n as f64).powf(-delta * tau)
}

/// Worst-case drift of the correlation under truncation at `N^delta`:
/// `|rho_hat - rho| <= 13 M_{2+tau} N^{-delta tau / 2}`.
pub fn truncation_correlation_bound(moment_sum: f64, n: usize, delta: f64, tau: f64) -> f64 {
    13.0 * moment_sum * (n as f64).powf(-delta * tau / 2.0)
}
