//! Matrix ensembles: correlated-entry random matrices, deterministic
//! low-rank perturbations, the cyclic block linearization of an `m`-factor
//! product, and the scaled product itself.
//!
//! Entries are pure functions of `(seed, site)`: the mirrored pair
//! `(y_ij, y_ji)`, `i < j`, is drawn from the stream keyed by `(seed, i, j)`
//! and the diagonal entry `y_ii` from its own stream. Both sides of a mirror
//! pair re-derive the same stream, so any fill order (or thread schedule)
//! produces the same matrix, and the top-left corner of a larger matrix
//! built from the same seed coincides with the smaller one.

use ndarray::{s, Array2};
use ndarray_linalg::{JobSvd, SVDDC};

use crate::atoms::{truncate_spec, AtomPairSpec, TruncationConstants};
use crate::error::{require, Error, Result};
use crate::rng::{stream_key, SplitMix64};

const PAIR_TAG: u64 = 0x5041_4952; // "PAIR"
const DIAG_TAG: u64 = 0x4449_4147; // "DIAG"
const FACTOR_TAG: u64 = 0x4641_4354; // "FACT"

/// One random matrix: size, entry law, seed, optional truncation.
///
/// With `truncated` set, off-diagonal atoms are clipped at `N^delta` and
/// re-standardized, and the diagonal is zeroed, matching the normalization
/// under which the resolvent approximation bounds are stated.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub atom: AtomPairSpec,
    pub seed: u64,
    pub truncated: bool,
    pub delta: f64,
}

impl EnsembleSpec {
    pub fn new(n: usize, atom: AtomPairSpec, seed: u64) -> Result<Self> {
        require(n >= 1, "matrix size must be >= 1")?;
        Ok(EnsembleSpec { n, atom, seed, truncated: false, delta: 0.1 })
    }

    /// Truncated variant; fails early when `N` is below the stabilization
    /// size for these atoms or `delta * tau >= 1`.
    pub fn truncated(n: usize, atom: AtomPairSpec, seed: u64, delta: f64) -> Result<Self> {
        require(n >= 1, "matrix size must be >= 1")?;
        truncate_spec(&atom, n, delta)?;
        Ok(EnsembleSpec { n, atom, seed, truncated: true, delta })
    }

    /// Stable fingerprint of everything that determines the sampled matrix.
    pub fn fingerprint(&self) -> u64 {
        let a = &self.atom;
        stream_key(
            self.seed,
            &[
                self.n as u64,
                a.family() as u64,
                a.rho().to_bits(),
                a.tau().to_bits(),
                a.wigner() as u64,
                a.diag().family as u64,
                a.diag().variance.to_bits(),
                self.truncated as u64,
                self.delta.to_bits(),
            ],
        )
    }
}

/// Sample the matrix described by `spec`.
pub fn build_elliptic(spec: &EnsembleSpec) -> Result<Array2<f64>> {
    let tc = if spec.truncated {
        Some(truncate_spec(&spec.atom, spec.n, spec.delta)?)
    } else {
        None
    };
    let n = spec.n;
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        entry_value(spec, tc.as_ref(), i, j)
    }))
}

/// Value of entry `(i, j)` as a pure function of the spec.
fn entry_value(spec: &EnsembleSpec, tc: Option<&TruncationConstants>, i: usize, j: usize) -> f64 {
    if i == j {
        if tc.is_some() {
            // Truncated normalization zeroes the diagonal.
            return 0.0;
        }
        let mut rng = SplitMix64::for_site(spec.seed, &[DIAG_TAG, i as u64]);
        return spec.atom.sample_diag(&mut rng);
    }
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let mut rng = SplitMix64::for_site(spec.seed, &[PAIR_TAG, lo as u64, hi as u64]);
    let pair = spec.atom.sample_pair(&mut rng);
    let pair = match tc {
        Some(t) => t.apply(pair),
        None => pair,
    };
    if i < j {
        pair.0
    } else {
        pair.1
    }
}

/// Deterministic additive perturbation applied to one factor.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationKind {
    Zero,
    /// Every entry equals `mu`: a rank-one mean shift.
    ConstantMean(f64),
    Explicit(Array2<f64>),
}

/// Perturbation plus its admissibility budget: numerical rank at most
/// `rank_bound * N^{1 - epsilon}` and squared Hilbert-Schmidt norm at most
/// `hs_norm_bound * N^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub rank_bound: f64,
    pub hs_norm_bound: f64,
    pub epsilon: f64,
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        PerturbationSpec {
            kind: PerturbationKind::Zero,
            rank_bound: 1.0,
            hs_norm_bound: 1.0,
            epsilon: 0.5,
        }
    }

    pub fn constant_mean(mu: f64) -> Self {
        PerturbationSpec { kind: PerturbationKind::ConstantMean(mu), ..PerturbationSpec::zero() }
    }

    pub fn explicit(matrix: Array2<f64>) -> Self {
        PerturbationSpec { kind: PerturbationKind::Explicit(matrix), ..PerturbationSpec::zero() }
    }

    fn validate_budget(&self, n: usize, rank: usize, hs_sq: f64) -> Result<()> {
        require(
            self.epsilon > 0.0 && self.epsilon <= 1.0,
            format!("perturbation epsilon must lie in (0, 1], got {}", self.epsilon),
        )?;
        let rank_cap = self.rank_bound * (n as f64).powf(1.0 - self.epsilon);
        if rank as f64 > rank_cap {
            return Err(Error::InvalidSpec(format!(
                "perturbation rank {rank} exceeds {:.3} = rank_bound * N^(1-epsilon) at N = {n}",
                rank_cap
            )));
        }
        let hs_cap = self.hs_norm_bound * (n as f64).powi(2);
        if hs_sq > hs_cap {
            return Err(Error::InvalidSpec(format!(
                "perturbation squared HS norm {hs_sq:.3} exceeds {hs_cap:.3} = hs_norm_bound * N^2"
            )));
        }
        Ok(())
    }
}

/// Materialize the perturbation at size `n`, enforcing its budget.
pub fn build_perturbation(spec: &PerturbationSpec, n: usize) -> Result<Array2<f64>> {
    match &spec.kind {
        PerturbationKind::Zero => {
            spec.validate_budget(n, 0, 0.0)?;
            Ok(Array2::zeros((n, n)))
        }
        PerturbationKind::ConstantMean(mu) => {
            let rank = usize::from(*mu != 0.0);
            let hs_sq = mu * mu * (n * n) as f64;
            spec.validate_budget(n, rank, hs_sq)?;
            Ok(Array2::from_elem((n, n), *mu))
        }
        PerturbationKind::Explicit(a) => {
            require(
                a.nrows() == n && a.ncols() == n,
                format!("explicit perturbation is {}x{}, expected {n}x{n}", a.nrows(), a.ncols()),
            )?;
            let hs_sq = a.iter().map(|x| x * x).sum();
            let (_, sv, _) = a.svddc(JobSvd::None)?;
            let tol = sv.first().copied().unwrap_or(0.0) * n as f64 * f64::EPSILON;
            let rank = sv.iter().filter(|&&s| s > tol).count();
            spec.validate_budget(n, rank, hs_sq)?;
            Ok(a.clone())
        }
    }
}

/// One factor of the product: its entry law and its perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub atom: AtomPairSpec,
    pub perturbation: PerturbationSpec,
}

impl FactorSpec {
    pub fn plain(atom: AtomPairSpec) -> Self {
        FactorSpec { atom, perturbation: PerturbationSpec::zero() }
    }
}

/// An `m >= 2` factor product at size `N`, with one derived seed per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpec {
    pub n: usize,
    pub factors: Vec<FactorSpec>,
    pub master_seed: u64,
    pub truncated: bool,
    pub delta: f64,
}

impl ProductSpec {
    pub fn new(n: usize, factors: Vec<FactorSpec>, master_seed: u64) -> Result<Self> {
        require(
            factors.len() >= 2,
            format!("a product needs at least two factors, got {}", factors.len()),
        )?;
        require(n >= 1, "matrix size must be >= 1")?;
        let spec =
            ProductSpec { n, factors, master_seed, truncated: false, delta: 0.1 };
        spec.check_seed_collisions()?;
        Ok(spec)
    }

    /// All factors share one atom law and carry no perturbation.
    pub fn uniform(m: usize, n: usize, atom: AtomPairSpec, master_seed: u64) -> Result<Self> {
        ProductSpec::new(n, vec![FactorSpec::plain(atom); m], master_seed)
    }

    pub fn with_truncation(mut self, delta: f64) -> Result<Self> {
        for f in &self.factors {
            truncate_spec(&f.atom, self.n, delta)?;
        }
        self.truncated = true;
        self.delta = delta;
        Ok(self)
    }

    /// Same recipe, different master seed (factor seeds are re-derived).
    pub fn with_master_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    /// Same recipe at a different size.
    pub fn with_size(mut self, n: usize) -> Result<Self> {
        require(n >= 1, "matrix size must be >= 1")?;
        if self.truncated {
            for f in &self.factors {
                truncate_spec(&f.atom, n, self.delta)?;
            }
        }
        self.n = n;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.factors.len()
    }

    /// Seed of factor `k`, a pure function of `(master_seed, k)`.
    pub fn factor_seed(&self, k: usize) -> u64 {
        stream_key(self.master_seed, &[FACTOR_TAG, k as u64])
    }

    fn check_seed_collisions(&self) -> Result<()> {
        let mut seeds: Vec<u64> = (0..self.m()).map(|k| self.factor_seed(k)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        require(
            seeds.len() == self.m(),
            "factor seed derivation collided; pick a different master seed",
        )
    }

    /// Ensemble description of factor `k`.
    pub fn factor_ensemble(&self, k: usize) -> EnsembleSpec {
        EnsembleSpec {
            n: self.n,
            atom: self.factors[k].atom,
            seed: self.factor_seed(k),
            truncated: self.truncated,
            delta: self.delta,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        let parts: Vec<u64> =
            (0..self.m()).map(|k| self.factor_ensemble(k).fingerprint()).collect();
        stream_key(self.master_seed, &parts)
    }
}

/// Unscaled perturbed factor `Y_k + A_k`.
pub fn build_factor(prod: &ProductSpec, k: usize) -> Result<Array2<f64>> {
    require(k < prod.m(), format!("factor index {k} out of range for m = {}", prod.m()))?;
    let y = build_elliptic(&prod.factor_ensemble(k))?;
    let a = build_perturbation(&prod.factors[k].perturbation, prod.n)?;
    Ok(y + a)
}

/// The cyclic block linearization of a product: `Y` holds factor `k` in
/// block `(k, k+1 mod m)`, `A` the matching perturbations, `Z = (Y + A) / sqrt(N)`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub y: Array2<f64>,
    pub a: Array2<f64>,
    pub z: Array2<f64>,
}

/// Assemble the `mN x mN` linearization of the product.
///
/// The `m`-th power of `Z` is block diagonal and every diagonal block is a
/// cyclic rotation of the scaled product, so `Z^m` carries `m` copies of the
/// product's spectrum.
pub fn build_block_linearization(prod: &ProductSpec) -> Result<Linearization> {
    let m = prod.m();
    let n = prod.n;
    let mut y = Array2::zeros((m * n, m * n));
    let mut a = Array2::zeros((m * n, m * n));
    for k in 0..m {
        let col = (k + 1) % m;
        let yk = build_elliptic(&prod.factor_ensemble(k))?;
        let ak = build_perturbation(&prod.factors[k].perturbation, n)?;
        y.slice_mut(s![k * n..(k + 1) * n, col * n..(col + 1) * n]).assign(&yk);
        a.slice_mut(s![k * n..(k + 1) * n, col * n..(col + 1) * n]).assign(&ak);
    }
    let z = (&y + &a) / (n as f64).sqrt();
    Ok(Linearization { y, a, z })
}

/// Multiply already-built factors in order and scale by `N^{-m/2}`.
pub fn product_of_factors(factors: &[Array2<f64>], n: usize) -> Result<Array2<f64>> {
    require(!factors.is_empty(), "empty factor list")?;
    for f in factors {
        require(
            f.nrows() == n && f.ncols() == n,
            format!("factor is {}x{}, expected {n}x{n}", f.nrows(), f.ncols()),
        )?;
    }
    let mut p = factors[0].clone();
    for f in &factors[1..] {
        p = p.dot(f);
    }
    Ok(p / (n as f64).powf(factors.len() as f64 / 2.0))
}

/// The scaled product `N^{-m/2} (Y_1 + A_1) ... (Y_m + A_m)`.
pub fn build_product(prod: &ProductSpec) -> Result<Array2<f64>> {
    let factors: Vec<Array2<f64>> =
        (0..prod.m()).map(|k| build_factor(prod, k)).collect::<Result<_>>()?;
    product_of_factors(&factors, prod.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{AtomFamily, DiagSpec};
    use approx::assert_abs_diff_eq;

    fn gaussian_spec(n: usize, rho: f64, seed: u64) -> EnsembleSpec {
        EnsembleSpec::new(n, AtomPairSpec::gaussian(rho).unwrap(), seed).unwrap()
    }

    #[test]
    fn builds_are_deterministic_and_seed_sensitive() {
        let a = build_elliptic(&gaussian_spec(16, 0.5, 7)).unwrap();
        let b = build_elliptic(&gaussian_spec(16, 0.5, 7)).unwrap();
        let c = build_elliptic(&gaussian_spec(16, 0.5, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn corner_of_larger_matrix_matches_smaller_build() {
        // Entries are keyed by site, not by N, so growing the matrix keeps
        // the existing entries.
        let small = build_elliptic(&gaussian_spec(6, 0.3, 42)).unwrap();
        let large = build_elliptic(&gaussian_spec(24, 0.3, 42)).unwrap();
        assert_eq!(small, large.slice(s![0..6, 0..6]).to_owned());
    }

    #[test]
    fn wigner_flag_builds_symmetric_matrices() {
        let spec = EnsembleSpec::new(32, AtomPairSpec::gaussian_wigner(), 3).unwrap();
        let y = build_elliptic(&spec).unwrap();
        assert_eq!(y, y.t().to_owned());

        let anti = EnsembleSpec::new(
            32,
            AtomPairSpec::new(AtomFamily::GaussianPair, -1.0, 1.0, true, DiagSpec::zero())
                .unwrap(),
            3,
        )
        .unwrap();
        let y = build_elliptic(&anti).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                if i != j {
                    assert_eq!(y[[i, j]], -y[[j, i]]);
                }
            }
        }
    }

    #[test]
    fn mirror_pairs_have_declared_correlation() {
        let n = 128;
        let y = build_elliptic(&gaussian_spec(n, 0.5, 11)).unwrap();
        let (mut cross, mut var, mut count) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            for j in (i + 1)..n {
                cross += y[[i, j]] * y[[j, i]];
                var += y[[i, j]] * y[[i, j]];
                count += 1.0;
            }
        }
        let band = 5.0 / count.sqrt();
        assert!((cross / count - 0.5).abs() < band, "pair correlation {}", cross / count);
        assert!((var / count - 1.0).abs() < 2.0 * band, "entry variance {}", var / count);
    }

    #[test]
    fn truncated_build_zeroes_diagonal_and_clips() {
        let atom = AtomPairSpec::new(
            AtomFamily::ParetoSymmetrized,
            0.5,
            1.0,
            false,
            DiagSpec::standard_gaussian(),
        )
        .unwrap();
        let spec = EnsembleSpec::truncated(128, atom, 5, 0.1).unwrap();
        let y = build_elliptic(&spec).unwrap();
        let cap = 4.0 * 128f64.powf(0.1);
        for i in 0..128 {
            assert_eq!(y[[i, i]], 0.0);
            for j in 0..128 {
                assert!(y[[i, j]].abs() <= cap);
            }
        }
    }

    #[test]
    fn linearization_has_cyclic_block_structure() {
        let atom = AtomPairSpec::gaussian(0.2).unwrap();
        let prod = ProductSpec::uniform(3, 8, atom, 99).unwrap();
        let lin = build_block_linearization(&prod).unwrap();
        assert_eq!(lin.y.dim(), (24, 24));
        for k in 0..3 {
            let fk = build_elliptic(&prod.factor_ensemble(k)).unwrap();
            let col = (k + 1) % 3;
            let block = lin.y.slice(s![k * 8..(k + 1) * 8, col * 8..(col + 1) * 8]);
            assert_eq!(block.to_owned(), fk);
        }
        // Everything off the cyclic pattern is zero.
        let mut nonzero_blocks = 0;
        for bi in 0..3 {
            for bj in 0..3 {
                let blk = lin.y.slice(s![bi * 8..(bi + 1) * 8, bj * 8..(bj + 1) * 8]);
                if blk.iter().any(|&x| x != 0.0) {
                    nonzero_blocks += 1;
                    assert_eq!(bj, (bi + 1) % 3);
                }
            }
        }
        assert_eq!(nonzero_blocks, 3);
        // Z is the scaled sum.
        let expect = (&lin.y + &lin.a) / 8f64.sqrt();
        assert_eq!(lin.z, expect);
    }

    #[test]
    fn products_need_two_factors() {
        let atom = AtomPairSpec::gaussian(0.2).unwrap();
        assert!(ProductSpec::uniform(1, 8, atom, 1).is_err());
        assert!(ProductSpec::uniform(2, 8, atom, 1).is_ok());
    }

    #[test]
    fn product_matches_hand_multiplication() {
        // Injected 3x3 factors; expected values from the definition
        // N^{-m/2} B1 B2 computed by hand loops.
        let b1 = ndarray::arr2(&[[1.0, 2.0, 0.0], [0.0, 1.0, -1.0], [3.0, 0.0, 1.0]]);
        let b2 = ndarray::arr2(&[[0.0, 1.0, 1.0], [2.0, 0.0, 0.0], [1.0, 1.0, 2.0]]);
        let p = product_of_factors(&[b1.clone(), b2.clone()], 3).unwrap();
        let mut expect = Array2::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += b1[[i, k]] * b2[[k, j]];
                }
                expect[[i, j]] = acc / 3.0;
            }
        }
        assert_abs_diff_eq!(p.as_slice().unwrap(), expect.as_slice().unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn build_product_composes_factors() {
        let atom = AtomPairSpec::gaussian(0.4).unwrap();
        let prod = ProductSpec::uniform(2, 8, atom, 12).unwrap();
        let f0 = build_factor(&prod, 0).unwrap();
        let f1 = build_factor(&prod, 1).unwrap();
        let direct = product_of_factors(&[f0, f1], 8).unwrap();
        assert_eq!(build_product(&prod).unwrap(), direct);
    }

    #[test]
    fn factor_seeds_are_distinct_and_stable() {
        let atom = AtomPairSpec::gaussian(0.0).unwrap();
        let prod = ProductSpec::uniform(4, 8, atom, 7).unwrap();
        let seeds: Vec<u64> = (0..4).map(|k| prod.factor_seed(k)).collect();
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 4);
        assert_eq!(prod.clone().with_master_seed(7).factor_seed(2), seeds[2]);
        assert_ne!(prod.with_master_seed(8).factor_seed(2), seeds[2]);
    }

    #[test]
    fn linearization_hs_norm_tracks_factor_count() {
        // (1/N^2) ||Y||_HS^2 concentrates near m for every family.
        for (family, tol) in [
            (AtomFamily::GaussianPair, 0.2),
            (AtomFamily::RademacherMix, 0.2),
            (AtomFamily::ParetoSymmetrized, 1.0),
        ] {
            let atom =
                AtomPairSpec::new(family, 0.5, 1.0, false, DiagSpec::standard_gaussian()).unwrap();
            let m = 3;
            let prod = ProductSpec::uniform(m, 128, atom, 31).unwrap();
            let lin = build_block_linearization(&prod).unwrap();
            let hs: f64 = lin.y.iter().map(|x| x * x).sum();
            let normalized = hs / (128.0 * 128.0);
            assert!(
                normalized >= 0.5 * m as f64 - tol && normalized <= 2.0 * m as f64,
                "{family:?}: normalized HS^2 = {normalized}"
            );
        }
    }

    #[test]
    fn zero_and_constant_perturbations() {
        let z = build_perturbation(&PerturbationSpec::zero(), 8).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
        let c = build_perturbation(&PerturbationSpec::constant_mean(0.5), 16).unwrap();
        assert!(c.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn full_rank_perturbation_is_rejected() {
        let eye = Array2::from_diag_elem(16, 16.0);
        let err = build_perturbation(&PerturbationSpec::explicit(eye), 16);
        assert!(matches!(err, Err(Error::InvalidSpec(_))), "{err:?}");
    }

    #[test]
    fn oversized_hs_norm_is_rejected() {
        // Constant mean 2.0 has ||A||_HS^2 = 4 N^2 > N^2.
        let err = build_perturbation(&PerturbationSpec::constant_mean(2.0), 16);
        assert!(matches!(err, Err(Error::InvalidSpec(_))), "{err:?}");
        // A single huge spike: rank one (fine) but HS budget blown.
        let mut a = Array2::zeros((8, 8));
        a[[0, 0]] = 100.0;
        let err = build_perturbation(&PerturbationSpec::explicit(a), 8);
        assert!(matches!(err, Err(Error::InvalidSpec(_))), "{err:?}");
    }

    #[test]
    fn rank_one_constant_mean_passes_budget() {
        let p = PerturbationSpec::constant_mean(0.5);
        assert!(build_perturbation(&p, 256).is_ok());
    }
}
