//! Dense spectral computations: eigenvalues, singular values, the
//! symmetrized singular measure of a shifted matrix, Hermitization, and the
//! blockwise partial-trace resolvent transform.

pub mod reference;

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{EigVals, Eigh, Factorize, JobSvd, Solve, SVDDC, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require, Result};

/// What the values of a [`SpectralSample`] are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    /// All n eigenvalues of an n x n matrix.
    Eigenvalues,
    /// The n singular values, nonincreasing.
    SingularValues,
    /// The 2n-point negation-symmetric singular multiset (mass 1 measure).
    SymmetrizedSingular,
}

/// Where a sample came from, when it was built from a spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub fingerprint: u64,
    pub seed: u64,
}

/// A spectrum as a multiset of points.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    pub kind: SampleKind,
    pub values: Vec<Complex64>,
    pub n: usize,
    pub provenance: Option<Provenance>,
}

impl SpectralSample {
    pub fn with_provenance(mut self, fingerprint: u64, seed: u64) -> Self {
        self.provenance = Some(Provenance { fingerprint, seed });
        self
    }

    /// Real parts; the natural reading for the two singular kinds.
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }
}

fn check_square_finite(m: &Array2<f64>) -> Result<usize> {
    require(
        m.nrows() == m.ncols(),
        format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols()),
    )?;
    require(m.iter().all(|x| x.is_finite()), "matrix has non-finite entries")?;
    Ok(m.nrows())
}

/// All eigenvalues, with multiplicity.
pub fn eigenvalues(m: &Array2<f64>) -> Result<SpectralSample> {
    let n = check_square_finite(m)?;
    let vals = m.eigvals()?;
    Ok(SpectralSample {
        kind: SampleKind::Eigenvalues,
        values: vals.to_vec(),
        n,
        provenance: None,
    })
}

/// Singular values, nonincreasing.
pub fn singular_values(m: &Array2<f64>) -> Result<SpectralSample> {
    let n = check_square_finite(m)?;
    let (_, sv, _) = m.svddc(JobSvd::None)?;
    Ok(SpectralSample {
        kind: SampleKind::SingularValues,
        values: sv.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        n,
        provenance: None,
    })
}

/// Singular values of `M - zI`, nonincreasing.
pub fn shifted_singular_values(m: &Array2<f64>, z: Complex64) -> Result<Vec<f64>> {
    let n = check_square_finite(m)?;
    require(z.is_finite(), "shift must be finite")?;
    let sv = if z.im == 0.0 {
        let mut w = m.clone();
        for i in 0..n {
            w[[i, i]] -= z.re;
        }
        w.svddc(JobSvd::None)?.1
    } else {
        let mut w = m.mapv(|x| Complex64::new(x, 0.0));
        for i in 0..n {
            w[[i, i]] -= z;
        }
        w.svddc(JobSvd::None)?.1
    };
    Ok(sv.to_vec())
}

/// The symmetrized singular multiset of `M - zI`: every sigma paired with
/// -sigma, sorted ascending. Total mass 1 when read as an empirical measure.
pub fn nu_measure(m: &Array2<f64>, z: Complex64) -> Result<SpectralSample> {
    let n = m.nrows();
    let sv = shifted_singular_values(m, z)?;
    let mut values: Vec<Complex64> = Vec::with_capacity(2 * n);
    for &s in sv.iter() {
        values.push(Complex64::new(-s, 0.0));
    }
    for &s in sv.iter().rev() {
        values.push(Complex64::new(s, 0.0));
    }
    values.sort_by(|a, b| a.re.total_cmp(&b.re));
    Ok(SpectralSample { kind: SampleKind::SymmetrizedSingular, values, n, provenance: None })
}

/// The 2n x 2n Hermitization [[0, X], [X^T, 0]] of a real square matrix;
/// its spectrum is the symmetrized singular multiset of X.
pub fn hermitize(x: &Array2<f64>) -> Result<Array2<f64>> {
    let n = check_square_finite(x)?;
    let mut h = Array2::zeros((2 * n, 2 * n));
    h.slice_mut(s![0..n, n..2 * n]).assign(x);
    h.slice_mut(s![n..2 * n, 0..n]).assign(&x.t());
    Ok(h)
}

/// Spectral parameter of the block resolvent: eta in the upper half-plane,
/// shift z, and the block count m of the linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QPoint {
    pub eta: Complex64,
    pub z: Complex64,
    pub m: usize,
}

impl QPoint {
    pub fn new(eta: Complex64, z: Complex64, m: usize) -> Result<Self> {
        require(
            eta.is_finite() && eta.im > 0.0,
            format!("eta must lie in the open upper half-plane, got {eta}"),
        )?;
        require(z.is_finite(), "z must be finite")?;
        require(m >= 1, "block count m must be >= 1")?;
        Ok(QPoint { eta, z, m })
    }

    /// The 2m x 2m parameter matrix: eta on the diagonal, z and conj(z) on
    /// the two off-diagonal m-blocks.
    pub fn matrix(&self) -> Array2<Complex64> {
        let m = self.m;
        let mut q = Array2::zeros((2 * m, 2 * m));
        for a in 0..2 * m {
            q[[a, a]] = self.eta;
        }
        for b in 0..m {
            q[[b, b + m]] = self.z;
            q[[b + m, b]] = self.z.conj();
        }
        q
    }
}

/// A 2m x 2m matrix-valued Stieltjes transform; anything produced from a
/// resolvent has positive-semidefinite imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStieltjes {
    pub entries: Array2<Complex64>,
}

impl MatrixStieltjes {
    /// Smallest eigenvalue of the Hermitian imaginary part (M - M^H) / 2i.
    /// Nonnegative up to roundoff for valid transforms.
    pub fn imag_part_floor(&self) -> Result<f64> {
        let g = &self.entries;
        let d = g.nrows();
        let im = Array2::from_shape_fn((d, d), |(a, b)| {
            (g[[a, b]] - g[[b, a]].conj()) / Complex64::new(0.0, 2.0)
        });
        let (w, _) = im.eigh(UPLO::Upper)?;
        Ok(w[0])
    }

    pub fn max_abs_diff(&self, other: &MatrixStieltjes) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Blockwise normalized partial traces of the resolvent `(H - q (x) I_N)^-1`
/// of a 2mN x 2mN real symmetric matrix, plus the normalized full trace.
///
/// When `h` is an exact Hermitization (zero diagonal mN-blocks, lower-left
/// the transpose of upper-right), one SVD of the shifted off-diagonal block
/// diagonalizes the whole resolvent and the traces collapse to chunk inner
/// products of singular vectors. Otherwise the resolvent is applied through
/// one LU factorization and a solve per unit column.
pub fn gamma_n(h: &Array2<f64>, q: &QPoint) -> Result<(MatrixStieltjes, Complex64)> {
    let d = check_square_finite(h)?;
    let blocks = 2 * q.m;
    require(
        d > 0 && d % blocks == 0,
        format!("matrix dimension {d} is not a positive multiple of 2m = {blocks}"),
    )?;
    let n = d / blocks;
    let gamma = match hermitization_offdiag(h, q.m, n) {
        Some(x) => gamma_svd_path(&x, q, n)?,
        None => gamma_solve_path(h, q, n)?,
    };
    let trace = gamma.diag().sum() / blocks as f64;
    Ok((MatrixStieltjes { entries: gamma }, trace))
}

/// Upper-right mN x mN block if `h` is an exact Hermitization, else None.
fn hermitization_offdiag(h: &Array2<f64>, m: usize, n: usize) -> Option<Array2<f64>> {
    let half = m * n;
    let tl = h.slice(s![0..half, 0..half]);
    let br = h.slice(s![half.., half..]);
    if tl.iter().any(|&x| x != 0.0) || br.iter().any(|&x| x != 0.0) {
        return None;
    }
    let tr = h.slice(s![0..half, half..]);
    let bl = h.slice(s![half.., 0..half]);
    if bl != tr.t() {
        return None;
    }
    Some(tr.to_owned())
}

/// With W = X - zI = U S V^H, the resolvent blocks are U f(S) U^H,
/// U g(S) V^H, V g(S) U^H, V f(S) V^H for f = eta/(s^2 - eta^2),
/// g = s/(s^2 - eta^2).
fn gamma_svd_path(x: &Array2<f64>, q: &QPoint, n: usize) -> Result<Array2<Complex64>> {
    let m = q.m;
    let half = m * n;
    let (ut, vh, sv): (Array2<Complex64>, Array2<Complex64>, Array1<f64>) = if q.z.im == 0.0 {
        let mut w = x.clone();
        for i in 0..half {
            w[[i, i]] -= q.z.re;
        }
        let (u, sv, vt) = w.svddc(JobSvd::All)?;
        let (u, vt) = (u.expect("left vectors requested"), vt.expect("right vectors requested"));
        (
            u.t().as_standard_layout().mapv(|v| Complex64::new(v, 0.0)),
            vt.mapv(|v| Complex64::new(v, 0.0)),
            sv,
        )
    } else {
        let mut w = x.mapv(|v| Complex64::new(v, 0.0));
        for i in 0..half {
            w[[i, i]] -= q.z;
        }
        let (u, sv, vh) = w.svddc(JobSvd::All)?;
        let (u, vh) = (u.expect("left vectors requested"), vh.expect("right vectors requested"));
        (u.t().as_standard_layout().into_owned(), vh, sv)
    };
    // Rows of `ut` are left singular vectors, rows of `vh` are conjugated
    // right singular vectors; both contiguous for the chunk sums below.
    let eta2 = q.eta * q.eta;
    let mut gamma: Array2<Complex64> = Array2::zeros((2 * m, 2 * m));
    let zero = Complex64::new(0.0, 0.0);
    let mut su = vec![zero; m * m];
    let mut sv_block = vec![zero; m * m];
    let mut suv = vec![zero; m * m];
    for k in 0..half {
        let urow = ut.row(k);
        let urow = urow.as_slice().expect("row-major");
        let vrow = vh.row(k);
        let vrow = vrow.as_slice().expect("row-major");
        let denom = Complex64::new(sv[k] * sv[k], 0.0) - eta2;
        let f = q.eta / denom;
        let g = Complex64::new(sv[k], 0.0) / denom;
        for a in 0..m {
            for b in 0..m {
                let (ua, ub) = (&urow[a * n..(a + 1) * n], &urow[b * n..(b + 1) * n]);
                let (va, vb) = (&vrow[a * n..(a + 1) * n], &vrow[b * n..(b + 1) * n]);
                let mut du = zero;
                let mut dv = zero;
                let mut duv = zero;
                for i in 0..n {
                    du += ua[i] * ub[i].conj();
                    dv += va[i].conj() * vb[i];
                    duv += ua[i] * vb[i];
                }
                su[a * m + b] = du;
                sv_block[a * m + b] = dv;
                suv[a * m + b] = duv;
            }
        }
        for a in 0..m {
            for b in 0..m {
                gamma[[a, b]] += f * su[a * m + b];
                gamma[[a, m + b]] += g * suv[a * m + b];
                gamma[[m + a, b]] += g * suv[b * m + a].conj();
                gamma[[m + a, m + b]] += f * sv_block[a * m + b];
            }
        }
    }
    Ok(gamma.mapv(|v| v / n as f64))
}

/// General path: factorize (H - q (x) I_N) once, back-solve unit columns,
/// accumulate the per-block running traces.
fn gamma_solve_path(h: &Array2<f64>, q: &QPoint, n: usize) -> Result<Array2<Complex64>> {
    let blocks = 2 * q.m;
    let d = blocks * n;
    let qm = q.matrix();
    let mut b = h.mapv(|x| Complex64::new(x, 0.0));
    for a in 0..blocks {
        for c in 0..blocks {
            let shift = qm[[a, c]];
            if shift != Complex64::new(0.0, 0.0) {
                for i in 0..n {
                    b[[a * n + i, c * n + i]] -= shift;
                }
            }
        }
    }
    let lu = b.factorize()?;
    let mut gamma: Array2<Complex64> = Array2::zeros((blocks, blocks));
    let mut rhs: Array1<Complex64> = Array1::zeros(d);
    for j in 0..d {
        rhs.fill(Complex64::new(0.0, 0.0));
        rhs[j] = Complex64::new(1.0, 0.0);
        let col = lu.solve(&rhs)?;
        let (bb, i) = (j / n, j % n);
        for a in 0..blocks {
            gamma[[a, bb]] += col[a * n + i];
        }
    }
    Ok(gamma.mapv(|v| v / n as f64))
}

/// Sort two spectra lexicographically by (re, im) and compare entrywise with
/// tolerance `rel_tol * max(1, spectral radius)`.
///
/// Conjugate pairs whose real parts differ only in the last bits can cross
/// under the lexicographic tie-break; when the sorted pass fails, a greedy
/// nearest-unmatched pass decides instead.
pub fn spectra_match(a: &[Complex64], b: &[Complex64], rel_tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let key = |x: &Complex64, y: &Complex64| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
    let mut aa = a.to_vec();
    let mut bb = b.to_vec();
    aa.sort_by(key);
    bb.sort_by(key);
    let radius = aa.iter().chain(bb.iter()).map(|v| v.norm()).fold(0.0, f64::max);
    let tol = rel_tol * radius.max(1.0);
    if aa.iter().zip(bb.iter()).all(|(x, y)| (x - y).norm() <= tol) {
        return true;
    }
    let mut used = vec![false; bb.len()];
    'outer: for x in &aa {
        for (j, y) in bb.iter().enumerate() {
            if !used[j] && (x - y).norm() <= tol {
                used[j] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}
