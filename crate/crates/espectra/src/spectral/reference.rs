//! Reference dense eigensolver: complex Householder reduction to upper
//! Hessenberg form, then single-shift QR with deflation.
//!
//! Shares no code with the platform backend, so the two can vouch for each
//! other in tests. Meant for n <= 64; the platform path stays the workhorse.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Reduce a real matrix to upper Hessenberg form by unitary similarity.
pub fn hessenberg(a: &Array2<f64>) -> Array2<Complex64> {
    let n = a.nrows();
    let mut h = a.mapv(|x| Complex64::new(x, 0.0));
    for k in 0..n.saturating_sub(2) {
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| h[[i, k]]).collect();
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let phase = if v[0].norm() == 0.0 { Complex64::new(1.0, 0.0) } else { v[0] / v[0].norm() };
        v[0] += phase * norm;
        let vv: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        if vv == 0.0 {
            continue;
        }
        let beta = 2.0 / vv;
        // Left: H <- (I - beta v v^H) H on rows k+1.. .
        for col in k..n {
            let mut dot = ZERO;
            for (off, vi) in v.iter().enumerate() {
                dot += vi.conj() * h[[k + 1 + off, col]];
            }
            let scale = beta * dot;
            for (off, vi) in v.iter().enumerate() {
                h[[k + 1 + off, col]] -= scale * vi;
            }
        }
        // Right: H <- H (I - beta v v^H) on columns k+1.. .
        for row in 0..n {
            let mut dot = ZERO;
            for (off, vi) in v.iter().enumerate() {
                dot += h[[row, k + 1 + off]] * vi;
            }
            let scale = beta * dot;
            for (off, vi) in v.iter().enumerate() {
                h[[row, k + 1 + off]] -= scale * vi.conj();
            }
        }
        for i in k + 2..n {
            h[[i, k]] = ZERO;
        }
    }
    h
}

/// Rotation (c real, s) with [[c, s], [-conj(s), c]] * [a, b]^T = [r, 0]^T.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    if b.norm() == 0.0 {
        return (1.0, ZERO);
    }
    if a.norm() == 0.0 {
        return (0.0, b.conj() / b.norm());
    }
    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let c = a.norm() / norm;
    let s = (a / a.norm()) * b.conj() / norm;
    (c, s)
}

/// Eigenvalues of [[a, b], [c, d]].
fn eig2(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> (Complex64, Complex64) {
    let half_tr = (a + d) * 0.5;
    let disc = ((a - d) * (a - d) * 0.25 + b * c).sqrt();
    (half_tr + disc, half_tr - disc)
}

fn negligible(h: &Array2<Complex64>, i: usize, j: usize) -> bool {
    let scale = h[[j, j]].norm() + h[[i, i]].norm();
    h[[i, j]].norm() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE)
}

/// One shifted QR sweep on the active block [lo, hi].
fn qr_step(h: &mut Array2<Complex64>, lo: usize, hi: usize, mu: Complex64) {
    for i in lo..=hi {
        h[[i, i]] -= mu;
    }
    let mut rotations = Vec::with_capacity(hi - lo);
    for i in lo..hi {
        let (c, s) = givens(h[[i, i]], h[[i + 1, i]]);
        rotations.push((c, s));
        for col in i..=hi {
            let x = h[[i, col]];
            let y = h[[i + 1, col]];
            h[[i, col]] = c * x + s * y;
            h[[i + 1, col]] = -s.conj() * x + c * y;
        }
    }
    for (idx, (c, s)) in rotations.iter().enumerate() {
        let i = lo + idx;
        for row in lo..=i + 1 {
            let x = h[[row, i]];
            let y = h[[row, i + 1]];
            h[[row, i]] = c * x + s.conj() * y;
            h[[row, i + 1]] = -s * x + c * y;
        }
    }
    for i in lo..=hi {
        h[[i, i]] += mu;
    }
}

/// All eigenvalues of a real square matrix, with multiplicity, in no
/// particular order. Errors if the QR iteration stalls.
pub fn eigenvalues_qr(a: &Array2<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = hessenberg(a);
    let mut eigs = Vec::with_capacity(n);
    let mut hi = n - 1;
    let budget = 80 * n;
    let mut steps = 0usize;
    'outer: loop {
        // Peel converged 1x1 / irreducible 2x2 tails.
        loop {
            if hi == 0 {
                eigs.push(h[[0, 0]]);
                break 'outer;
            }
            if negligible(&h, hi, hi - 1) {
                eigs.push(h[[hi, hi]]);
                hi -= 1;
                continue;
            }
            if hi == 1 || negligible(&h, hi - 1, hi - 2) {
                let (l1, l2) = eig2(h[[hi - 1, hi - 1]], h[[hi - 1, hi]], h[[hi, hi - 1]], h[[hi, hi]]);
                eigs.push(l1);
                eigs.push(l2);
                if hi == 1 {
                    break 'outer;
                }
                hi -= 2;
                continue;
            }
            break;
        }
        let mut lo = hi - 1;
        while lo > 0 && !negligible(&h, lo, lo - 1) {
            lo -= 1;
        }
        steps += 1;
        if steps > budget {
            return Err(Error::Numerical(format!(
                "QR iteration did not converge within {budget} sweeps (block {lo}..{hi})"
            )));
        }
        let mu = if steps % 16 == 0 {
            // Exceptional shift to break rare cycling.
            h[[hi, hi]] + Complex64::new(1.5 * h[[hi, hi - 1]].norm(), 0.5 * h[[hi, hi - 1]].norm())
        } else {
            let (l1, l2) =
                eig2(h[[hi - 1, hi - 1]], h[[hi - 1, hi]], h[[hi, hi - 1]], h[[hi, hi]]);
            if (l1 - h[[hi, hi]]).norm() <= (l2 - h[[hi, hi]]).norm() {
                l1
            } else {
                l2
            }
        };
        qr_step(&mut h, lo, hi, mu);
    }
    debug_assert_eq!(eigs.len(), n);
    Ok(eigs)
}
