//! The deterministic side of the block resolvent analysis: the partner
//! index map of the cyclic Hermitization, the self-energy operator, the
//! scalar transform a(z, eta) and its closed-form 2m x 2m solution, a damped
//! fixed-point solver, Stieltjes inversion of a(z, .) into a density, and
//! the limit-law densities the empirical spectra are tested against.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{require, Error, Result};
use crate::numeric::{cubic_eval, cubic_roots};
use crate::spectral::{MatrixStieltjes, QPoint};

/// Column index of the unique nonzero block in block-row `a` of the
/// Hermitized cyclic linearization (0-based, `a < 2m`). An involution that
/// never lands on `a` or `a +- m`, which needs `m >= 2`.
pub fn partner_block(a: usize, m: usize) -> Result<usize> {
    require(m >= 2, format!("partner map needs m >= 2, got m = {m}"))?;
    require(a < 2 * m, format!("block index {a} out of range for 2m = {}", 2 * m))?;
    Ok(if a < m { m + (a + 1) % m } else { (a - m + m - 1) % m })
}

/// The self-energy data: block count and the mirror correlation of each
/// factor. `rho_of` extends the per-factor list to all 2m block rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSpec {
    pub m: usize,
    pub rhos: Vec<f64>,
}

impl SigmaSpec {
    pub fn new(m: usize, rhos: Vec<f64>) -> Result<Self> {
        require(m >= 2, format!("self-energy needs m >= 2, got m = {m}"))?;
        require(
            rhos.len() == m,
            format!("expected {m} correlations, got {}", rhos.len()),
        )?;
        require(rhos.iter().all(|r| r.is_finite() && r.abs() <= 1.0), "correlations must lie in [-1, 1]")?;
        Ok(SigmaSpec { m, rhos })
    }

    pub fn uniform(m: usize, rho: f64) -> Result<Self> {
        SigmaSpec::new(m, vec![rho; m])
    }

    /// Mirror correlation attached to block-row `a`: factor `a` in the top
    /// half, the partner's factor in the bottom half.
    pub fn rho_of(&self, a: usize) -> Result<f64> {
        require(a < 2 * self.m, format!("block index {a} out of range"))?;
        Ok(if a < self.m { self.rhos[a] } else { self.rhos[partner_block(a, self.m)?] })
    }
}

/// The linear map Sigma(A)_ab = A_{a'a'} delta_ab + rho_a A_{a'a} delta_{a'b}.
pub fn sigma_op(a: &Array2<Complex64>, spec: &SigmaSpec) -> Result<Array2<Complex64>> {
    let d = 2 * spec.m;
    require(
        a.nrows() == d && a.ncols() == d,
        format!("expected a {d}x{d} matrix, got {}x{}", a.nrows(), a.ncols()),
    )?;
    let mut out = Array2::zeros((d, d));
    for row in 0..d {
        let p = partner_block(row, spec.m)?;
        out[[row, row]] = a[[p, p]];
        out[[row, p]] += Complex64::new(spec.rho_of(row)?, 0.0) * a[[p, row]];
    }
    Ok(out)
}

/// Entry covariance kernel sigma(a,c;d,b) = N E[H_12^{ac} H_21^{db}] of the
/// Hermitized linearization; `sigma_op` is its contraction against A_{cd}.
pub fn sigma_kernel(a: usize, c: usize, d: usize, b: usize, spec: &SigmaSpec) -> Result<f64> {
    let p = partner_block(a, spec.m)?;
    let mut value = 0.0;
    if c == p && d == p && b == a {
        value += 1.0;
    }
    if c == p && d == a && b == p {
        value += spec.rho_of(a)?;
    }
    Ok(value)
}

/// Monic cubic satisfied by the scalar transform:
/// a^3 + 2 eta a^2 + (eta^2 + 1 - |z|^2) a + eta = 0.
fn scalar_cubic(z: Complex64, eta: Complex64) -> (Complex64, Complex64, Complex64) {
    (
        2.0 * eta,
        eta * eta + 1.0 - z.norm_sqr(),
        eta,
    )
}

/// The Stieltjes-branch root a(z, eta), Im(a) > 0, picked by continuity
/// along a geometric eta-path from 10i(1+|z|), where the branch sits
/// isolated near -1/eta.
pub fn scalar_a(z: Complex64, eta: Complex64) -> Result<Complex64> {
    require(
        eta.is_finite() && eta.im > 0.0,
        format!("eta must lie in the open upper half-plane, got {eta}"),
    )?;
    require(z.is_finite(), "z must be finite")?;
    let eta0 = Complex64::new(0.0, 10.0 * (1.0 + z.norm()));
    // Interpolate log-magnitude and argument; both endpoints have arg in
    // (0, pi), so every intermediate eta stays in the upper half-plane.
    let (r0, th0) = (eta0.norm().ln(), eta0.arg());
    let (r1, th1) = (eta.norm().ln(), eta.arg());
    let steps = 50;
    let mut current = -Complex64::new(1.0, 0.0) / eta0;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let eta_k = Complex64::from_polar((r0 + t * (r1 - r0)).exp(), th0 + t * (th1 - th0));
        let (c2, c1, c0) = scalar_cubic(z, eta_k);
        let roots = cubic_roots(c2, c1, c0);
        let next = roots
            .iter()
            .filter(|r| r.im > 0.0)
            .min_by(|x, y| (*x - current).norm().total_cmp(&(*y - current).norm()))
            .copied()
            .ok_or_else(|| {
                Error::Numerical(format!(
                    "branch tracking lost the upper half-plane at eta = {eta_k} (z = {z})"
                ))
            })?;
        current = next;
    }
    // Final Newton polish at the requested eta.
    let (c2, c1, c0) = scalar_cubic(z, eta);
    for _ in 0..3 {
        let f = cubic_eval(c2, c1, c0, current);
        let df = 3.0 * current * current + 2.0 * c2 * current + c1;
        if df.norm() == 0.0 {
            break;
        }
        current -= f / df;
    }
    if current.im <= 0.0 {
        return Err(Error::Numerical(format!(
            "scalar transform left the upper half-plane at z = {z}, eta = {eta}"
        )));
    }
    Ok(current)
}

/// Closed-form block transform: a(q) on the diagonal and
/// z w / conj(z) w on the two off-diagonal m-blocks, w = 1/((a+eta)^2 - |z|^2).
pub fn gamma_closed(q: &QPoint) -> Result<MatrixStieltjes> {
    require(q.m >= 2, format!("block transform needs m >= 2, got m = {}", q.m))?;
    let a = scalar_a(q.z, q.eta)?;
    let s = a + q.eta;
    let w = Complex64::new(1.0, 0.0) / (s * s - q.z.norm_sqr());
    let d = 2 * q.m;
    let mut g = Array2::zeros((d, d));
    for i in 0..d {
        g[[i, i]] = a;
    }
    for b in 0..q.m {
        g[[b, b + q.m]] = q.z * w;
        g[[b + q.m, b]] = q.z.conj() * w;
    }
    Ok(MatrixStieltjes { entries: g })
}

/// Knobs for the damped fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOpts {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FixedPointOpts {
    fn default() -> Self {
        FixedPointOpts { damping: 0.5, tol: 1e-12, max_iters: 10_000 }
    }
}

/// Converged iterate plus diagnostics.
#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub gamma: MatrixStieltjes,
    pub residual: f64,
    pub iterations: usize,
    pub damping_final: f64,
}

fn invert_2m(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    use ndarray_linalg::Inverse;
    Ok(a.inv()?)
}

fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Damped iteration for Gamma = -(q + Sigma(Gamma))^-1 from Gamma_0 = -q^-1.
///
/// An iterate whose imaginary part dips below -tol is rejected and the
/// damping halved; the residual reported is of the undamped equation.
pub fn solve_fixed_point(
    q: &QPoint,
    spec: &SigmaSpec,
    opts: &FixedPointOpts,
) -> Result<FixedPointSolution> {
    require(q.m == spec.m, format!("q has m = {}, self-energy has m = {}", q.m, spec.m))?;
    require(
        opts.damping > 0.0 && opts.damping <= 1.0 && opts.tol > 0.0 && opts.max_iters >= 1,
        "fixed-point options out of range",
    )?;
    let qm = q.matrix();
    let mut gamma = invert_2m(&qm)?.mapv(|v| -v);
    let mut omega = opts.damping;
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iters {
        let image = invert_2m(&(&qm + &sigma_op(&gamma, spec)?))?.mapv(|v| -v);
        residual = max_abs(&(&gamma - &image));
        if residual < opts.tol {
            let out = MatrixStieltjes { entries: gamma };
            return Ok(FixedPointSolution {
                gamma: out,
                residual,
                iterations: iter,
                damping_final: omega,
            });
        }
        let candidate = &gamma * (1.0 - omega) + &image * omega;
        let stieltjes = MatrixStieltjes { entries: candidate.clone() };
        if stieltjes.imag_part_floor()? < -opts.tol {
            omega *= 0.5;
            if omega < 1e-6 {
                return Err(Error::Numerical(format!(
                    "fixed-point damping collapsed at iteration {iter} (residual {residual:.3e})"
                )));
            }
            continue;
        }
        gamma = candidate;
    }
    Err(Error::Numerical(format!(
        "fixed-point iteration hit the cap {} with residual {residual:.3e}",
        opts.max_iters
    )))
}

/// Density curve of the symmetrized singular limit at shift `z`, from
/// Stieltjes inversion of the scalar transform along x + i eps.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub xs: Vec<f64>,
    pub rho: Vec<f64>,
    pub z: Complex64,
    pub eps: f64,
}

impl DensityCurve {
    /// Trapezoid-rule mass of the curve.
    pub fn mass(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.rho.windows(2))
            .map(|(x, r)| 0.5 * (r[0] + r[1]) * (x[1] - x[0]))
            .sum()
    }

    pub fn max_value(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }
}

/// Support radius heuristic: semicircle width plus shift allowance.
pub fn support_radius(z: Complex64) -> f64 {
    2.0 + 2.0 * z.norm()
}

/// Symmetric grid of `points` abscissae covering [-beta, beta].
pub fn density_grid(z: Complex64, points: usize) -> Vec<f64> {
    let beta = support_radius(z);
    let n = points.max(2);
    (0..n).map(|i| -beta + 2.0 * beta * i as f64 / (n - 1) as f64).collect()
}

/// rho_z(x) = Im a(z, x + i eps) / pi per grid point, clamped at 0.
pub fn invert_stieltjes(z: Complex64, grid: &[f64], eps: f64) -> Result<DensityCurve> {
    require(eps > 0.0 && eps.is_finite(), format!("eps must be positive, got {eps}"))?;
    require(!grid.is_empty(), "empty density grid")?;
    let mut rho = Vec::with_capacity(grid.len());
    for &x in grid {
        let a = scalar_a(z, Complex64::new(x, eps))?;
        rho.push((a.im / std::f64::consts::PI).max(0.0));
    }
    Ok(DensityCurve { xs: grid.to_vec(), rho, z, eps })
}

/// Density of the m-th power of the circular law:
/// (1/(m pi)) |z|^(2/m - 2) on the closed unit disk, 0 outside.
pub fn power_circular_density(z: Complex64, m: usize) -> f64 {
    let r = z.norm();
    if m == 0 || r > 1.0 {
        return 0.0;
    }
    if m == 1 {
        return std::f64::consts::FRAC_1_PI;
    }
    (1.0 / (m as f64 * std::f64::consts::PI)) * r.powf(2.0 / m as f64 - 2.0)
}

/// Radial CDF of that law: r^(2/m), clamped to [0, 1]. m = 1 is the
/// circular law itself.
pub fn radial_cdf(r: f64, m: usize) -> f64 {
    if m == 0 || r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return 1.0;
    }
    r.powf(2.0 / m as f64)
}

/// Uniform density on the ellipse with semi-axes 1 + rho, 1 - rho.
pub fn elliptic_density(z: Complex64, rho: f64) -> Result<f64> {
    require(
        rho.abs() < 1.0,
        format!("|rho| = 1 degenerates the ellipse to a segment (rho = {rho})"),
    )?;
    Ok(if elliptic_contains(z, rho, 1.0) { 1.0 / (std::f64::consts::PI * (1.0 - rho * rho)) } else { 0.0 })
}

/// Membership in the `slack`-dilated ellipse.
pub fn elliptic_contains(z: Complex64, rho: f64, slack: f64) -> bool {
    let a = (1.0 + rho) * slack;
    let b = (1.0 - rho) * slack;
    if a == 0.0 || b == 0.0 {
        return z.re == 0.0 && z.im == 0.0;
    }
    let u = z.re / a;
    let v = z.im / b;
    u * u + v * v <= 1.0
}

/// Second moments of the uniform ellipse law: (E[Re^2], E[Im^2]).
pub fn elliptic_second_moments(rho: f64) -> (f64, f64) {
    let a = 1.0 + rho;
    let b = 1.0 - rho;
    (a * a / 4.0, b * b / 4.0)
}

/// Slope of the log-potential of the circular law in the real direction of
/// the shift: 2s/(s^2+t^2) outside the closed unit disk, 2s inside.
pub fn g_exact(s: f64, t: f64) -> f64 {
    let r2 = s * s + t * t;
    if r2 > 1.0 {
        2.0 * s / r2
    } else {
        2.0 * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;
    use crate::rng::SplitMix64;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn q(eta: Complex64, z: Complex64, m: usize) -> QPoint {
        QPoint::new(eta, z, m).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_complex_matrix(d: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = SplitMix64::new(seed);
        Array2::from_shape_fn((d, d), |_| c(rng.open01() - 0.5, rng.open01() - 0.5))
    }

    #[test]
    fn partner_map_for_two_factors() {
        let expect = [3, 2, 1, 0];
        for (a, e) in expect.iter().enumerate() {
            assert_eq!(partner_block(a, 2).unwrap(), *e);
        }
    }

    #[test]
    fn partner_map_is_involution_avoiding_forbidden_indices() {
        for m in 2..=5 {
            for a in 0..2 * m {
                let p = partner_block(a, m).unwrap();
                assert_eq!(partner_block(p, m).unwrap(), a, "m={m} a={a}");
                assert_ne!(p, a);
                assert_ne!(p as i64, a as i64 + m as i64);
                assert_ne!(p as i64, a as i64 - m as i64);
            }
        }
        assert!(partner_block(0, 1).is_err());
        assert!(partner_block(4, 2).is_err());
    }

    #[test]
    fn sigma_fixes_identity_and_preserves_diagonality() {
        for m in 2..=4 {
            let spec = SigmaSpec::new(m, (0..m).map(|k| 0.1 * k as f64).collect()).unwrap();
            let eye = Array2::from_shape_fn((2 * m, 2 * m), |(i, j)| {
                c(if i == j { 1.0 } else { 0.0 }, 0.0)
            });
            assert_eq!(sigma_op(&eye, &spec).unwrap(), eye);

            let diag = Array2::from_shape_fn((2 * m, 2 * m), |(i, j)| {
                if i == j { c(i as f64 + 1.0, -0.5) } else { c(0.0, 0.0) }
            });
            let img = sigma_op(&diag, &spec).unwrap();
            for i in 0..2 * m {
                for j in 0..2 * m {
                    if i != j {
                        assert_eq!(img[[i, j]], c(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn sigma_kernel_contracts_to_sigma_op() {
        let spec = SigmaSpec::new(3, vec![0.5, -0.3, 0.8]).unwrap();
        let a = random_complex_matrix(6, 42);
        let img = sigma_op(&a, &spec).unwrap();
        for row in 0..6 {
            for col in 0..6 {
                let mut acc = c(0.0, 0.0);
                for s in 0..6 {
                    for t in 0..6 {
                        acc += sigma_kernel(row, s, t, col, &spec).unwrap() * a[[s, t]];
                    }
                }
                assert!((acc - img[[row, col]]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn scalar_transform_at_origin_is_golden_section_of_i() {
        // At z = 0, eta = i the defining cubic factors through
        // a^2 + i a + 1 = 0 with Stieltjes root i (sqrt(5) - 1) / 2.
        let a = scalar_a(c(0.0, 0.0), c(0.0, 1.0)).unwrap();
        let expect = c(0.0, (5f64.sqrt() - 1.0) / 2.0);
        assert!((a - expect).norm() < 1e-12, "{a} vs {expect}");
    }

    #[test]
    fn scalar_transform_at_zero_shift_is_semicircle_branch() {
        for im in [0.05, 0.3, 1.0, 4.0] {
            let eta = c(0.1, im);
            let a = scalar_a(c(0.0, 0.0), eta).unwrap();
            let expect = (-eta + (eta * eta - 4.0).sqrt()) / 2.0;
            let expect = if expect.im > 0.0 { expect } else { (-eta - (eta * eta - 4.0).sqrt()) / 2.0 };
            assert!((a - expect).norm() < 1e-10, "eta {eta}: {a} vs {expect}");
        }
    }

    #[test]
    fn scalar_transform_decays_like_minus_inverse_eta() {
        let eta = c(0.0, 100.0);
        for z in [c(0.0, 0.0), c(0.5, 0.3), c(-1.0, 0.0), c(0.0, 0.9)] {
            let a = scalar_a(z, eta).unwrap();
            assert!((a + 1.0 / eta).norm() <= 1e-3, "z {z}: {a}");
        }
    }

    #[test]
    fn scalar_transform_satisfies_its_cubic_on_a_grid() {
        for i in 0..20 {
            for j in 0..20 {
                let z = c(0.1 * i as f64, 0.05 * i as f64);
                let eta_im = 1e-3 * (10.0f64 / 1e-3).powf(j as f64 / 19.0);
                let eta = c(-0.3 + 0.06 * j as f64, eta_im);
                let a = scalar_a(z, eta).unwrap();
                assert!(a.im > 0.0);
                let (c2, c1, c0) = scalar_cubic(z, eta);
                let resid = cubic_eval(c2, c1, c0, a).norm();
                assert!(resid <= 1e-12 * (1.0 + eta.norm_sqr()), "z {z} eta {eta}: {resid:.3e}");
            }
        }
    }

    #[test]
    fn closed_form_satisfies_fixed_point_equation() {
        let qp = q(c(0.0, 0.2), c(0.3, 0.1), 2);
        let spec = SigmaSpec::new(2, vec![0.5, 0.7]).unwrap();
        let g = gamma_closed(&qp).unwrap();
        let rhs = invert_2m(&(&qp.matrix() + &sigma_op(&g.entries, &spec).unwrap()))
            .unwrap()
            .mapv(|v| -v);
        let resid = max_abs(&(&g.entries - &rhs));
        assert!(resid <= 1e-12, "residual {resid:.3e}");
    }

    #[test]
    fn closed_form_at_zero_shift_is_scalar_multiple_of_identity() {
        let qp = q(c(0.0, 0.6), c(0.0, 0.0), 3);
        let g = gamma_closed(&qp).unwrap();
        let a = scalar_a(qp.z, qp.eta).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { a } else { c(0.0, 0.0) };
                assert!((g.entries[[i, j]] - expect).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn closed_form_has_positive_imaginary_part() {
        let g = gamma_closed(&q(c(0.0, 0.5), c(0.4, 0.0), 2)).unwrap();
        assert!(g.imag_part_floor().unwrap() > 0.0);
    }

    #[test]
    fn fixed_point_matches_closed_form() {
        let qp = q(c(0.0, 0.2), c(0.3, 0.1), 2);
        let spec = SigmaSpec::new(2, vec![0.5, 0.7]).unwrap();
        let sol = solve_fixed_point(&qp, &spec, &FixedPointOpts::default()).unwrap();
        let g = gamma_closed(&qp).unwrap();
        assert!(sol.gamma.max_abs_diff(&g) <= 1e-10, "diff {}", sol.gamma.max_abs_diff(&g));
        assert!(sol.residual <= 1e-12);
        assert!(sol.gamma.imag_part_floor().unwrap() >= -1e-12);
    }

    #[test]
    fn fixed_point_solution_ignores_correlations() {
        let qp = q(c(0.0, 0.35), c(-0.4, 0.2), 2);
        let a = solve_fixed_point(&qp, &SigmaSpec::new(2, vec![0.5, 0.7]).unwrap(), &FixedPointOpts::default())
            .unwrap();
        let b = solve_fixed_point(&qp, &SigmaSpec::new(2, vec![0.0, 0.0]).unwrap(), &FixedPointOpts::default())
            .unwrap();
        assert!(a.gamma.max_abs_diff(&b.gamma) <= 1e-10);
    }

    #[test]
    fn fixed_point_converges_quickly_for_large_eta() {
        let qp = q(c(0.0, 2.0), c(0.0, 0.0), 2);
        let spec = SigmaSpec::uniform(2, 0.3).unwrap();
        let sol = solve_fixed_point(&qp, &spec, &FixedPointOpts::default()).unwrap();
        assert!(sol.iterations <= 50, "took {} iterations", sol.iterations);
    }

    #[test]
    fn inverted_density_recovers_semicircle_at_zero_shift() {
        let grid = density_grid(c(0.0, 0.0), 801);
        let curve = invert_stieltjes(c(0.0, 0.0), &grid, 1e-4).unwrap();
        let mut max_err = 0.0f64;
        for (&x, &r) in curve.xs.iter().zip(curve.rho.iter()) {
            let semi = if x.abs() <= 2.0 { (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI) } else { 0.0 };
            max_err = max_err.max((r - semi).abs());
        }
        assert!(max_err <= 5e-3, "max error {max_err:.2e}");
        let mid = curve.rho[curve.rho.len() / 2];
        assert_abs_diff_eq!(mid, std::f64::consts::FRAC_1_PI, epsilon = 5e-4);
    }

    #[test]
    fn inverted_density_is_symmetric_bounded_and_normalized() {
        for z in [c(0.0, 0.0), c(0.5, 0.0), c(1.2, 0.0)] {
            let grid = density_grid(z, 2001);
            let curve = invert_stieltjes(z, &grid, 1e-4).unwrap();
            assert!(curve.max_value() <= 1.0 + 5.0 * curve.eps);
            let n = grid.len();
            for i in 0..n {
                assert!((curve.rho[i] - curve.rho[n - 1 - i]).abs() < 1e-10);
                assert!(curve.rho[i] >= 0.0);
            }
            let mass = curve.mass();
            assert!((mass - 1.0).abs() <= 1e-3, "z {z}: mass {mass}");
        }
    }

    #[test]
    fn power_density_values_and_support() {
        assert_abs_diff_eq!(
            power_circular_density(c(0.3, 0.4), 1),
            std::f64::consts::FRAC_1_PI,
            epsilon = 1e-15
        );
        assert_eq!(power_circular_density(c(1.5, 0.0), 1), 0.0);
        assert_eq!(power_circular_density(c(0.0, 1.2), 3), 0.0);
        // m = 2 on the unit circle: 1/(2 pi).
        assert_abs_diff_eq!(
            power_circular_density(c(1.0, 0.0), 2),
            1.0 / (2.0 * std::f64::consts::PI),
            epsilon = 1e-15
        );
    }

    #[test]
    fn radial_cdf_matches_disk_quadrature() {
        // Mass of f_2 in the disk of radius 1/4: integrate the radial
        // profile 2 pi r f_2(r) = r^(-1) r dr / pi ... = 1/4; the r^(2/m)
        // closed form agrees with direct quadrature.
        let mass = adaptive_simpson(
            &|r: f64| 2.0 * std::f64::consts::PI * r * power_circular_density(c(r, 0.0), 2),
            1e-12,
            0.25,
            1e-10,
        );
        assert_abs_diff_eq!(mass, 0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(radial_cdf(0.25, 2), mass, epsilon = 1e-8);
        assert_eq!(radial_cdf(-0.1, 2), 0.0);
        assert_eq!(radial_cdf(1.7, 2), 1.0);
        assert_abs_diff_eq!(radial_cdf(0.5, 1), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn limit_densities_integrate_to_one() {
        for m in 1..=3 {
            let mass = adaptive_simpson(
                &|r: f64| 2.0 * std::f64::consts::PI * r * power_circular_density(c(r, 0.0), m),
                1e-12,
                1.0,
                1e-9,
            );
            assert!((mass - 1.0).abs() <= 1e-6, "m={m}: {mass}");
        }
        // Uniform ellipse: integrate strip widths against the density.
        let rho = 0.5;
        let dens = elliptic_density(c(0.0, 0.0), rho).unwrap();
        let mass = adaptive_simpson(
            &|x: f64| {
                let u = x / (1.0 + rho);
                2.0 * (1.0 - rho) * (1.0 - u * u).max(0.0).sqrt() * dens
            },
            -(1.0 + rho),
            1.0 + rho,
            1e-9,
        );
        assert!((mass - 1.0).abs() <= 1e-6, "ellipse mass {mass}");
    }

    #[test]
    fn elliptic_membership_and_degeneracy() {
        assert!(elliptic_contains(c(1.4, 0.0), 0.5, 1.0));
        assert!(!elliptic_contains(c(1.6, 0.0), 0.5, 1.0));
        assert!(elliptic_contains(c(1.55, 0.0), 0.5, 1.05));
        assert!(elliptic_contains(c(0.0, 0.49), 0.5, 1.0));
        assert!(!elliptic_contains(c(0.0, 0.51), 0.5, 1.0));
        assert!(elliptic_density(c(0.0, 0.0), 1.0).is_err());
        let (re2, im2) = elliptic_second_moments(0.5);
        assert_abs_diff_eq!(re2, 0.5625, epsilon = 1e-15);
        assert_abs_diff_eq!(im2, 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn log_potential_slope_branches() {
        assert_abs_diff_eq!(g_exact(2.0, 0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g_exact(0.5, 0.0), 1.0, epsilon = 1e-15);
        // Branches agree on the unit circle.
        assert_abs_diff_eq!(g_exact(0.6, 0.8), 2.0 * 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(g_exact(-0.3, 0.2), -0.6, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn sigma_op_is_linear(seed in 0u64..500, alpha_re in -2.0f64..2.0, beta_im in -2.0f64..2.0) {
            let spec = SigmaSpec::new(2, vec![0.4, -0.6]).unwrap();
            let a = random_complex_matrix(4, seed);
            let b = random_complex_matrix(4, seed.wrapping_add(999));
            let alpha = c(alpha_re, 0.3);
            let beta = c(-0.2, beta_im);
            let lhs = sigma_op(&(a.mapv(|v| v * alpha) + b.mapv(|v| v * beta)), &spec).unwrap();
            let rhs = sigma_op(&a, &spec).unwrap().mapv(|v| v * alpha)
                + sigma_op(&b, &spec).unwrap().mapv(|v| v * beta);
            let diff = max_abs(&(&lhs - &rhs));
            prop_assert!(diff < 1e-12);
        }

        #[test]
        fn scalar_transform_stays_in_upper_half_plane(
            zr in -2.0f64..2.0,
            zi in -2.0f64..2.0,
            im in 0.05f64..5.0,
        ) {
            let a = scalar_a(c(zr, zi), c(0.0, im)).unwrap();
            prop_assert!(a.im > 0.0);
        }
    }
}
