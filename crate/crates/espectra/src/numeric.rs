//! Small shared numerical kernels: adaptive quadrature and polynomial roots.

use num_complex::Complex64;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance
/// `tol`.
///
/// Subdivision stops when the Richardson estimate of the local error is
/// below the local tolerance or the depth cap is reached, so integrable
/// endpoint singularities and jump discontinuities converge (slowly) instead
/// of recursing forever.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }

    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Value of the monic cubic `x^3 + c2 x^2 + c1 x + c0` at `x`.
#[inline]
pub fn cubic_eval(c2: Complex64, c1: Complex64, c0: Complex64, x: Complex64) -> Complex64 {
    ((x + c2) * x + c1) * x + c0
}

#[inline]
fn cubic_deriv(c2: Complex64, c1: Complex64, x: Complex64) -> Complex64 {
    (3.0 * x + 2.0 * c2) * x + c1
}

/// All three roots of the monic cubic `x^3 + c2 x^2 + c1 x + c0`.
///
/// Durand-Kerner iteration followed by a Newton polish of each root. For
/// well-separated roots the residual lands near machine precision; clustered
/// roots degrade gracefully to the usual multiple-root accuracy.
pub fn cubic_roots(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
    let radius = 1.0 + c2.norm().max(c1.norm()).max(c0.norm());
    // Non-symmetric start angles so the iteration never stalls on a
    // symmetric configuration.
    let mut z = [
        Complex64::from_polar(radius, 0.5),
        Complex64::from_polar(radius, 0.5 + 2.0 * std::f64::consts::FRAC_PI_3 * 2.0),
        Complex64::from_polar(radius, 0.5 + 4.0 * std::f64::consts::FRAC_PI_3 * 2.0),
    ];
    for _ in 0..256 {
        let mut step = 0.0f64;
        for i in 0..3 {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..3 {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                // Collided iterates: nudge and keep going.
                z[i] += Complex64::new(1e-8 * radius, 1e-8 * radius);
                continue;
            }
            let delta = cubic_eval(c2, c1, c0, z[i]) / denom;
            z[i] -= delta;
            step = step.max(delta.norm());
        }
        if step < 1e-15 * radius {
            break;
        }
    }
    for zi in &mut z {
        for _ in 0..3 {
            let d = cubic_deriv(c2, c1, *zi);
            if d.norm() > 0.0 {
                *zi -= cubic_eval(c2, c1, c0, *zi) / d;
            }
        }
    }
    z
}
