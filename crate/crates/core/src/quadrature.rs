//! Deterministic quadrature building blocks used by the analytic oracles and
//! the field-kernel reductions.

use crate::error::{Error, Result};

/// Adaptive Simpson integration with an absolute tolerance.
///
/// Splits until the Richardson error estimate on each panel is below the
/// budget allotted to it. Errors out if the recursion depth limit is hit
/// before the estimate converges.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureNonConvergence("non-finite limits".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 52)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    // Below the attainable f64 precision of this panel further splitting
    // only recycles rounding noise.
    let floor = 4.0 * f64::EPSILON * (left.abs() + right.abs());
    if err.abs() <= (15.0 * tol).max(floor) || (b - a).abs() < 1e-300 {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureNonConvergence(format!(
            "depth limit on [{a}, {b}], err {err:.3e}"
        )));
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// 16-point Gauss-Legendre nodes and weights on [-1, 1].
const GL16_X: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

/// Fixed 16-point Gauss-Legendre rule on [a, b].
pub fn gauss_legendre_16<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..8 {
        let dx = h * GL16_X[i];
        acc += GL16_W[i] * (f(c - dx) + f(c + dx));
    }
    acc * h
}

/// Composite Gauss-Legendre over `panels` equal panels of [a, b].
///
/// With 16 points per panel this is effectively exact once each panel spans
/// at most one oscillation of the integrand.
pub fn panel_gauss_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(1);
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        acc += gauss_legendre_16(f, a + i as f64 * h, a + (i + 1) as f64 * h);
    }
    acc
}

/// Gauss-Hermite nodes/weights for weight e^{-x^2/2}/sqrt(2 pi)
/// (probabilists' convention), computed by Golub-Welsch.
pub fn gauss_hermite_prob(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Jacobi matrix for monic probabilists' Hermite: a_k = 0, b_k = k.
    let mut mat = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64).sqrt();
        mat[(k - 1, k)] = off;
        mat[(k, k - 1)] = off;
    }
    let eig = nalgebra::SymmetricEigen::new(mat);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let w = eig.eigenvectors[(0, i)].powi(2);
            (x, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_exact() {
        let val = adaptive_simpson(&|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-12).unwrap();
        // antiderivative x^4/4 - x^2 + x
        let exact = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0);
        assert!((val - exact).abs() < 1e-10);
    }

    #[test]
    fn simpson_gaussian() {
        let val = adaptive_simpson(&|x: f64| (-0.5 * x * x).exp(), -10.0, 10.0, 1e-12).unwrap();
        assert!((val - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn panels_handle_oscillation() {
        // integral of sin(40 x) on [0, pi] = (1 - cos(40 pi))/40 = 0
        let val = panel_gauss_legendre(&|x: f64| (40.0 * x).sin(), 0.0, std::f64::consts::PI, 40);
        assert!(val.abs() < 1e-12);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite_prob(24);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| x * x * w).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| x.powi(4) * w).sum();
        assert!((m0 - 1.0).abs() < 1e-12);
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-10);
    }
}
