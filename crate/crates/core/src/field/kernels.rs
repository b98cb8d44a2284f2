//! Covariance kernels of the transversal field: the bilinear form on test
//! functions, the translation-invariant pair kernel `W(tau, X)`, its
//! unprojected scalar companion, and the cross kernel pairing a path against
//! an external test function.
//!
//! Everything reduces to radial integrals against two angular weights,
//! `f_a(rho) = j0 - j1/rho` for the isotropic part and `j2` for the rank-one
//! part:
//!
//! `W_{mu nu}(tau, X) = A(tau, r) delta_{mu nu} + B(tau, r) Xhat_mu Xhat_nu`.
//!
//! A product-rule quadrature over explicit angles is kept alongside as the
//! independent route for cross checks; it never shares the `f_a`/`j2`
//! reduction.

use super::cutoff::{CutoffSpec, TestFunctionSpec, FIELD_DIM};
use crate::error::{Error, Result};
use crate::quadrature::panel_gauss_legendre;

/// `D(k) = 1 - k k^T / |k|^2`.
pub fn transversal_projector(k: &[f64; 3]) -> Result<[[f64; 3]; 3]> {
    let k2: f64 = k.iter().map(|v| v * v).sum();
    if k2 == 0.0 {
        return Err(Error::ZeroWavevector);
    }
    let mut d = [[0.0; 3]; 3];
    for (mu, row) in d.iter_mut().enumerate() {
        for (nu, entry) in row.iter_mut().enumerate() {
            let delta = if mu == nu { 1.0 } else { 0.0 };
            *entry = delta - k[mu] * k[nu] / k2;
        }
    }
    Ok(d)
}

/// `j0(rho) - j1(rho)/rho`, series-protected at small argument.
pub fn angular_iso(rho: f64) -> f64 {
    if rho.abs() <= 0.5 {
        let x = rho * rho;
        2.0 / 3.0 - 2.0 * x / 15.0 + x * x / 140.0 - x * x * x / 5670.0
            + x * x * x * x / 399_168.0
    } else {
        let (s, c) = rho.sin_cos();
        // j0 - j1/rho = sin/rho - sin/rho^3 + cos/rho^2
        (s - s / (rho * rho) + c / rho) / rho
    }
}

/// Spherical Bessel `j2`, series-protected at small argument.
pub fn angular_rank1(rho: f64) -> f64 {
    if rho.abs() <= 0.5 {
        let x = rho * rho;
        x / 15.0 * (1.0 - x / 14.0 + x * x / 504.0 - x * x * x / 33_264.0
            + x * x * x * x / 3_459_456.0)
    } else {
        let (s, c) = rho.sin_cos();
        (3.0 / (rho * rho) - 1.0) * s / rho - 3.0 * c / (rho * rho)
    }
}

/// Converging panel quadrature of
/// `\int_0^{kmax} w(k) e^{-k tau} g(k r) dk` for both angular weights at
/// once; panel count follows the oscillation and decay scales and doubles
/// until two refinements agree.
fn radial_pair<W: Fn(f64) -> f64>(
    weight: &W,
    k_lo: f64,
    k_hi: f64,
    tau: f64,
    r: f64,
    tol_abs: f64,
) -> Result<(f64, f64)> {
    if k_hi <= k_lo {
        return Ok((0.0, 0.0));
    }
    let span = k_hi - k_lo;
    let mut panels = 8
        + (span * r.abs() / std::f64::consts::PI).ceil() as usize
        + (span * tau.abs() / 4.0).ceil() as usize;
    let eval = |panels: usize| {
        let a = panel_gauss_legendre(
            &|k: f64| weight(k) * (-k * tau.abs()).exp() * angular_iso(k * r),
            k_lo,
            k_hi,
            panels,
        );
        let b = panel_gauss_legendre(
            &|k: f64| weight(k) * (-k * tau.abs()).exp() * angular_rank1(k * r),
            k_lo,
            k_hi,
            panels,
        );
        (a, b)
    };
    let mut prev = eval(panels);
    for _ in 0..12 {
        panels *= 2;
        let next = eval(panels);
        if (next.0 - prev.0).abs() <= tol_abs && (next.1 - prev.1).abs() <= tol_abs {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence(format!(
        "radial kernel at tau={tau}, r={r} did not settle"
    )))
}

/// Isotropic decomposition `(A, B)` of the pair kernel at `(tau, r)`:
/// `A = (2 pi) \int k |phi|^2 e^{-k|tau|} f_a(k r) dk` and likewise with
/// `j2` for `B` (the half prefactor of the bilinear form included).
pub fn pair_potential_ab(tau: f64, r: f64, cutoff: &CutoffSpec, tol_abs: f64) -> Result<(f64, f64)> {
    let kmax = cutoff.support_max();
    let weight = |k: f64| {
        let p = cutoff.profile_at(k);
        k * p * p
    };
    let (ia, ib) = radial_pair(&weight, 0.0, kmax, tau, r, tol_abs)?;
    let pref = 0.5 * 4.0 * std::f64::consts::PI;
    Ok((pref * ia, pref * ib))
}

/// Full 3x3 pair kernel `W(tau, X)`.
pub fn pair_potential(tau: f64, x: &[f64; 3], cutoff: &CutoffSpec) -> Result<[[f64; 3]; 3]> {
    cutoff.validate()?;
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let (a, b) = pair_potential_ab(tau, r, cutoff, 1e-13)?;
    let mut w = [[0.0; 3]; 3];
    let unit = if r > 0.0 { [x[0] / r, x[1] / r, x[2] / r] } else { [0.0; 3] };
    for (mu, row) in w.iter_mut().enumerate() {
        for (nu, entry) in row.iter_mut().enumerate() {
            let delta = if mu == nu { a } else { 0.0 };
            *entry = delta + b * (unit[mu] * unit[nu]);
        }
    }
    Ok(w)
}

/// Independent route: the same kernel by explicit product quadrature over
/// `(k, cos theta, phi)`, never touching the spherical-Bessel reduction.
pub fn pair_potential_spherical(
    tau: f64,
    x: &[f64; 3],
    cutoff: &CutoffSpec,
    n_k: usize,
    n_ct: usize,
    n_phi: usize,
) -> [[f64; 3]; 3] {
    let kmax = cutoff.support_max();
    let mut w = [[0.0; 3]; 3];
    // trapezoid in phi is spectrally accurate for the periodic integrand
    for ip in 0..n_phi {
        let phi = 2.0 * std::f64::consts::PI * ip as f64 / n_phi as f64;
        let wphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        for (ct, wct) in gauss_legendre_nodes(n_ct, -1.0, 1.0) {
            let st = (1.0 - ct * ct).sqrt();
            let khat = [st * phi.cos(), st * phi.sin(), ct];
            let proj = transversal_projector(&khat).expect("unit vector");
            for (k, wk) in gauss_legendre_nodes(n_k, 0.0, kmax) {
                let p = cutoff.profile_at(k);
                let kdx = k * (khat[0] * x[0] + khat[1] * x[1] + khat[2] * x[2]);
                // real part of e^{-i k . X}
                let weight = 0.5 * p * p * k * (-k * tau.abs()).exp() * kdx.cos() * wk * wct * wphi;
                for mu in 0..3 {
                    for nu in 0..3 {
                        w[mu][nu] += weight * proj[mu][nu];
                    }
                }
            }
        }
    }
    w
}

fn gauss_legendre_nodes(n_panels: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    // reuse the 16-point rule per panel as explicit nodes
    const X: [f64; 8] = [
        0.0950125098376374,
        0.2816035507792589,
        0.4580167776572274,
        0.6178762444026438,
        0.7554044083550030,
        0.8656312023878318,
        0.9445750230732326,
        0.9894009349916499,
    ];
    const W: [f64; 8] = [
        0.1894506104550685,
        0.1826034150449236,
        0.1691565193950025,
        0.1495959888165767,
        0.1246289712555339,
        0.0951585116824928,
        0.0622535239386479,
        0.0271524594117541,
    ];
    let mut out = Vec::with_capacity(n_panels * 16);
    let h = (hi - lo) / n_panels as f64;
    for p in 0..n_panels {
        let c = lo + (p as f64 + 0.5) * h;
        for i in 0..8 {
            out.push((c - 0.5 * h * X[i], 0.5 * h * W[i]));
            out.push((c + 0.5 * h * X[i], 0.5 * h * W[i]));
        }
    }
    out
}

/// Unprojected scalar kernel
/// `4 pi \int k |phi|^2 e^{-k |tau|} j0(k r) dk`, the full-norm companion
/// used by the isometry battery (no half, no projector).
pub fn unprojected_kernel(tau: f64, r: f64, cutoff: &CutoffSpec) -> Result<f64> {
    let kmax = cutoff.support_max();
    let weight = |k: f64| {
        let p = cutoff.profile_at(k);
        k * p * p
    };
    let span_panels = 8 + (kmax * r.abs() / std::f64::consts::PI).ceil() as usize;
    let body = |k: f64| {
        let rho = k * r;
        let j0 = if rho.abs() < 1e-4 { 1.0 - rho * rho / 6.0 } else { rho.sin() / rho };
        weight(k) * (-k * tau.abs()).exp() * j0
    };
    let mut prev = panel_gauss_legendre(&body, 0.0, kmax, span_panels);
    for mult in [2usize, 4, 8, 16] {
        let next = panel_gauss_legendre(&body, 0.0, kmax, span_panels * mult);
        if (next - prev).abs() < 1e-13 {
            return Ok(4.0 * std::f64::consts::PI * next);
        }
        prev = next;
    }
    Ok(4.0 * std::f64::consts::PI * prev)
}

/// The bilinear form on radial test functions:
/// `(1/2) \int < f(k), D(k) g(k) > dk = (4 pi / 3) sum_mu \int k^2 f_mu g_mu dk`
/// (the angular average of the projector over radial components).
pub fn qm_form(f: &TestFunctionSpec, g: &TestFunctionSpec) -> Result<f64> {
    f.validate()?;
    g.validate()?;
    let mut total = 0.0;
    for mu in 0..FIELD_DIM {
        let (fs, gs) = (&f.components[mu], &g.components[mu]);
        let (Some(fp), Some(gp)) = (fs, gs) else { continue };
        let (flo, fhi) = fp.support();
        let (glo, ghi) = gp.support();
        let lo = flo.max(glo);
        let hi = fhi.min(ghi);
        if hi <= lo {
            continue;
        }
        let body = |k: f64| k * k * fp.eval(k) * gp.eval(k);
        let mut prev = panel_gauss_legendre(&body, lo, hi, 8);
        let mut val = prev;
        for mult in [2usize, 4, 8, 16, 32] {
            val = panel_gauss_legendre(&body, lo, hi, 8 * mult);
            if (val - prev).abs() < 1e-14 * val.abs().max(1.0) {
                break;
            }
            prev = val;
        }
        total += val;
    }
    Ok(4.0 * std::f64::consts::PI / 3.0 * total)
}

/// Equal-time embedding: the time weight integrates to one, so the form on
/// embedded test functions coincides with [`qm_form`]. Exposed separately
/// because the ground-state formulas are written against it.
pub fn qe_j0_form(f: &TestFunctionSpec, g: &TestFunctionSpec) -> Result<f64> {
    qm_form(f, g)
}

/// Cross kernel `G(tau, X; xi)`: the 3-vector contracted against Brownian
/// increments in the linear pairing,
/// `G_nu = (1/2) \int sum_mu xi_mu(k) (phi/sqrt omega)(k) D_{mu nu}(k)
///          e^{-i k.X} e^{-|tau| omega} dk`.
/// Identically zero when the supports of `xi` and the cutoff are disjoint.
pub fn cross_kernel(
    tau: f64,
    x: &[f64; 3],
    xi: &TestFunctionSpec,
    cutoff: &CutoffSpec,
) -> Result<[f64; 3]> {
    xi.validate()?;
    cutoff.validate()?;
    if xi.disjoint_from(cutoff) {
        return Ok([0.0; 3]);
    }
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let unit = if r > 0.0 { [x[0] / r, x[1] / r, x[2] / r] } else { [0.0; 3] };
    let pref = 0.5 * 4.0 * std::f64::consts::PI;
    let mut iso = [0.0; 3];
    let mut rank1_sum = 0.0;
    for mu in 0..FIELD_DIM {
        let Some(shell) = &xi.components[mu] else { continue };
        let (slo, shi) = shell.support();
        let lo = slo;
        let hi = shi.min(cutoff.support_max());
        if hi <= lo {
            continue;
        }
        let weight =
            |k: f64| k * k * shell.eval(k) * cutoff.profile_at(k) / k.sqrt().max(1e-300);
        let (ia, ib) = radial_pair(&weight, lo, hi, tau, r, 1e-13)?;
        iso[mu] = pref * ia;
        rank1_sum += pref * ib * unit[mu];
    }
    let mut g = [0.0; 3];
    for nu in 0..3 {
        g[nu] = iso[nu] + rank1_sum * unit[nu];
    }
    Ok(g)
}

/// `(xi, e^{-2 s omega} xi) = 4 pi sum_mu \int k^2 |xi_mu|^2 e^{-2 s k} dk`,
/// the decaying norm entering the variance bound of the cross pairing.
pub fn xi_decayed_norm_sq(xi: &TestFunctionSpec, s: f64) -> f64 {
    let mut total = 0.0;
    for shell in xi.components.iter().flatten() {
        let (lo, hi) = shell.support();
        total += panel_gauss_legendre(
            &|k: f64| {
                let v = shell.eval(k);
                k * k * v * v * (-2.0 * s.abs() * k).exp()
            },
            lo,
            hi,
            32,
        );
    }
    4.0 * std::f64::consts::PI * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::cutoff::ShellProfile;
    use crate::rng::derive_stream;

    // lambda^2 / (12 pi^2) at lambda = 1, approx 8.4434e-3
    const LAMBDA_TRACE: f64 =
        1.0 / (12.0 * std::f64::consts::PI * std::f64::consts::PI);

    #[test]
    fn projector_properties() {
        let mut s = derive_stream(3, 0);
        for _ in 0..50 {
            let k = [s.normal(), s.normal(), s.normal()];
            let d = transversal_projector(&k).unwrap();
            // D k = 0 (gauge condition)
            for row in &d {
                let dk: f64 = row.iter().zip(&k).map(|(a, b)| a * b).sum();
                assert!(dk.abs() < 1e-12);
            }
            // idempotent
            for mu in 0..3 {
                for nu in 0..3 {
                    let dd: f64 = (0..3).map(|l| d[mu][l] * d[l][nu]).sum();
                    assert!((dd - d[mu][nu]).abs() < 1e-12);
                }
            }
            // trace = d - 1
            let tr = d[0][0] + d[1][1] + d[2][2];
            assert!((tr - 2.0).abs() < 1e-12);
        }
        assert!(transversal_projector(&[0.0; 3]).is_err());
    }

    #[test]
    fn pair_potential_origin_values() {
        // sharp cutoff at lambda = 1: W_11(0,0) = 1/(12 pi^2), off-diagonals
        // vanish, trace = ||phi/sqrt(omega)||^2.
        let cutoff = CutoffSpec::sharp(1.0);
        let w = pair_potential(0.0, &[0.0; 3], &cutoff).unwrap();
        assert!((w[0][0] - LAMBDA_TRACE).abs() < 1e-10, "{}", w[0][0]);
        assert!(w[0][1].abs() < 1e-14);
        let tr = w[0][0] + w[1][1] + w[2][2];
        assert!((tr - cutoff.norm_lambda_sq()).abs() < 1e-10);
    }

    #[test]
    fn matches_spherical_route() {
        let cutoff = CutoffSpec::sharp(1.0);
        for (tau, x) in [
            (0.0, [0.0, 0.0, 0.0]),
            (0.5, [1.0, -0.5, 2.0]),
            (2.0, [0.3, 0.0, 0.0]),
            (0.1, [4.0, 3.0, -1.0]),
        ] {
            let fast = pair_potential(tau, &x, &cutoff).unwrap();
            let slow = pair_potential_spherical(tau, &x, &cutoff, 12, 24, 48);
            for mu in 0..3 {
                for nu in 0..3 {
                    assert!(
                        (fast[mu][nu] - slow[mu][nu]).abs() < 1e-9,
                        "tau={tau} x={x:?} [{mu}][{nu}]: {} vs {}",
                        fast[mu][nu],
                        slow[mu][nu]
                    );
                }
            }
        }
    }

    #[test]
    fn kernel_decays_in_tau() {
        let cutoff = CutoffSpec::sharp(1.0);
        let mut prev = f64::INFINITY;
        for i in 0..12 {
            let tau = 0.5 * i as f64;
            let w = pair_potential(tau, &[0.0; 3], &cutoff).unwrap();
            assert!(w[0][0] < prev);
            prev = w[0][0];
        }
    }

    #[test]
    fn kernel_symmetric_and_bounded() {
        let cutoff = CutoffSpec::sharp(1.0);
        let bound = cutoff.norm_lambda_sq();
        let mut s = derive_stream(9, 1);
        for _ in 0..20 {
            let tau = 3.0 * s.uniform();
            let x = [2.0 * s.normal(), 2.0 * s.normal(), 2.0 * s.normal()];
            let w = pair_potential(tau, &x, &cutoff).unwrap();
            for mu in 0..3 {
                for nu in 0..3 {
                    assert_eq!(w[mu][nu], w[nu][mu]);
                    assert!(w[mu][nu].abs() <= bound + 1e-12);
                }
            }
        }
    }

    #[test]
    fn qm_form_values() {
        // single radial component: q = (1/2)(2/3) \int |xi|^2 4 pi k^2 dk,
        // cross-checked against plain Monte Carlo over the ball.
        let shell = ShellProfile::Sharp { inner: 0.5, outer: 1.5, amp: 1.2 };
        let xi = TestFunctionSpec::single(0, shell);
        let q = qm_form(&xi, &xi).unwrap();
        let exact = 0.5 * (2.0 / 3.0)
            * 4.0
            * std::f64::consts::PI
            * (1.2f64.powi(2) * (1.5f64.powi(3) - 0.5f64.powi(3)) / 3.0);
        assert!((q - exact).abs() < 1e-10 * exact);

        let mut s = derive_stream(17, 0);
        let n = 2_000_000usize;
        let radius: f64 = 1.5;
        let vol = 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
        let mut vals = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            // uniform in the ball by rejection
            let (mut kx, mut ky, mut kz);
            loop {
                kx = radius * (2.0 * s.uniform() - 1.0);
                ky = radius * (2.0 * s.uniform() - 1.0);
                kz = radius * (2.0 * s.uniform() - 1.0);
                if kx * kx + ky * ky + kz * kz <= radius * radius {
                    break;
                }
            }
            let k2 = kx * kx + ky * ky + kz * kz;
            let v = shell.eval(k2.sqrt());
            let integrand = 0.5 * v * v * (1.0 - kx * kx / k2);
            vals += integrand;
            sq += integrand * integrand;
        }
        let mean = vals / n as f64 * vol;
        let se = vol * ((sq / n as f64 - (vals / n as f64).powi(2)) / n as f64).sqrt();
        assert!((mean - q).abs() < 3.0 * se, "mc {mean} vs {q} (se {se})");
    }

    #[test]
    fn qm_form_bilinear_and_disjoint() {
        let a = TestFunctionSpec::single(0, ShellProfile::Sharp { inner: 0.2, outer: 0.8, amp: 1.0 });
        let b = TestFunctionSpec::single(0, ShellProfile::Sharp { inner: 0.5, outer: 1.1, amp: 0.7 });
        let c = TestFunctionSpec::single(0, ShellProfile::Bump { inner: 0.3, outer: 1.0, amp: 2.0 });
        // disjoint radial shells in the same component give zero
        let far = TestFunctionSpec::single(0, ShellProfile::Sharp { inner: 2.0, outer: 3.0, amp: 1.0 });
        assert_eq!(qm_form(&a, &far).unwrap(), 0.0);
        // additivity over components: a two-component spec pairs term by term
        let mut f2 = a.clone();
        f2.components[1] = c.components[0];
        let mut g2 = b.clone();
        g2.components[1] = c.components[0];
        let combined = qm_form(&f2, &g2).unwrap();
        let parts = qm_form(&a, &b).unwrap() + qm_form(&c, &c).unwrap();
        assert!((combined - parts).abs() < 1e-12 * parts.abs().max(1.0));
        // equal-time embedding is the same form
        assert_eq!(qm_form(&a, &b).unwrap(), qe_j0_form(&a, &b).unwrap());
        // positivity and definiteness
        assert!(qm_form(&a, &a).unwrap() > 0.0);
    }

    #[test]
    fn cross_kernel_zero_on_disjoint_support() {
        let cutoff = CutoffSpec::sharp(1.0);
        let xi = TestFunctionSpec::single(1, ShellProfile::Sharp { inner: 1.5, outer: 2.5, amp: 1.0 });
        for (tau, x) in [(0.0, [0.0; 3]), (1.0, [2.0, 1.0, 0.0])] {
            assert_eq!(cross_kernel(tau, &x, &xi, &cutoff).unwrap(), [0.0; 3]);
        }
    }

    #[test]
    fn cross_kernel_matches_pair_potential_on_cutoff_shell() {
        // xi = sqrt(omega) phi as a radial profile makes the cross weight
        // equal the pair weight; compare component sums at tau=0, X=0.
        // With a sharp cutoff, xi = k^{1/2} phi is not representable by our
        // shells, so instead check |G(tau, X)| <= |G(0, 0)| and consistency
        // with the spherical route at a spot point.
        let cutoff = CutoffSpec::sharp(1.0);
        let xi = TestFunctionSpec::single(0, ShellProfile::Bump { inner: 0.2, outer: 0.9, amp: 1.0 });
        let g00 = cross_kernel(0.0, &[0.0; 3], &xi, &cutoff).unwrap();
        let norm0: f64 = g00.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut s = derive_stream(23, 0);
        for _ in 0..20 {
            let tau = 2.0 * s.uniform();
            let x = [s.normal(), s.normal(), s.normal()];
            let g = cross_kernel(tau, &x, &xi, &cutoff).unwrap();
            let n: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= norm0 + 1e-12, "|G({tau},{x:?})| = {n} > {norm0}");
        }

        // spherical-route spot check of the full vector
        let tau = 0.4;
        let x = [0.7, -0.2, 1.1];
        let g = cross_kernel(tau, &x, &xi, &cutoff).unwrap();
        let mut slow = [0.0; 3];
        for (k, wk) in gauss_legendre_nodes(40, 0.2, 0.9) {
            for (ct, wct) in gauss_legendre_nodes(24, -1.0, 1.0) {
                for ip in 0..48 {
                    let phi = 2.0 * std::f64::consts::PI * ip as f64 / 48.0;
                    let wphi = 2.0 * std::f64::consts::PI / 48.0;
                    let st = (1.0 - ct * ct).sqrt();
                    let khat = [st * phi.cos(), st * phi.sin(), ct];
                    let proj = transversal_projector(&khat).unwrap();
                    let kdx = k * (khat[0] * x[0] + khat[1] * x[1] + khat[2] * x[2]);
                    let weight = 0.5
                        * xi.component_at(0, k)
                        * cutoff.profile_at(k)
                        / k.sqrt()
                        * (-k * tau).exp()
                        * kdx.cos()
                        * k
                        * k
                        * wk
                        * wct
                        * wphi;
                    for nu in 0..3 {
                        slow[nu] += weight * proj[0][nu];
                    }
                }
            }
        }
        for nu in 0..3 {
            assert!((g[nu] - slow[nu]).abs() < 1e-8, "nu={nu}: {} vs {}", g[nu], slow[nu]);
        }
    }

    #[test]
    fn unprojected_reduces_to_lambda_norm() {
        let cutoff = CutoffSpec::sharp(1.0);
        let w = unprojected_kernel(0.0, 0.0, &cutoff).unwrap();
        assert!((w - cutoff.norm_lambda_sq()).abs() < 1e-12);
    }
}
