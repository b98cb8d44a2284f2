//! Transition kernel and characteristic function of the subordinated process
//! `z_t = B_{T_t}`, the coupling-free analytic oracle.
//!
//! The density is radially symmetric, proportional to
//! `K_{(d+1)/2}(m sqrt(t^2 + r^2)) / (t^2 + r^2)^{(d+1)/4}` for `m > 0` and to
//! `(t^2 + r^2)^{-(d+1)/2}` for `m = 0`. The normalization constant is always
//! derived by enforcing `\int k = 1` with radial quadrature instead of taking
//! a printed prefactor on trust; at `m = 0, d = 1` this reproduces the Cauchy
//! density `t / (pi (t^2 + x^2))` exactly.

use crate::bessel::bessel_k_scaled;
use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Characteristic function value `E[e^{-i u . z_t}] e^{i u . x}`, real:
/// `exp(-t (sqrt(|u|^2 + m^2) - m))`.
pub fn characteristic_function(u: &[f64], t: f64, m: f64) -> f64 {
    let u2: f64 = u.iter().map(|v| v * v).sum();
    // sqrt(u^2 + m^2) - m without cancellation
    let psi = u2 / ((u2 + m * m).sqrt() + m);
    (-t * psi).exp()
}

/// Surface area of the unit sphere in `d` dimensions.
fn sphere_surface(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => {
            let dh = d as f64 / 2.0;
            2.0 * std::f64::consts::PI.powf(dh) / statrs::function::gamma::gamma(dh)
        }
    }
}

/// Normalized transition density of `z_t` for one `(t, m, d)`.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub t: f64,
    pub m: f64,
    pub d: usize,
    norm: f64,
}

impl Kernel {
    pub fn new(t: f64, m: f64, d: usize) -> Result<Kernel> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("kernel needs t > 0, got {t}")));
        }
        if m < 0.0 || d == 0 {
            return Err(Error::InvalidParameter("kernel needs m >= 0 and d >= 1".into()));
        }
        let mut kernel = Kernel { t, m, d, norm: 1.0 };
        let total = kernel.shape_integral()?;
        kernel.norm = 1.0 / total;
        Ok(kernel)
    }

    /// Unnormalized radial profile; bounded by construction (the Bessel
    /// growth at large argument is absorbed with its exponential).
    fn shape(&self, r: f64) -> f64 {
        let t = self.t;
        let m = self.m;
        let s2 = t * t + r * r;
        if m == 0.0 {
            s2.powf(-0.5 * (self.d as f64 + 1.0))
        } else {
            let z = m * s2.sqrt();
            let nu = 0.5 * (self.d as f64 + 1.0);
            let scaled = bessel_k_scaled(nu, z).expect("z > 0");
            scaled * (m * t - z).exp() * s2.powf(-0.5 * nu)
        }
    }

    fn shape_integral(&self) -> Result<f64> {
        let d = self.d;
        let surface = sphere_surface(d);
        let body = |r: f64| r.powi(d as i32 - 1) * self.shape(r);
        if self.m > 0.0 {
            // exponential tail: e^{-m r} is below 1e-40 past r0 + 95/m
            let r_max = self.t + 95.0 / self.m;
            Ok(surface * adaptive_simpson(&body, 0.0, r_max, 1e-12)?)
        } else {
            // algebraic tail r^{-2}: substitute u = 1/r past r = R
            let r_split = 10.0 * self.t.max(1.0);
            let head = adaptive_simpson(&body, 0.0, r_split, 1e-12)?;
            let t2 = self.t * self.t;
            let dd = self.d as f64;
            let tail = adaptive_simpson(
                &|u: f64| (1.0 + t2 * u * u).powf(-0.5 * (dd + 1.0)),
                0.0,
                1.0 / r_split,
                1e-12,
            )?;
            Ok(surface * (head + tail))
        }
    }

    pub fn density_radial(&self, r: f64) -> f64 {
        self.norm * self.shape(r)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.density_radial(r)
    }

    /// One-dimensional CDF (d = 1 only), by quadrature.
    pub fn cdf_1d(&self, x: f64) -> Result<f64> {
        if self.d != 1 {
            return Err(Error::InvalidParameter("cdf_1d requires d = 1".into()));
        }
        let half = if x.abs() < 1e-300 {
            0.0
        } else {
            let lim = x.abs().min(1e6);
            let mut v = adaptive_simpson(&|r| self.density_radial(r), 0.0, lim, 1e-12)?;
            if x.abs() > 1e6 {
                // algebraic/exponential remainder is below 1e-10 out here
                v += 0.5 - adaptive_simpson(&|r| self.density_radial(r), 0.0, 1e6, 1e-12)?;
            }
            v
        };
        Ok(if x >= 0.0 { 0.5 + half } else { 0.5 - half })
    }

    /// Equal-probability bin edges for goodness-of-fit tests (d = 1).
    pub fn equiprobable_edges(&self, bins: usize) -> Result<Vec<f64>> {
        let mut edges = Vec::with_capacity(bins - 1);
        for k in 1..bins {
            let target = k as f64 / bins as f64;
            let mut lo = -1e8;
            let mut hi = 1e8;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.cdf_1d(mid)? < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            edges.push(0.5 * (lo + hi));
        }
        Ok(edges)
    }
}

/// An isotropic Gaussian test window `amp * exp(-|x - center|^2 / (2 width^2))`.
#[derive(Debug, Clone)]
pub struct GaussianWindow {
    pub center: Vec<f64>,
    pub width: f64,
    pub amp: f64,
}

impl GaussianWindow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.amp * (-0.5 * r2 / (self.width * self.width)).exp()
    }

    /// `\int f(x) g(x) dx` in `d` dimensions:
    /// `amp_f amp_g (2 pi sf^2 sg^2 / (sf^2 + sg^2))^{d/2} e^{-dr^2/(2 (sf^2+sg^2))}`.
    pub fn overlap(&self, other: &GaussianWindow) -> f64 {
        let d = self.center.len();
        let s2 = self.width * self.width + other.width * other.width;
        let dr2: f64 =
            self.center.iter().zip(&other.center).map(|(a, b)| (a - b) * (a - b)).sum();
        let scale = (2.0 * std::f64::consts::PI * self.width * self.width * other.width
            * other.width
            / s2)
            .powf(d as f64 / 2.0);
        self.amp * other.amp * scale * (-0.5 * dr2 / s2).exp()
    }

    /// Cross-correlation `h(w) = \int f(x) g(x + w) dx`: a Gaussian in `w`
    /// centered at `cf - cg` with width `sqrt(sf^2 + sg^2)`.
    fn cross_correlation(&self, other: &GaussianWindow) -> GaussianWindow {
        let d = self.center.len();
        let s2 = self.width * self.width + other.width * other.width;
        let amp = self.amp
            * other.amp
            * (2.0 * std::f64::consts::PI * self.width * self.width * other.width * other.width
                / s2)
                .powf(d as f64 / 2.0);
        GaussianWindow {
            center: self.center.iter().zip(&other.center).map(|(a, b)| a - b).collect(),
            width: s2.sqrt(),
            amp,
        }
    }
}

/// Quadrature oracle for the free matrix element
/// `\int\int f(x) k_t(y - x) g(y) dx dy` with Gaussian windows, `d = 1` or
/// isotropic `d = 3`.
pub fn free_matrix_element(kernel: &Kernel, f: &GaussianWindow, g: &GaussianWindow) -> Result<f64> {
    let h = f.cross_correlation(g);
    match kernel.d {
        1 => {
            let c = h.center[0];
            let span = 12.0 * h.width + 60.0 * kernel.t.max(1.0);
            adaptive_simpson(
                &|w: f64| kernel.density_radial(w.abs()) * h.eval(&[w]),
                c - span,
                c + span,
                1e-12,
            )
        }
        3 => {
            //ветвь: int k(|w|) A e^{-|w - c|^2/(2 s^2)} dw reduced to a radial
            // integral with the spherical average of the shifted Gaussian.
            let delta = h.center.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s2 = h.width * h.width;
            let body = |r: f64| {
                let ang = if delta < 1e-12 {
                    (-0.5 * r * r / s2).exp()
                } else {
                    let a = r * delta / s2;
                    (-0.5 * (r * r + delta * delta) / s2).exp() * a.sinh() / a
                };
                4.0 * std::f64::consts::PI * r * r * kernel.density_radial(r) * h.amp * ang
            };
            let r_max = delta + 12.0 * h.width + 60.0 * kernel.t.max(1.0);
            adaptive_simpson(&body, 0.0, r_max, 1e-12)
        }
        d => Err(Error::InvalidParameter(format!("free_matrix_element supports d in {{1,3}}, got {d}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::panel_gauss_legendre;

    #[test]
    fn cauchy_at_massless_1d() {
        let k = Kernel::new(1.0, 0.0, 1).unwrap();
        for x in [0.0, 0.3, 1.0, 5.0] {
            let exact = 1.0 / (std::f64::consts::PI * (1.0 + x * x));
            assert!((k.density(&[x]) - exact).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn fourier_inversion_oracle_massless() {
        // d=1, m=0 density equals (2 pi)^{-1} \int e^{-t|u|} cos(u x) du.
        let k = Kernel::new(0.7, 0.0, 1).unwrap();
        for x in [0.0, 0.5, 2.0] {
            let inv = panel_gauss_legendre(
                &|u: f64| (-0.7 * u).exp() * (u * x).cos(),
                0.0,
                200.0,
                400,
            ) / std::f64::consts::PI;
            assert!((k.density(&[x]) - inv).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn normalization_massive() {
        // d = 1, t = 1, m = 1 integrates to one (independent check of the
        // numeric normalization constant).
        let k = Kernel::new(1.0, 1.0, 1).unwrap();
        let total =
            adaptive_simpson(&|r: f64| 2.0 * k.density_radial(r), 0.0, 120.0, 1e-12).unwrap();
        assert!((total - 1.0).abs() < 1e-8, "total = {total}");
    }

    #[test]
    fn symmetry() {
        let k = Kernel::new(0.5, 2.0, 3).unwrap();
        let a = k.density(&[0.3, -0.4, 1.0]);
        let b = k.density(&[-0.3, 0.4, -1.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn chapman_kolmogorov_1d() {
        // \int k_s(x - y) k_t(y) dy = k_{s+t}(x) at spot points.
        let m = 1.0;
        let ks = Kernel::new(0.6, m, 1).unwrap();
        let kt = Kernel::new(0.9, m, 1).unwrap();
        let kst = Kernel::new(1.5, m, 1).unwrap();
        for x in [0.0, 0.7, 2.0] {
            let conv = adaptive_simpson(
                &|y: f64| ks.density(&[x - y]) * kt.density(&[y]),
                -80.0,
                80.0,
                1e-10,
            )
            .unwrap();
            assert!((conv - kst.density(&[x])).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn characteristic_function_values() {
        assert_eq!(characteristic_function(&[0.0, 0.0], 1.0, 1.0), 1.0);
        let v = characteristic_function(&[1.0], 1.0, 0.0);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        // increasing in m at fixed (u, t)
        let mut prev = 0.0;
        for i in 0..20 {
            let m = 0.25 * i as f64;
            let v = characteristic_function(&[1.3], 0.8, m);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn char_function_is_fourier_transform_of_density() {
        let k = Kernel::new(1.0, 1.0, 1).unwrap();
        for u in [0.3, 1.0, 2.5] {
            let ft = adaptive_simpson(
                &|x: f64| k.density(&[x]) * (u * x).cos(),
                -150.0,
                150.0,
                1e-10,
            )
            .unwrap();
            let cf = characteristic_function(&[u], 1.0, 1.0);
            assert!((ft - cf).abs() < 1e-6, "u={u}: {ft} vs {cf}");
        }
    }

    #[test]
    fn gaussian_overlap_closed_form() {
        let f = GaussianWindow { center: vec![0.2], width: 0.8, amp: 1.3 };
        let g = GaussianWindow { center: vec![-0.4], width: 1.1, amp: 0.7 };
        let direct = adaptive_simpson(&|x: f64| f.eval(&[x]) * g.eval(&[x]), -30.0, 30.0, 1e-12)
            .unwrap();
        assert!((f.overlap(&g) - direct).abs() < 1e-10);
    }
}
