//! Ultraviolet cutoff profiles and radial test functions.
//!
//! Both are real and radial, so every covariance they enter is real and the
//! profile satisfies `conj phi(k) = phi(-k)` by construction. The field
//! sector is fixed at d = 3.

use crate::error::{Error, Result};
use crate::quadrature::panel_gauss_legendre;

pub const FIELD_DIM: usize = 3;
/// `(2 pi)^3`, the momentum-space normalization of the cutoff.
const TWO_PI_CUBED: f64 = 248.05021344239853;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffProfile {
    /// `phi(k) = 1_{|k| < lambda} / sqrt((2 pi)^3)`.
    Sharp { lambda: f64 },
    /// `phi(k) = e^{-|k|^2/(2 sigma^2)} / sqrt((2 pi)^3)`.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub profile: CutoffProfile,
}

impl CutoffSpec {
    pub fn sharp(lambda: f64) -> CutoffSpec {
        CutoffSpec { profile: CutoffProfile::Sharp { lambda } }
    }

    pub fn gaussian(sigma: f64) -> CutoffSpec {
        CutoffSpec { profile: CutoffProfile::Gaussian { sigma } }
    }

    pub fn validate(&self) -> Result<()> {
        let p = match self.profile {
            CutoffProfile::Sharp { lambda } => lambda,
            CutoffProfile::Gaussian { sigma } => sigma,
        };
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("cutoff scale must be positive, got {p}")));
        }
        Ok(())
    }

    /// `phi(|k|)`, including the `(2 pi)^{-3/2}` normalization constant.
    pub fn profile_at(&self, k: f64) -> f64 {
        let shape = match self.profile {
            CutoffProfile::Sharp { lambda } => {
                if k < lambda {
                    1.0
                } else {
                    0.0
                }
            }
            CutoffProfile::Gaussian { sigma } => (-0.5 * k * k / (sigma * sigma)).exp(),
        };
        shape / TWO_PI_CUBED.sqrt()
    }

    /// Radial support `[0, k_max]`; for the Gaussian profile the point past
    /// which `|phi|^2` is below 1e-62.
    pub fn support_max(&self) -> f64 {
        match self.profile {
            CutoffProfile::Sharp { lambda } => lambda,
            CutoffProfile::Gaussian { sigma } => 12.0 * sigma,
        }
    }

    /// `||phi/sqrt(omega)||^2 = 4 pi \int k |phi(k)|^2 dk`; for the sharp
    /// profile this equals `lambda^2 / (4 pi^2)`.
    pub fn norm_lambda_sq(&self) -> f64 {
        let kmax = self.support_max();
        4.0 * std::f64::consts::PI
            * panel_gauss_legendre(
                &|k: f64| {
                    let p = self.profile_at(k);
                    k * p * p
                },
                0.0,
                kmax,
                32,
            )
    }

    /// `||omega^{3/2} phi||^2 = 4 pi \int k^5 |phi|^2 dk`, finite for both
    /// profiles; exposed for configurations that need the stronger
    /// integrability flag.
    pub fn omega32_norm_sq(&self) -> f64 {
        let kmax = self.support_max();
        4.0 * std::f64::consts::PI
            * panel_gauss_legendre(
                &|k: f64| {
                    let p = self.profile_at(k);
                    k.powi(5) * p * p
                },
                0.0,
                kmax,
                32,
            )
    }
}

/// One radial shell profile with support exactly `[inner, outer]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShellProfile {
    /// `amp` on `inner < k < outer`.
    Sharp { inner: f64, outer: f64, amp: f64 },
    /// Smooth bump `amp e^{1 - 1/(1-u^2)}` with `u = (2k - inner - outer) /
    /// (outer - inner)`, identically zero outside the shell.
    Bump { inner: f64, outer: f64, amp: f64 },
}

impl ShellProfile {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ShellProfile::Sharp { inner, outer, .. } | ShellProfile::Bump { inner, outer, .. } => {
                (inner, outer)
            }
        }
    }

    pub fn eval(&self, k: f64) -> f64 {
        match *self {
            ShellProfile::Sharp { inner, outer, amp } => {
                if k > inner && k < outer {
                    amp
                } else {
                    0.0
                }
            }
            ShellProfile::Bump { inner, outer, amp } => {
                let u = (2.0 * k - inner - outer) / (outer - inner);
                if u.abs() < 1.0 {
                    amp * (1.0 - 1.0 / (1.0 - u * u)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (i, o) = self.support();
        if !(0.0 <= i && i < o && o.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad shell radii [{i}, {o}]")));
        }
        Ok(())
    }
}

/// A d-vector of radial profiles; absent components are zero.
#[derive(Debug, Clone, Default)]
pub struct TestFunctionSpec {
    pub components: [Option<ShellProfile>; FIELD_DIM],
}

impl TestFunctionSpec {
    /// Single nonzero component.
    pub fn single(component: usize, shell: ShellProfile) -> TestFunctionSpec {
        let mut components: [Option<ShellProfile>; FIELD_DIM] = Default::default();
        components[component] = Some(shell);
        TestFunctionSpec { components }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.iter().all(|c| c.is_none()) {
            return Err(Error::InvalidParameter("test function has no components".into()));
        }
        for c in self.components.iter().flatten() {
            c.validate()?;
        }
        Ok(())
    }

    pub fn component_at(&self, mu: usize, k: f64) -> f64 {
        self.components[mu].map_or(0.0, |s| s.eval(k))
    }

    /// Union of the component supports.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for c in self.components.iter().flatten() {
            let (i, o) = c.support();
            lo = lo.min(i);
            hi = hi.max(o);
        }
        (lo, hi)
    }

    /// True when the supports of the test function and the cutoff are
    /// disjoint, which kills every cross pairing identically.
    pub fn disjoint_from(&self, cutoff: &CutoffSpec) -> bool {
        let (lo, _) = self.support();
        lo >= cutoff.support_max()
    }
}
