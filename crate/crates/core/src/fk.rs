//! Feynman-Kac Monte Carlo for the particle semigroup: matrix elements,
//! pointwise semigroup application, long-time ground-energy extraction, the
//! bound-state martingale probe, and stopped-path fall-off envelopes.
//!
//! All estimators parallelize over samples with per-sample streams and fold
//! results deterministically. Samples rejected by the Brownian-time cap (or
//! by leaving the oracle domain) contribute zero and are counted; every
//! integrand here is bounded, so the induced bias is at most the rejection
//! fraction times the integrand bound.

use crate::error::{Error, Result};
use crate::estimate::{pairwise_sum, Estimate};
use crate::path::{sample_path, Branch, PathConfig, SubordinatedPath};
use crate::potential::PotentialSpec;
use crate::rng::{derive_stream, salted_seed};
use crate::spectral::SpectralSolution;
use rayon::prelude::*;

/// Axis-aligned sampling box for the spatial integral.
#[derive(Debug, Clone)]
pub struct XBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl XBox {
    pub fn symmetric(half_width: f64, dim: usize) -> XBox {
        XBox { lo: vec![-half_width; dim], hi: vec![half_width; dim] }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn sample(&self, stream: &mut crate::rng::RandomStream) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| stream.uniform_in(*a, *b)).collect()
    }
}

/// Rejection bookkeeping for bias accounting.
#[derive(Debug, Clone, Default)]
pub struct Accounting {
    pub n_total: usize,
    pub n_capped: usize,
    pub n_out_of_domain: usize,
}

impl Accounting {
    pub fn rejection_fraction(&self) -> f64 {
        (self.n_capped + self.n_out_of_domain) as f64 / self.n_total.max(1) as f64
    }
}

/// Cumulative trapezoid `\int_0^{t_j} V(X_s) ds` at every slab boundary of
/// the one-sided branch.
fn cumulative_potential<V: Fn(&[f64]) -> f64>(path: &SubordinatedPath, v: &V) -> Vec<f64> {
    let dt = path.slab_width();
    let mut out = Vec::with_capacity(path.n_slabs + 1);
    out.push(0.0);
    let mut prev = v(path.position_at_slab(0));
    let mut acc = 0.0;
    for j in 1..=path.n_slabs {
        let cur = v(path.position_at_slab(j as i64));
        acc += 0.5 * dt * (prev + cur);
        out.push(acc);
        prev = cur;
    }
    out
}

/// Matrix element `\int dx E^x[ f(z_0) g(z_t) e^{-\int_0^t V} ]` with `x`
/// uniform on the box (volume factor applied).
pub fn semigroup_element(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    spec: &PotentialSpec,
    cfg: &PathConfig,
    x_box: &XBox,
    n: usize,
    master_seed: u64,
) -> Result<(Estimate, Accounting)> {
    cfg.validate()?;
    let vol = x_box.volume();
    let seed = salted_seed(master_seed, "semigroup-element");
    let rows: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = derive_stream(seed, i as u64);
            let x = x_box.sample(&mut stream);
            match sample_path(cfg, Branch::Plus, &x, &mut stream) {
                Ok(path) => {
                    let integral = path.integrate_potential_branch(false, &|y| spec.evaluate(y));
                    Some(vol * f(&x) * g(path.end_plus()) * (-integral).exp())
                }
                Err(_) => None,
            }
        })
        .collect();
    let mut acct = Accounting { n_total: n, ..Default::default() };
    let vals: Vec<f64> = rows
        .into_iter()
        .map(|r| match r {
            Some(v) => v,
            None => {
                acct.n_capped += 1;
                0.0
            }
        })
        .collect();
    Ok((Estimate::from_values(&vals, master_seed), acct))
}

/// Pointwise application `(s_t f)(x) = E^x[ f(z_t) e^{-\int_0^t V} ]`.
pub fn semigroup_apply(
    spec: &PotentialSpec,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    cfg: &PathConfig,
    n: usize,
    master_seed: u64,
) -> Result<(Estimate, Accounting)> {
    cfg.validate()?;
    let seed = salted_seed(master_seed, "semigroup-apply");
    let rows: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = derive_stream(seed, i as u64);
            match sample_path(cfg, Branch::Plus, x, &mut stream) {
                Ok(path) => {
                    let integral = path.integrate_potential_branch(false, &|y| spec.evaluate(y));
                    Some(f(path.end_plus()) * (-integral).exp())
                }
                Err(_) => None,
            }
        })
        .collect();
    let mut acct = Accounting { n_total: n, ..Default::default() };
    let vals: Vec<f64> = rows
        .into_iter()
        .map(|r| r.unwrap_or_else(|| {
            acct.n_capped += 1;
            0.0
        }))
        .collect();
    Ok((Estimate::from_values(&vals, master_seed), acct))
}

/// One ground-energy reading: `-(1/dt) log(Z_{t+dt}/Z_t)` and the time it
/// belongs to.
#[derive(Debug, Clone)]
pub struct EnergyReading {
    pub t: f64,
    pub estimate: Estimate,
}

/// Ground-energy sequence from the normalized partition ratios
/// `Z_t = \int dx E^x[ phi(z_0) phi(z_t) e^{-\int V} ]`, sharing one path
/// per sample across the whole grid (common random numbers).
pub fn ground_energy_estimate(
    spec: &PotentialSpec,
    window: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: &PathConfig,
    x_box: &XBox,
    t_grid: &[f64],
    dt: f64,
    n: usize,
    master_seed: u64,
) -> Result<Vec<EnergyReading>> {
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max) + dt;
    let slab = cfg.slab_width();
    let run_cfg = PathConfig {
        horizon: t_max,
        n_slabs: (t_max / slab).round() as usize,
        ..cfg.clone()
    };
    run_cfg.validate()?;
    // every probe time must land on the slab grid
    let mut slots = Vec::with_capacity(2 * t_grid.len());
    for &t in t_grid {
        for probe in [t, t + dt] {
            let idx = probe / slab;
            if (idx - idx.round()).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "probe time {probe} is off the slab grid (width {slab})"
                )));
            }
            slots.push(idx.round() as usize);
        }
    }
    let vol = x_box.volume();
    let seed = salted_seed(master_seed, "ground-energy");
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = derive_stream(seed, i as u64);
            let x = x_box.sample(&mut stream);
            match sample_path(&run_cfg, Branch::Plus, &x, &mut stream) {
                Ok(path) => {
                    let cum = cumulative_potential(&path, &|y| spec.evaluate(y));
                    let wx = window(&x);
                    slots
                        .iter()
                        .map(|&j| {
                            vol * wx
                                * window(path.position_at_slab(j as i64))
                                * (-cum[j]).exp()
                        })
                        .collect()
                }
                Err(_) => vec![0.0; slots.len()],
            }
        })
        .collect();
    let mut readings = Vec::with_capacity(t_grid.len());
    for (gi, &t) in t_grid.iter().enumerate() {
        let base: Vec<f64> = rows.iter().map(|r| r[2 * gi]).collect();
        let next: Vec<f64> = rows.iter().map(|r| r[2 * gi + 1]).collect();
        let ratio = crate::estimate::ratio_estimate(&next, &base, master_seed);
        let energy = -ratio.mean.ln() / dt;
        let se = ratio.std_error / ratio.mean.abs() / dt;
        readings.push(EnergyReading {
            t,
            estimate: Estimate { mean: energy, std_error: se, n, master_seed },
        });
    }
    Ok(readings)
}

/// Per-time estimates of
/// `E[ e^{tE} e^{-\int_0^t V(z_s + x)} phi_b(z_t + x) ]`; all equal
/// `phi_b(x)` when the eigenpair solves the same `(m, V)`.
pub fn martingale_deviation(
    sol: &SpectralSolution,
    spec: &PotentialSpec,
    x: f64,
    t_grid: &[f64],
    cfg: &PathConfig,
    n: usize,
    master_seed: u64,
) -> Result<(Vec<Estimate>, Accounting)> {
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let slab = cfg.slab_width();
    let run_cfg = PathConfig {
        horizon: t_max,
        n_slabs: (t_max / slab).round() as usize,
        dim: 1,
        mass: sol.mass,
        ..cfg.clone()
    };
    run_cfg.validate()?;
    let slots: Vec<usize> = t_grid
        .iter()
        .map(|&t| {
            let idx = t / slab;
            if (idx - idx.round()).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "martingale time {t} is off the slab grid"
                )));
            }
            Ok(idx.round() as usize)
        })
        .collect::<Result<_>>()?;
    let energy = sol.energy;
    let seed = salted_seed(master_seed, "martingale");
    let rows: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = derive_stream(seed, i as u64);
            let path = match sample_path(&run_cfg, Branch::Plus, &[0.0], &mut stream) {
                Ok(p) => p,
                Err(_) => return None,
            };
            // domain check along the whole slab grid
            for j in 0..=run_cfg.n_slabs {
                if (path.position_at_slab(j as i64)[0] + x).abs() > sol.domain {
                    return None;
                }
            }
            let cum = cumulative_potential(&path, &|y: &[f64]| spec.evaluate(&[y[0] + x]));
            let vals = slots
                .iter()
                .map(|&j| {
                    let t = j as f64 * slab;
                    let phi = sol
                        .evaluate(path.position_at_slab(j as i64)[0] + x)
                        .expect("domain checked");
                    (t * energy).exp() * (-cum[j]).exp() * phi
                })
                .collect();
            Some(vals)
        })
        .collect();
    let mut acct = Accounting { n_total: n, ..Default::default() };
    let kept: Vec<&Vec<f64>> = rows
        .iter()
        .filter_map(|r| match r {
            Some(v) => Some(v),
            None => {
                acct.n_out_of_domain += 1;
                None
            }
        })
        .collect();
    let mut estimates = Vec::with_capacity(t_grid.len());
    for (gi, _) in t_grid.iter().enumerate() {
        let vals: Vec<f64> = kept.iter().map(|r| r[gi]).collect();
        estimates.push(Estimate::from_values(&vals, master_seed));
    }
    Ok((estimates, acct))
}

/// Pooled flatness statistic of a martingale sequence: max deviation from
/// the pooled mean in pooled-sigma units.
pub fn flatness_statistic(estimates: &[Estimate]) -> f64 {
    let weights: Vec<f64> = estimates.iter().map(|e| 1.0 / e.std_error.powi(2)).collect();
    let wsum = pairwise_sum(&weights);
    let mean = estimates
        .iter()
        .zip(&weights)
        .map(|(e, w)| e.mean * w)
        .sum::<f64>()
        / wsum;
    estimates
        .iter()
        .map(|e| (e.mean - mean).abs() / e.std_error)
        .fold(0.0, f64::max)
}

/// Stopping rule for fall-off envelopes.
#[derive(Debug, Clone, Copy)]
pub enum StoppingRule {
    /// Stop on first entry into the ball `|z| < radius` (decaying wells).
    EntryBall { radius: f64 },
    /// Stop on first exit from `|z| > factor * |x_start|` (confining wells).
    ExitBall { factor: f64 },
}

/// Envelope values `E^x[ e^{-\int_0^{t ^ tau} (V - E) ds} ]` over a grid of
/// starting points, stopping times detected on the slab grid.
pub fn falloff_envelope(
    spec: &PotentialSpec,
    energy: f64,
    cfg: &PathConfig,
    x_grid: &[f64],
    rule: StoppingRule,
    n: usize,
    master_seed: u64,
) -> Result<(Vec<Estimate>, Accounting)> {
    cfg.validate()?;
    if cfg.dim != 1 {
        return Err(Error::InvalidParameter("fall-off probe is one-dimensional".into()));
    }
    let dt = cfg.slab_width();
    let mut acct = Accounting::default();
    let mut out = Vec::with_capacity(x_grid.len());
    for (gi, &x0) in x_grid.iter().enumerate() {
        let seed = salted_seed(master_seed, &format!("falloff-{gi}"));
        let rows: Vec<Option<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut stream = derive_stream(seed, i as u64);
                let path = match sample_path(cfg, Branch::Plus, &[x0], &mut stream) {
                    Ok(p) => p,
                    Err(_) => return None,
                };
                let stopped = |z: f64| match rule {
                    StoppingRule::EntryBall { radius } => z.abs() < radius,
                    StoppingRule::ExitBall { factor } => z.abs() > factor * x0.abs(),
                };
                let mut acc = 0.0;
                let mut prev = spec.evaluate(path.position_at_slab(0)) - energy;
                for j in 1..=cfg.n_slabs {
                    let z = path.position_at_slab(j as i64)[0];
                    let cur = spec.evaluate(&[z]) - energy;
                    acc += 0.5 * dt * (prev + cur);
                    prev = cur;
                    if stopped(z) {
                        break;
                    }
                }
                Some((-acc).exp())
            })
            .collect();
        acct.n_total += n;
        let vals: Vec<f64> = rows
            .into_iter()
            .map(|r| r.unwrap_or_else(|| {
                acct.n_capped += 1;
                0.0
            }))
            .collect();
        out.push(Estimate::from_values(&vals, master_seed));
    }
    Ok((out, acct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{free_matrix_element, GaussianWindow, Kernel};
    use crate::spectral::build_and_solve;
    use crate::stats::loglinear_slope;

    fn cfg1d() -> PathConfig {
        PathConfig {
            horizon: 1.0,
            n_slabs: 16,
            n_substeps: 2,
            mass: 1.0,
            dim: 1,
            brownian_time_cap: Some(1e9),
        }
    }

    #[test]
    fn free_element_matches_kernel_convolution() {
        let f = GaussianWindow { center: vec![0.0], width: 0.7, amp: 1.0 };
        let g = GaussianWindow { center: vec![0.4], width: 0.9, amp: 1.0 };
        let kernel = Kernel::new(1.0, 1.0, 1).unwrap();
        let oracle = free_matrix_element(&kernel, &f, &g).unwrap();
        let (est, acct) = semigroup_element(
            &|x| f.eval(x),
            &|x| g.eval(x),
            &PotentialSpec::Zero,
            &cfg1d(),
            &XBox::symmetric(8.0, 1),
            60_000,
            3,
        )
        .unwrap();
        assert_eq!(acct.n_capped, 0);
        let tol = (3.0 * est.std_error).max(0.02 * oracle.abs());
        assert!((est.mean - oracle).abs() < tol, "{} vs {oracle}", est.mean);
    }

    #[test]
    fn short_time_element_is_overlap() {
        let f = GaussianWindow { center: vec![0.0], width: 0.8, amp: 1.0 };
        let g = GaussianWindow { center: vec![0.2], width: 0.6, amp: 1.0 };
        let cfg = PathConfig { horizon: 1e-3, n_slabs: 4, ..cfg1d() };
        let (est, _) = semigroup_element(
            &|x| f.eval(x),
            &|x| g.eval(x),
            &PotentialSpec::SoftCoulomb { g: 0.5, a: 1.0 },
            &cfg,
            &XBox::symmetric(6.0, 1),
            60_000,
            5,
        )
        .unwrap();
        let overlap = f.overlap(&g);
        assert!(est.sigma_to(overlap) < 3.5, "{} vs {overlap}", est.mean);
    }

    #[test]
    fn element_symmetric_under_window_swap() {
        let f = GaussianWindow { center: vec![-0.5], width: 0.6, amp: 1.0 };
        let g = GaussianWindow { center: vec![0.7], width: 0.9, amp: 1.0 };
        let spec = PotentialSpec::SoftCoulomb { g: 0.5, a: 1.0 };
        let run = |a: &GaussianWindow, b: &GaussianWindow, seed| {
            semigroup_element(
                &|x| a.eval(x),
                &|x| b.eval(x),
                &spec,
                &cfg1d(),
                &XBox::symmetric(7.0, 1),
                50_000,
                seed,
            )
            .unwrap()
            .0
        };
        let fg = run(&f, &g, 7);
        let gf = run(&g, &f, 8);
        assert!(fg.sigma_distance(&gf) < 3.0);
    }

    #[test]
    fn apply_probability_and_constant_factorization() {
        // V = 0, f = 1: exactly 1 in expectation
        let (unit, _) = semigroup_apply(
            &PotentialSpec::Zero,
            &|_| 1.0,
            &[0.3],
            &cfg1d(),
            2000,
            9,
        )
        .unwrap();
        assert_eq!(unit.mean, 1.0);
        assert_eq!(unit.std_error, 0.0);

        // constant V factorizes exactly per sample under coupled seeds
        let c = 0.37;
        let shifted = PotentialSpec::SquareWell { depth: -c, width: f64::INFINITY };
        let f = GaussianWindow { center: vec![0.0], width: 1.0, amp: 1.0 };
        let (with_const, _) =
            semigroup_apply(&shifted, &|x| f.eval(x), &[0.1], &cfg1d(), 20_000, 10).unwrap();
        let (free, _) = semigroup_apply(
            &PotentialSpec::Zero,
            &|x| f.eval(x),
            &[0.1],
            &cfg1d(),
            20_000,
            10,
        )
        .unwrap();
        let expected = (-c * 1.0f64).exp() * free.mean;
        assert!(
            (with_const.mean - expected).abs() < 1e-12 * expected.abs(),
            "{} vs {expected}",
            with_const.mean
        );
    }

    #[test]
    fn chapman_two_stage_agrees() {
        // stage the half-time semigroup twice with independent randomness
        let spec = PotentialSpec::SoftCoulomb { g: 0.5, a: 1.0 };
        let f = GaussianWindow { center: vec![0.0], width: 1.0, amp: 1.0 };
        let x0 = [0.5];
        let full_cfg = cfg1d();
        let (direct, _) =
            semigroup_apply(&spec, &|x| f.eval(x), &x0, &full_cfg, 60_000, 11).unwrap();

        let half_cfg = PathConfig { horizon: 0.5, n_slabs: 8, ..cfg1d() };
        let n = 60_000usize;
        let seed = salted_seed(11, "chapman");
        let vals: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut stream = derive_stream(seed, i as u64);
                let first = sample_path(&half_cfg, Branch::Plus, &x0, &mut stream).unwrap();
                let w1 =
                    (-first.integrate_potential_branch(false, &|y| spec.evaluate(y))).exp();
                let mid = first.end_plus().to_vec();
                let second = sample_path(&half_cfg, Branch::Plus, &mid, &mut stream).unwrap();
                let w2 =
                    (-second.integrate_potential_branch(false, &|y| spec.evaluate(y))).exp();
                w1 * w2 * f.eval(second.end_plus())
            })
            .collect();
        let staged = Estimate::from_values(&vals, 11);
        assert!(direct.sigma_distance(&staged) < 3.0, "{} vs {}", direct.mean, staged.mean);
    }

    #[test]
    fn per_sample_weights_nonnegative() {
        // nonnegative windows give nonnegative sample values; check via the
        // estimate of an indicator-weighted element
        let f = GaussianWindow { center: vec![0.0], width: 1.0, amp: 1.0 };
        let (est, _) = semigroup_element(
            &|x| f.eval(x),
            &|x| f.eval(x),
            &PotentialSpec::Harmonic { omega0: 0.5 },
            &cfg1d(),
            &XBox::symmetric(5.0, 1),
            5000,
            13,
        )
        .unwrap();
        assert!(est.mean > 0.0);
    }

    #[test]
    fn ground_energy_free_matches_kernel_prediction() {
        // With V = 0 the reading at finite t is the window's free value
        // -(1/dt) log(Z_{t+dt}/Z_t) with Z_t a kernel convolution; it decays
        // toward inf spec = 0 as t grows. Check both against the quadrature
        // oracle.
        let window = GaussianWindow { center: vec![0.0], width: 1.5, amp: 1.0 };
        let dt = 0.5;
        let readings = ground_energy_estimate(
            &PotentialSpec::Zero,
            &|x| window.eval(x),
            &PathConfig { n_slabs: 8, ..cfg1d() },
            &XBox::symmetric(8.0, 1),
            &[1.0, 2.0],
            dt,
            40_000,
            15,
        )
        .unwrap();
        let z = |t: f64| {
            let k = Kernel::new(t, 1.0, 1).unwrap();
            free_matrix_element(&k, &window, &window).unwrap()
        };
        let mut prev = f64::INFINITY;
        for r in &readings {
            let oracle = -(z(r.t + dt) / z(r.t)).ln() / dt;
            assert!(
                (r.estimate.mean - oracle).abs() < 3.0 * r.estimate.std_error,
                "t={}: {} vs oracle {oracle}",
                r.t,
                r.estimate.mean
            );
            assert!(oracle > 0.0 && oracle < prev);
            prev = oracle;
        }
    }

    #[test]
    fn martingale_flat_for_harmonic_oracle() {
        let spec = PotentialSpec::Harmonic { omega0: 0.5 };
        let sol = &build_and_solve(14.0, 512, 1.0, &spec, 1).unwrap()[0];
        for x in [0.0, 1.0] {
            let (ests, acct) = martingale_deviation(
                sol,
                &spec,
                x,
                &[0.5, 1.0, 2.0],
                &PathConfig { n_slabs: 8, ..cfg1d() },
                30_000,
                17,
            )
            .unwrap();
            assert!(acct.rejection_fraction() < 0.01);
            let flat = flatness_statistic(&ests);
            assert!(flat < 3.0, "x={x}: flatness {flat}, {ests:?}");
            let target = sol.evaluate(x).unwrap();
            for e in &ests {
                assert!(e.sigma_to(target) < 3.5, "x={x}: {} vs {target}", e.mean);
            }
        }
    }

    #[test]
    fn falloff_confining_monotone() {
        let spec = PotentialSpec::Harmonic { omega0: 0.5 };
        let sol = &build_and_solve(14.0, 512, 1.0, &spec, 1).unwrap()[0];
        let cfg = PathConfig { horizon: 3.0, n_slabs: 48, ..cfg1d() };
        let (ests, _) = falloff_envelope(
            &spec,
            sol.energy,
            &cfg,
            &[3.0, 6.0],
            StoppingRule::ExitBall { factor: 1.5 },
            20_000,
            19,
        )
        .unwrap();
        let hi = &ests[0];
        let lo = &ests[1];
        assert!(
            lo.mean + 3.0 * lo.std_error < hi.mean,
            "envelope not strictly decreasing: {} vs {}",
            hi.mean,
            lo.mean
        );
    }

    #[test]
    fn falloff_exponential_rate_at_positive_mass() {
        let spec = PotentialSpec::SoftCoulomb { g: 2.0, a: 0.5 };
        let sol = &build_and_solve(40.0, 2048, 1.0, &spec, 1).unwrap()[0];
        let cfg = PathConfig { horizon: 12.0, n_slabs: 96, ..cfg1d() };
        let xs = [2.0, 2.8, 3.6, 4.4, 5.2, 6.0];
        let (ests, _) = falloff_envelope(
            &spec,
            sol.energy,
            &cfg,
            &xs,
            StoppingRule::EntryBall { radius: 1.0 },
            30_000,
            21,
        )
        .unwrap();
        let ys: Vec<f64> = ests.iter().map(|e| e.mean).collect();
        let (slope, r2) = loglinear_slope(&xs, &ys);
        assert!(slope < 0.0 && r2 > 0.98, "slope {slope} r2 {r2} ys {ys:?}");
    }
}
