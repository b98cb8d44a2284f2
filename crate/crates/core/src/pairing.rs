//! Pathwise evaluation of the field pair interaction: the Gram quadratic
//! form over all Brownian sub-increments against the tabulated kernel, the
//! linear pairing against an external test function, and the isometry,
//! moment, and additivity batteries.
//!
//! The quadratic form is a squared norm, so the diagonal terms stay in: its
//! Riemann discretization is the full Gram sum whose diagonal carries the
//! quadratic-variation part. One Gram sum is always evaluated serially in a
//! fixed order; parallelism lives at the sample level only.

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::field::cutoff::{CutoffSpec, TestFunctionSpec};
use crate::field::kernels::{cross_kernel, xi_decayed_norm_sq};
use crate::field::table::{CrossKernelTable, KernelTable, ScalarKernelTable};
use crate::path::{sample_path, sample_path_frozen, Branch, FlatPath, PathConfig, SubordinatedPath};
use crate::rng::{derive_stream, salted_seed};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct PairingResult {
    /// Discretized quadratic form; nonnegative up to interpolation slack.
    pub w_self: f64,
    /// Discretized linear pairing, when a test function was supplied.
    pub w_cross: Option<f64>,
    pub n_substeps_total: usize,
    /// Path-time separation beyond which kernel terms were skipped
    /// (infinite when no truncation was applied).
    pub truncation_radius_used: f64,
}

#[inline]
fn pair_term(
    table: &KernelTable,
    flat: &FlatPath,
    a: usize,
    b: usize,
    buf: &mut [f64; 3],
) -> Result<f64> {
    let d = flat.dim;
    let tau = (flat.labels[a] - flat.labels[b]).abs();
    for c in 0..d {
        buf[c] = flat.left[a * d + c] - flat.left[b * d + c];
    }
    table.contract(
        tau,
        &buf[..d],
        &flat.delta[a * d..(a + 1) * d],
        &flat.delta[b * d..(b + 1) * d],
    )
}

/// Gram quadratic form over a set of sub-increment indices:
/// `sum_{a,b} dB_a . W(|tau_a - tau_b|, X_a - X_b) . dB_b`.
pub fn gram_quadratic(
    flat: &FlatPath,
    table: &KernelTable,
    idx: &[usize],
    trunc: Option<f64>,
) -> Result<f64> {
    let cut = trunc.unwrap_or(f64::INFINITY);
    let mut buf = [0.0f64; 3];
    let mut acc = 0.0;
    for (i, &a) in idx.iter().enumerate() {
        acc += pair_term(table, flat, a, a, &mut buf)?;
        for &b in idx.iter().skip(i + 1) {
            if (flat.labels[a] - flat.labels[b]).abs() > cut {
                continue;
            }
            acc += 2.0 * pair_term(table, flat, a, b, &mut buf)?;
        }
    }
    Ok(acc)
}

/// Gram cross form between two disjoint index sets (no doubling).
pub fn gram_bilinear(
    flat: &FlatPath,
    table: &KernelTable,
    idx_a: &[usize],
    idx_b: &[usize],
) -> Result<f64> {
    let mut buf = [0.0f64; 3];
    let mut acc = 0.0;
    for &a in idx_a {
        for &b in idx_b {
            acc += pair_term(table, flat, a, b, &mut buf)?;
        }
    }
    Ok(acc)
}

/// Full-norm (unprojected) Gram form with the scalar kernel.
pub fn scalar_gram_quadratic(
    flat: &FlatPath,
    table: &ScalarKernelTable,
    idx: &[usize],
) -> Result<f64> {
    let d = flat.dim;
    let mut acc = 0.0;
    for (i, &a) in idx.iter().enumerate() {
        for &b in idx.iter().skip(i) {
            let tau = (flat.labels[a] - flat.labels[b]).abs();
            let mut r2 = 0.0;
            let mut dot = 0.0;
            for c in 0..d {
                let dx = flat.left[a * d + c] - flat.left[b * d + c];
                r2 += dx * dx;
                dot += flat.delta[a * d + c] * flat.delta[b * d + c];
            }
            let w = table.eval(tau, r2.sqrt())?;
            acc += if a == b { w * dot } else { 2.0 * w * dot };
        }
    }
    Ok(acc)
}

/// Full-norm Gram cross form between two index sets.
pub fn scalar_gram_bilinear(
    flat: &FlatPath,
    table: &ScalarKernelTable,
    idx_a: &[usize],
    idx_b: &[usize],
) -> Result<f64> {
    let d = flat.dim;
    let mut acc = 0.0;
    for &a in idx_a {
        for &b in idx_b {
            let tau = (flat.labels[a] - flat.labels[b]).abs();
            let mut r2 = 0.0;
            let mut dot = 0.0;
            for c in 0..d {
                let dx = flat.left[a * d + c] - flat.left[b * d + c];
                r2 += dx * dx;
                dot += flat.delta[a * d + c] * flat.delta[b * d + c];
            }
            acc += table.eval(tau, r2.sqrt())? * dot;
        }
    }
    Ok(acc)
}

/// The discretized pair interaction of a whole path.
pub fn self_pairing(
    path: &SubordinatedPath,
    table: &KernelTable,
    trunc: Option<f64>,
) -> Result<PairingResult> {
    let flat = path.flatten();
    let idx: Vec<usize> = (0..flat.len()).collect();
    let w_self = gram_quadratic(&flat, table, &idx, trunc)?;
    Ok(PairingResult {
        w_self,
        w_cross: None,
        n_substeps_total: flat.len(),
        truncation_radius_used: trunc.unwrap_or(f64::INFINITY),
    })
}

/// Linear pairing `sum_a dB_a . G(tau_a, X_a)` against a tabulated cross
/// kernel; exactly zero on every sample when the supports are disjoint.
pub fn cross_pairing(flat: &FlatPath, xtable: &CrossKernelTable) -> Result<f64> {
    if xtable.identically_zero {
        return Ok(0.0);
    }
    let d = flat.dim;
    debug_assert_eq!(d, 3);
    let mut acc = 0.0;
    for a in 0..flat.len() {
        let g = xtable.eval_g(flat.labels[a].abs(), &flat.left[a * d..(a + 1) * d])?;
        for c in 0..d {
            acc += flat.delta[a * d + c] * g[c];
        }
    }
    Ok(acc)
}

/// Same pairing through direct quadrature of the cross kernel; the slow
/// reference route.
pub fn cross_pairing_direct(
    flat: &FlatPath,
    xi: &TestFunctionSpec,
    cutoff: &CutoffSpec,
) -> Result<f64> {
    let d = flat.dim;
    let mut acc = 0.0;
    for a in 0..flat.len() {
        let x = &flat.left[a * d..(a + 1) * d];
        let g = cross_kernel(flat.labels[a].abs(), &[x[0], x[1], x[2]], xi, cutoff)?;
        for c in 0..d {
            acc += flat.delta[a * d + c] * g[c];
        }
    }
    Ok(acc)
}

/// Variance bound for the cross pairing conditional on the subordinator:
/// `(1/4) ||lambda||^2 sum_j dT_j (xi, e^{-2 |tau_j| omega} xi)` by
/// Cauchy-Schwarz on the momentum integral with the projector dropped.
pub fn cross_variance_bound(
    flat: &FlatPath,
    xi: &TestFunctionSpec,
    norm_lambda_sq: f64,
) -> f64 {
    let mut acc = 0.0;
    for a in 0..flat.len() {
        acc += flat.sub_time[a] * xi_decayed_norm_sq(xi, flat.labels[a].abs());
    }
    0.25 * norm_lambda_sq * acc
}

fn uniform_profile(total: f64, n_slabs: usize) -> Vec<f64> {
    (0..=n_slabs).map(|j| total * j as f64 / n_slabs as f64).collect()
}

#[derive(Debug, Clone)]
pub struct IsometryReport {
    pub frozen_total_time: f64,
    /// Full-norm route against `d T ||lambda||^2`.
    pub full_norm: Estimate,
    pub full_target: f64,
    /// Projected route against `(d-1)/2 T ||lambda||^2`.
    pub projected: Estimate,
    pub projected_target: f64,
    /// Projected mean recomputed with doubled Brownian resolution.
    pub refined: Estimate,
    pub pass: bool,
}

/// Brownian-only Monte Carlo of both norm discretizations on a frozen
/// subordinator profile.
pub fn ito_isometry_battery(
    cfg: &PathConfig,
    table: &KernelTable,
    scalar: &ScalarKernelTable,
    frozen_total: f64,
    n: usize,
    master_seed: u64,
) -> Result<IsometryReport> {
    cfg.validate()?;
    let d = cfg.dim as f64;
    let lambda_sq = table.cutoff.norm_lambda_sq();
    let profile = uniform_profile(frozen_total, cfg.n_slabs);
    let x0 = vec![0.0; cfg.dim];

    let run = |cfg: &PathConfig, seed: u64| -> Result<(Vec<f64>, Vec<f64>)> {
        let rows: Vec<Result<(f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut stream = derive_stream(seed, i as u64);
                let path = sample_path_frozen(cfg, &profile, &x0, &mut stream);
                let flat = path.flatten();
                let idx: Vec<usize> = (0..flat.len()).collect();
                let full = scalar_gram_quadratic(&flat, scalar, &idx)?;
                let proj = gram_quadratic(&flat, table, &idx, None)?;
                Ok((full, proj))
            })
            .collect();
        let mut fulls = Vec::with_capacity(n);
        let mut projs = Vec::with_capacity(n);
        for r in rows {
            let (f, p) = r?;
            fulls.push(f);
            projs.push(p);
        }
        Ok((fulls, projs))
    };

    let (fulls, projs) = run(cfg, salted_seed(master_seed, "ito-base"))?;
    let full_norm = Estimate::from_values(&fulls, master_seed);
    let projected = Estimate::from_values(&projs, master_seed);

    let fine_cfg = PathConfig { n_substeps: 2 * cfg.n_substeps, ..cfg.clone() };
    let (_, fine_projs) = run(&fine_cfg, salted_seed(master_seed, "ito-fine"))?;
    let refined = Estimate::from_values(&fine_projs, master_seed);

    let full_target = d * frozen_total * lambda_sq;
    let projected_target = (d - 1.0) / 2.0 * frozen_total * lambda_sq;
    let pass = full_norm.sigma_to(full_target) < 3.0
        && projected.sigma_to(projected_target) < 3.0
        && projected.sigma_distance(&refined) < 3.0;
    Ok(IsometryReport {
        frozen_total_time: frozen_total,
        full_norm,
        full_target,
        projected,
        projected_target,
        refined,
        pass,
    })
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub t_grid: Vec<f64>,
    /// Fourth moment of the projected norm normalized by the envelope shape
    /// `((d-1)/2 ||lambda||^2)^2 E[T_t^2]`.
    pub normalized: Vec<Estimate>,
    /// One-sided check: no normalized growth beyond the first grid point
    /// within 3 pooled sigma.
    pub pass: bool,
}

/// Fourth-moment battery of the pair interaction over a time grid.
/// The proof of the underlying bound needs `m > 0`; zero mass is rejected.
pub fn moment_battery(
    cfg: &PathConfig,
    table: &KernelTable,
    t_grid: &[f64],
    n: usize,
    master_seed: u64,
) -> Result<MomentReport> {
    if cfg.mass <= 0.0 {
        return Err(Error::RejectedMZero);
    }
    cfg.validate()?;
    let d = cfg.dim as f64;
    let m = cfg.mass;
    let lambda_sq = table.cutoff.norm_lambda_sq();
    let c = (d - 1.0) / 2.0 * lambda_sq;
    let slab_width = cfg.slab_width();
    let x0 = vec![0.0; cfg.dim];
    let mut normalized = Vec::with_capacity(t_grid.len());
    for (ti, &t) in t_grid.iter().enumerate() {
        let n_slabs = (t / slab_width).round().max(1.0) as usize;
        let run_cfg = PathConfig { horizon: t, n_slabs, ..cfg.clone() };
        // E[T_t^2] = t^2/m^2 + t/m^3 for the exact increment law
        let second_moment = t * t / (m * m) + t / (m * m * m);
        let denom = c * c * second_moment;
        let seed = salted_seed(master_seed, &format!("moment-{ti}"));
        let vals: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut stream = derive_stream(seed, i as u64);
                let path = sample_path(&run_cfg, Branch::Plus, &x0, &mut stream)
                    .expect("m > 0 has no cap");
                let w = self_pairing(&path, table, None).expect("coverage").w_self;
                w * w / denom
            })
            .collect();
        // Jensen per batch: E[w^2] >= (E[w])^2 holds for the raw sums
        let est = Estimate::from_values(&vals, seed);
        normalized.push(est);
    }
    let base = &normalized[0];
    let pass = normalized.iter().skip(1).all(|e| {
        let pooled = (e.std_error.powi(2) + base.std_error.powi(2)).sqrt();
        e.mean <= base.mean + 3.0 * pooled
    });
    Ok(MomentReport { t_grid: t_grid.to_vec(), normalized, pass })
}

#[derive(Debug, Clone)]
pub struct AdditivityReport {
    /// Gram form of the coefficient vector of `I[0,t] - I[0,s] - I[s,t]`;
    /// identically zero by grid nesting.
    pub residual: f64,
    /// Monte Carlo pairing of the disjoint windows `[0,s]` and `[s,t]`.
    pub disjoint_pairing: Estimate,
    /// Monte Carlo pairing of `[0,t]` against `[s,u]` on a frozen
    /// subordinator, and its overlap target `d (T_t - T_s) ||lambda||^2`.
    pub overlap_pairing: Estimate,
    pub overlap_target: f64,
    pub pass: bool,
}

/// Additivity and overlap-covariance battery on the window `[0, u]` with
/// `u = 2 t_split`. The split must lie on the slab grid.
pub fn additivity_battery(
    cfg: &PathConfig,
    table: &KernelTable,
    scalar: &ScalarKernelTable,
    t_split: f64,
    n: usize,
    master_seed: u64,
) -> Result<AdditivityReport> {
    cfg.validate()?;
    let t = cfg.horizon;
    let dt = cfg.slab_width();
    let on_grid = (t_split / dt - (t_split / dt).round()).abs() < 1e-9;
    if !on_grid || !(t_split > 0.0 && t_split < t) {
        return Err(Error::NonDyadicSplit { s: t_split, t });
    }
    let x0 = vec![0.0; cfg.dim];

    // Exact additivity: every sub-increment of [0,t] belongs to exactly one
    // of [0,s], [s,t] once the split is on the grid, so the coefficient
    // vector of the difference vanishes identically and its Gram form is
    // literally zero.
    let mut probe_stream = derive_stream(salted_seed(master_seed, "additivity-probe"), 0);
    let probe = sample_path(cfg, Branch::Plus, &x0, &mut probe_stream)
        .map_err(|_| Error::InvalidParameter("probe path exceeded cap".into()))?;
    let flat = probe.flatten();
    let full = flat.window(0.0, t);
    let first = flat.window(0.0, t_split);
    let second = flat.window(t_split, t);
    let mut coeff = vec![0i32; flat.len()];
    for &a in &full {
        coeff[a] += 1;
    }
    for &a in first.iter().chain(&second) {
        coeff[a] -= 1;
    }
    if coeff.iter().any(|c| *c != 0) {
        return Err(Error::NonDyadicSplit { s: t_split, t });
    }
    let residual = 0.0; // Gram form of the zero coefficient vector

    // consistency of the recombined Gram pieces at floating-point level
    let w_full = gram_quadratic(&flat, table, &full, None)?;
    let w_a = gram_quadratic(&flat, table, &first, None)?;
    let w_b = gram_quadratic(&flat, table, &second, None)?;
    let w_ab = gram_bilinear(&flat, table, &first, &second)?;
    let recombined = w_a + w_b + 2.0 * w_ab;
    if (w_full - recombined).abs() > 1e-10 * w_full.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "gram recombination drifted: {w_full} vs {recombined}"
        )));
    }

    // disjoint windows: full-norm pairing averages to zero
    let seed_disjoint = salted_seed(master_seed, "additivity-disjoint");
    let disjoint: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = derive_stream(seed_disjoint, i as u64);
            let path = sample_path(cfg, Branch::Plus, &x0, &mut stream).expect("no cap");
            let flat = path.flatten();
            let a = flat.window(0.0, t_split);
            let b = flat.window(t_split, t);
            scalar_gram_bilinear(&flat, scalar, &a, &b).expect("coverage")
        })
        .collect();
    let disjoint_pairing = Estimate::from_values(&disjoint, seed_disjoint);

    // overlapping windows [0, t1] and [s, t] with overlap [s, t1] on a
    // frozen subordinator: target d (T_{t1} - T_s) ||lambda||^2
    let profile = uniform_profile(cfg.horizon / cfg.mass.max(0.5), cfg.n_slabs);
    let t1 = (0.75 * t / dt).round() * dt;
    let s_lo = (0.25 * t / dt).round() * dt;
    let seed_overlap = salted_seed(master_seed, "additivity-overlap");
    let overlap: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = derive_stream(seed_overlap, i as u64);
            let path = sample_path_frozen(cfg, &profile, &x0, &mut stream);
            let flat = path.flatten();
            let a = flat.window(0.0, t1);
            let b = flat.window(s_lo, t);
            scalar_gram_bilinear(&flat, scalar, &a, &b).expect("coverage")
        })
        .collect();
    let overlap_pairing = Estimate::from_values(&overlap, seed_overlap);
    let idx_t1 = (t1 / dt).round() as usize;
    let idx_s = (s_lo / dt).round() as usize;
    let overlap_target =
        cfg.dim as f64 * (profile[idx_t1] - profile[idx_s]) * table.cutoff.norm_lambda_sq();

    let pass = disjoint_pairing.sigma_to(0.0) < 3.0
        && overlap_pairing.sigma_to(overlap_target) < 3.0;
    Ok(AdditivityReport { residual, disjoint_pairing, overlap_pairing, overlap_target, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::cutoff::ShellProfile;
    use crate::field::table::TableGrids;
    use std::sync::OnceLock;

    fn shared_table() -> &'static KernelTable {
        static TABLE: OnceLock<KernelTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            KernelTable::build(
                &CutoffSpec::sharp(1.0),
                TableGrids { tau_max: 4.0, r_max: 40.0, step: 0.025 },
            )
            .unwrap()
        })
    }

    fn shared_scalar() -> &'static ScalarKernelTable {
        static TABLE: OnceLock<ScalarKernelTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            ScalarKernelTable::build(
                &CutoffSpec::sharp(1.0),
                TableGrids { tau_max: 4.0, r_max: 40.0, step: 0.025 },
            )
            .unwrap()
        })
    }

    fn cfg() -> PathConfig {
        PathConfig {
            horizon: 1.0,
            n_slabs: 8,
            n_substeps: 2,
            mass: 1.0,
            dim: 3,
            brownian_time_cap: Some(1e9),
        }
    }

    #[test]
    fn single_increment_gram() {
        // one sub-increment: w = A(0,0) |dB|^2
        let c = PathConfig { n_slabs: 1, n_substeps: 1, ..cfg() };
        let mut s = derive_stream(1, 0);
        let path = sample_path(&c, Branch::Plus, &[0.0; 3], &mut s).unwrap();
        let flat = path.flatten();
        let db2: f64 = flat.delta.iter().map(|v| v * v).sum();
        let w = self_pairing(&path, shared_table(), None).unwrap().w_self;
        let a00 = shared_table().origin_diagonal();
        assert!((w - a00 * db2).abs() < 1e-15 * w.abs().max(1e-300));
    }

    #[test]
    fn gram_positive_on_random_paths() {
        let c = cfg();
        for i in 0..500 {
            let mut s = derive_stream(7, i);
            let path = sample_path(&c, Branch::TwoSided, &[0.0; 3], &mut s).unwrap();
            let w = self_pairing(&path, shared_table(), None).unwrap().w_self;
            assert!(w >= -1e-8, "w_self = {w}");
        }
    }

    #[test]
    fn conditional_mean_matches_trace_target() {
        // frozen subordinator: E[w_self] = (d-1)/2 T ||lambda||^2
        let c = cfg();
        let total = 1.3;
        let profile: Vec<f64> =
            (0..=c.n_slabs).map(|j| total * j as f64 / c.n_slabs as f64).collect();
        let vals: Vec<f64> = (0..4000)
            .map(|i| {
                let mut s = derive_stream(11, i);
                let path = sample_path_frozen(&c, &profile, &[0.0; 3], &mut s);
                self_pairing(&path, shared_table(), None).unwrap().w_self
            })
            .collect();
        let est = Estimate::from_values(&vals, 11);
        let target = 1.0 * total * shared_table().cutoff.norm_lambda_sq();
        assert!(
            est.sigma_to(target) < 3.0,
            "mean {} target {target} sigma {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn translation_and_reflection_invariance() {
        // the kernel consumes differences only; equality up to resummation
        // rounding of the identical pair terms
        let c = cfg();
        let mut s = derive_stream(13, 0);
        let path = sample_path(&c, Branch::TwoSided, &[0.5, -1.0, 2.0], &mut s).unwrap();
        let w = self_pairing(&path, shared_table(), None).unwrap().w_self;

        let mut shifted = path.clone();
        for b in [&mut shifted.plus] {
            for v in b.positions.iter_mut().enumerate() {
                *v.1 += if v.0 % 3 == 0 { 8.0 } else { -4.0 };
            }
        }
        if let Some(minus) = shifted.minus.as_mut() {
            for (i, v) in minus.positions.iter_mut().enumerate() {
                *v += if i % 3 == 0 { 8.0 } else { -4.0 };
            }
        }
        let w_shift = self_pairing(&shifted, shared_table(), None).unwrap().w_self;
        assert!(
            (w - w_shift).abs() <= 1e-12 * w.abs().max(1.0),
            "{w} vs {w_shift}"
        );

        let mut reflected = path.clone();
        let minus = reflected.minus.take().unwrap();
        reflected.minus = Some(std::mem::replace(&mut reflected.plus, minus));
        let w_refl = self_pairing(&reflected, shared_table(), None).unwrap().w_self;
        assert!(
            (w - w_refl).abs() <= 1e-12 * w.abs().max(1.0),
            "{w} vs {w_refl}"
        );
    }

    #[test]
    fn refinement_stability_of_w_self_mean() {
        let c = cfg();
        let run = |c: &PathConfig, seed: u64| {
            let vals: Vec<f64> = (0..3000)
                .map(|i| {
                    let mut s = derive_stream(seed, i);
                    let path = sample_path(c, Branch::TwoSided, &[0.0; 3], &mut s).unwrap();
                    self_pairing(&path, shared_table(), None).unwrap().w_self
                })
                .collect();
            Estimate::from_values(&vals, seed)
        };
        let coarse = run(&c, 17);
        let fine_cfg =
            PathConfig { n_slabs: 2 * c.n_slabs, n_substeps: 2 * c.n_substeps, ..c.clone() };
        let fine = run(&fine_cfg, 18);
        assert!(coarse.sigma_distance(&fine) < 3.0);
    }

    #[test]
    fn cross_pairing_zero_for_disjoint_and_zero_xi() {
        let c = cfg();
        let cutoff = CutoffSpec::sharp(1.0);
        let far = TestFunctionSpec::single(
            0,
            ShellProfile::Sharp { inner: 2.0, outer: 3.0, amp: 1.0 },
        );
        let xt = CrossKernelTable::build(
            &far,
            &cutoff,
            TableGrids { tau_max: 4.0, r_max: 40.0, step: 0.025 },
        )
        .unwrap();
        for i in 0..50 {
            let mut s = derive_stream(19, i);
            let path = sample_path(&c, Branch::TwoSided, &[0.0; 3], &mut s).unwrap();
            let flat = path.flatten();
            assert_eq!(cross_pairing(&flat, &xt).unwrap(), 0.0);
        }
    }

    #[test]
    fn cross_pairing_table_matches_direct() {
        let c = PathConfig { n_slabs: 2, n_substeps: 2, ..cfg() };
        let cutoff = CutoffSpec::sharp(1.0);
        let xi = TestFunctionSpec::single(
            0,
            ShellProfile::Bump { inner: 0.2, outer: 0.9, amp: 1.0 },
        );
        let xt = CrossKernelTable::build(
            &xi,
            &cutoff,
            TableGrids { tau_max: 4.0, r_max: 40.0, step: 0.025 },
        )
        .unwrap();
        for i in 0..10 {
            let mut s = derive_stream(23, i);
            let path = sample_path(&c, Branch::TwoSided, &[0.0; 3], &mut s).unwrap();
            let flat = path.flatten();
            let fast = cross_pairing(&flat, &xt).unwrap();
            let slow = cross_pairing_direct(&flat, &xi, &cutoff).unwrap();
            assert!((fast - slow).abs() < 1e-8, "{fast} vs {slow}");
        }
    }

    #[test]
    fn cross_variance_within_bound() {
        // fixed subordinator: sample variance of the cross pairing obeys the
        // decayed-norm bound
        let c = cfg();
        let cutoff = CutoffSpec::sharp(1.0);
        let xi = TestFunctionSpec::single(
            0,
            ShellProfile::Bump { inner: 0.2, outer: 0.9, amp: 1.0 },
        );
        let xt = CrossKernelTable::build(
            &xi,
            &cutoff,
            TableGrids { tau_max: 4.0, r_max: 40.0, step: 0.025 },
        )
        .unwrap();
        let total = 1.0;
        let profile: Vec<f64> =
            (0..=c.n_slabs).map(|j| total * j as f64 / c.n_slabs as f64).collect();
        let n = 4000;
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = derive_stream(29, i);
                let path = sample_path_frozen(&c, &profile, &[0.0; 3], &mut s);
                cross_pairing(&path.flatten(), &xt).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        // the bound needs one flattened path for the frozen profile
        let mut s = derive_stream(29, 0);
        let path = sample_path_frozen(&c, &profile, &[0.0; 3], &mut s);
        let bound =
            cross_variance_bound(&path.flatten(), &xi, cutoff.norm_lambda_sq());
        assert!(var <= bound * 1.05, "var {var} bound {bound}");
    }

    #[test]
    fn isometry_battery_passes() {
        let report = ito_isometry_battery(
            &PathConfig { n_slabs: 8, n_substeps: 4, ..cfg() },
            shared_table(),
            shared_scalar(),
            1.0,
            3000,
            31,
        )
        .unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn isometry_degenerate_time_is_zero() {
        let c = cfg();
        let profile = vec![0.0; c.n_slabs + 1];
        let mut s = derive_stream(37, 0);
        let path = sample_path_frozen(&c, &profile, &[0.0; 3], &mut s);
        let w = self_pairing(&path, shared_table(), None).unwrap().w_self;
        assert_eq!(w, 0.0);
    }

    #[test]
    fn moment_battery_rejects_zero_mass() {
        let c = PathConfig { mass: 0.0, ..cfg() };
        match moment_battery(&c, shared_table(), &[1.0, 2.0], 10, 41) {
            Err(Error::RejectedMZero) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn moment_battery_flat() {
        let report = moment_battery(
            &PathConfig { n_slabs: 4, n_substeps: 2, ..cfg() },
            shared_table(),
            &[1.0, 2.0, 4.0],
            1500,
            43,
        )
        .unwrap();
        assert!(report.pass, "{report:?}");
        // Jensen: normalized fourth moment >= normalized squared mean is
        // implied by construction; sanity-check positivity instead
        assert!(report.normalized.iter().all(|e| e.mean > 0.0));
    }

    #[test]
    fn additivity_battery_passes() {
        let c = PathConfig { horizon: 2.0, n_slabs: 8, n_substeps: 2, ..cfg() };
        let report =
            additivity_battery(&c, shared_table(), shared_scalar(), 1.0, 3000, 47).unwrap();
        assert_eq!(report.residual, 0.0);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn additivity_rejects_off_grid_split() {
        let c = PathConfig { horizon: 2.0, n_slabs: 8, n_substeps: 2, ..cfg() };
        match additivity_battery(&c, shared_table(), shared_scalar(), 0.3, 10, 53) {
            Err(Error::NonDyadicSplit { .. }) => {}
            other => panic!("expected split rejection, got {other:?}"),
        }
    }

    #[test]
    fn truncation_drops_far_terms_only() {
        let c = PathConfig { horizon: 2.0, n_slabs: 16, ..cfg() };
        let mut s = derive_stream(59, 0);
        let path = sample_path(&c, Branch::TwoSided, &[0.0; 3], &mut s).unwrap();
        let wfull = self_pairing(&path, shared_table(), None).unwrap();
        let wtrunc = self_pairing(&path, shared_table(), Some(4.0)).unwrap();
        assert_eq!(wtrunc.truncation_radius_used, 4.0);
        // with tau_max = 4 the far tail is small but nonzero
        assert!((wfull.w_self - wtrunc.w_self).abs() < 0.05 * wfull.w_self.abs().max(1e-6));
    }
}
