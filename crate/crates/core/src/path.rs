//! Discretized two-sided subordinated Brownian paths.
//!
//! A path carries a coarse path-time grid (slabs), one subordinator increment
//! per slab, and a Brownian sub-path over the realized random time inside
//! each slab. The two branches of a two-sided path are built from independent
//! draws of the same stream and both start at `x`.
//!
//! Brownian sub-step `a` inside slab `j` is labeled with the slab's path-time
//! endpoint nearer zero (branch-local left endpoint). On the minus branch the
//! label is negated, so path-time reflection is an exact relabeling symmetry
//! of every Gram sum built on these labels.

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::subordinator::sample_increment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
    TwoSided,
}

#[derive(Debug, Clone)]
pub struct PathConfig {
    /// Path-time horizon `t`; a two-sided path covers `[-t, t]`.
    pub horizon: f64,
    /// Coarse path-time steps per branch.
    pub n_slabs: usize,
    /// Brownian steps per slab.
    pub n_substeps: usize,
    pub mass: f64,
    pub dim: usize,
    /// Required when `mass == 0`: the subordinator has no mean there and the
    /// realized Brownian time must be capped.
    pub brownian_time_cap: Option<f64>,
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.n_slabs == 0 || self.n_substeps == 0 {
            return Err(Error::InvalidParameter("n_slabs and n_substeps must be >= 1".into()));
        }
        if self.mass < 0.0 {
            return Err(Error::InvalidParameter(format!("mass must be >= 0, got {}", self.mass)));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if self.mass == 0.0 && self.brownian_time_cap.is_none() {
            return Err(Error::InvalidParameter(
                "mass = 0 requires paths.brownian_time_cap (T_t has no mean at m = 0)".into(),
            ));
        }
        if let Some(cap) = self.brownian_time_cap {
            if !(cap > 0.0) {
                return Err(Error::InvalidParameter("brownian_time_cap must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn slab_width(&self) -> f64 {
        self.horizon / self.n_slabs as f64
    }

    /// Brownian sub-increments per branch.
    pub fn substeps_total(&self) -> usize {
        self.n_slabs * self.n_substeps
    }
}

/// One branch: cumulative subordinator values at slab boundaries and the
/// Brownian positions at every sub-time, flattened as `dim` doubles per node.
#[derive(Debug, Clone)]
pub struct BranchPath {
    /// `T_0 = 0 <= T_1 <= ... <= T_N`, length `n_slabs + 1`.
    pub subordinator: Vec<f64>,
    /// `(n_slabs * n_substeps + 1) * dim` values; node 0 is the start point.
    pub positions: Vec<f64>,
}

impl BranchPath {
    fn sample(cfg: &PathConfig, x: &[f64], stream: &mut RandomStream) -> BranchPath {
        let dt = cfg.slab_width();
        let mut subordinator = Vec::with_capacity(cfg.n_slabs + 1);
        subordinator.push(0.0);
        for _ in 0..cfg.n_slabs {
            let inc = sample_increment(dt, cfg.mass, stream);
            subordinator.push(subordinator.last().unwrap() + inc);
        }
        let nodes = cfg.substeps_total() + 1;
        let d = cfg.dim;
        let mut positions = Vec::with_capacity(nodes * d);
        positions.extend_from_slice(x);
        for j in 0..cfg.n_slabs {
            let slab_time = subordinator[j + 1] - subordinator[j];
            let step_sd = (slab_time / cfg.n_substeps as f64).sqrt();
            for _ in 0..cfg.n_substeps {
                let base = positions.len() - d;
                for c in 0..d {
                    let prev = positions[base + c];
                    positions.push(prev + step_sd * stream.normal());
                }
            }
        }
        BranchPath { subordinator, positions }
    }

    pub fn total_time(&self) -> f64 {
        *self.subordinator.last().unwrap()
    }

    /// Position at sub-node `a` (0 = start).
    pub fn node(&self, a: usize, dim: usize) -> &[f64] {
        &self.positions[a * dim..(a + 1) * dim]
    }

    /// Position at slab boundary `j` (path time `j * slab_width`).
    pub fn slab_node(&self, j: usize, n_substeps: usize, dim: usize) -> &[f64] {
        self.node(j * n_substeps, dim)
    }
}

#[derive(Debug, Clone)]
pub struct SubordinatedPath {
    pub branch: Branch,
    pub horizon: f64,
    pub n_slabs: usize,
    pub n_substeps: usize,
    pub dim: usize,
    pub start: Vec<f64>,
    pub plus: BranchPath,
    /// Present only for two-sided paths.
    pub minus: Option<BranchPath>,
}

impl SubordinatedPath {
    pub fn total_brownian_time(&self) -> f64 {
        self.plus.total_time() + self.minus.as_ref().map_or(0.0, |b| b.total_time())
    }

    pub fn slab_width(&self) -> f64 {
        self.horizon / self.n_slabs as f64
    }

    /// Signed slab label of Brownian sub-step `a` of a branch: the slab's
    /// path-time endpoint nearer zero, negated on the minus branch.
    pub fn slab_label(&self, minus: bool, a: usize) -> f64 {
        let j = a / self.n_substeps; // slab index, 0-based
        let label = j as f64 * self.slab_width();
        if minus || self.branch == Branch::Minus {
            -label
        } else {
            label
        }
    }

    /// Position at signed slab-grid path time `j * slab_width * sign`.
    pub fn position_at_slab(&self, signed_slab: i64) -> &[f64] {
        if signed_slab >= 0 && self.branch != Branch::Minus {
            self.plus.slab_node(signed_slab as usize, self.n_substeps, self.dim)
        } else if self.branch == Branch::Minus {
            self.plus.slab_node(signed_slab.unsigned_abs() as usize, self.n_substeps, self.dim)
        } else {
            self.minus
                .as_ref()
                .expect("minus branch requested on a one-sided path")
                .slab_node((-signed_slab) as usize, self.n_substeps, self.dim)
        }
    }

    /// Endpoint `X_t`.
    pub fn end_plus(&self) -> &[f64] {
        self.plus.node(self.n_slabs * self.n_substeps, self.dim)
    }

    /// Endpoint `X_{-t}` of a two-sided path.
    pub fn end_minus(&self) -> &[f64] {
        self.minus
            .as_ref()
            .expect("minus branch requested on a one-sided path")
            .node(self.n_slabs * self.n_substeps, self.dim)
    }

    /// Trapezoid rule for `\int V(X_s) ds` over one branch on the slab grid.
    pub fn integrate_potential_branch<V: Fn(&[f64]) -> f64>(&self, minus: bool, v: &V) -> f64 {
        let branch = if minus { self.minus.as_ref().unwrap() } else { &self.plus };
        let dt = self.slab_width();
        let mut acc = 0.0;
        let mut prev = v(branch.slab_node(0, self.n_substeps, self.dim));
        for j in 1..=self.n_slabs {
            let cur = v(branch.slab_node(j, self.n_substeps, self.dim));
            acc += 0.5 * dt * (prev + cur);
            prev = cur;
        }
        acc
    }

    /// `\int_{-t}^{t} V(X_s) ds` for a two-sided path, or `\int_0^t` for a
    /// one-sided one.
    pub fn integrate_potential<V: Fn(&[f64]) -> f64>(&self, v: &V) -> f64 {
        let plus = self.integrate_potential_branch(false, v);
        match &self.minus {
            Some(_) => plus + self.integrate_potential_branch(true, v),
            None => plus,
        }
    }

    /// All Brownian sub-increments of the path in a dense layout for Gram
    /// sums: signed labels, slab intervals, left-endpoint positions and
    /// increments.
    pub fn flatten(&self) -> FlatPath {
        let d = self.dim;
        let dt = self.slab_width();
        let per_branch = self.n_slabs * self.n_substeps;
        let n = if self.minus.is_some() { 2 * per_branch } else { per_branch };
        let mut labels = Vec::with_capacity(n);
        let mut slab_lo = Vec::with_capacity(n);
        let mut slab_hi = Vec::with_capacity(n);
        let mut sub_time = Vec::with_capacity(n);
        let mut left = Vec::with_capacity(n * d);
        let mut delta = Vec::with_capacity(n * d);
        let mut push_branch = |branch: &BranchPath, minus: bool| {
            let neg = minus || self.branch == Branch::Minus;
            for a in 0..per_branch {
                labels.push(self.slab_label(minus, a));
                let j = a / self.n_substeps;
                let (lo, hi) = if neg {
                    (-((j + 1) as f64) * dt, -(j as f64) * dt)
                } else {
                    (j as f64 * dt, (j + 1) as f64 * dt)
                };
                slab_lo.push(lo);
                slab_hi.push(hi);
                sub_time.push(
                    (branch.subordinator[j + 1] - branch.subordinator[j])
                        / self.n_substeps as f64,
                );
                let l = branch.node(a, d);
                let r = branch.node(a + 1, d);
                left.extend_from_slice(l);
                for c in 0..d {
                    delta.push(r[c] - l[c]);
                }
            }
        };
        if let Some(minus) = &self.minus {
            push_branch(minus, true);
        }
        push_branch(&self.plus, false);
        FlatPath { dim: d, labels, slab_lo, slab_hi, sub_time, left, delta }
    }
}

/// Dense per-sub-increment view of a path.
pub struct FlatPath {
    pub dim: usize,
    /// Signed path-time labels, one per sub-increment.
    pub labels: Vec<f64>,
    /// Signed path-time interval of the owning slab.
    pub slab_lo: Vec<f64>,
    pub slab_hi: Vec<f64>,
    /// Brownian time carried by the sub-increment.
    pub sub_time: Vec<f64>,
    /// Left-endpoint positions, `dim` per sub-increment.
    pub left: Vec<f64>,
    /// Brownian increments, `dim` per sub-increment.
    pub delta: Vec<f64>,
}

impl FlatPath {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indices of sub-increments whose slab lies inside `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Vec<usize> {
        let tol = 1e-9 * (hi - lo).abs().max(1.0);
        (0..self.len())
            .filter(|&a| self.slab_lo[a] >= lo - tol && self.slab_hi[a] <= hi + tol)
            .collect()
    }
}

/// Sample a path. `Err(CapExceeded)` flags samples whose realized Brownian
/// time exceeds the configured cap; callers count these for bias accounting.
pub fn sample_path(
    cfg: &PathConfig,
    branch: Branch,
    x: &[f64],
    stream: &mut RandomStream,
) -> Result<SubordinatedPath> {
    debug_assert_eq!(x.len(), cfg.dim);
    // A one-sided path (Plus or Minus) stores its single branch in `plus`;
    // Minus only flips the sign of the slab labels.
    let plus = BranchPath::sample(cfg, x, stream);
    let minus = if branch == Branch::TwoSided {
        Some(BranchPath::sample(cfg, x, stream))
    } else {
        None
    };
    let path = SubordinatedPath {
        branch,
        horizon: cfg.horizon,
        n_slabs: cfg.n_slabs,
        n_substeps: cfg.n_substeps,
        dim: cfg.dim,
        start: x.to_vec(),
        plus,
        minus,
    };
    if let Some(cap) = cfg.brownian_time_cap {
        let total = path.total_brownian_time();
        if total > cap {
            return Err(Error::CapExceeded { total, cap });
        }
    }
    Ok(path)
}

/// Build a path on a frozen subordinator profile (cumulative values at slab
/// boundaries), redrawing only the Brownian parts. Used by the isometry
/// batteries that condition on the random time.
pub fn sample_path_frozen(
    cfg: &PathConfig,
    subordinator: &[f64],
    x: &[f64],
    stream: &mut RandomStream,
) -> SubordinatedPath {
    assert_eq!(subordinator.len(), cfg.n_slabs + 1);
    let d = cfg.dim;
    let nodes = cfg.substeps_total() + 1;
    let mut positions = Vec::with_capacity(nodes * d);
    positions.extend_from_slice(x);
    for j in 0..cfg.n_slabs {
        let slab_time = subordinator[j + 1] - subordinator[j];
        let step_sd = (slab_time / cfg.n_substeps as f64).sqrt();
        for _ in 0..cfg.n_substeps {
            let base = positions.len() - d;
            for c in 0..d {
                let prev = positions[base + c];
                positions.push(prev + step_sd * stream.normal());
            }
        }
    }
    SubordinatedPath {
        branch: Branch::Plus,
        horizon: cfg.horizon,
        n_slabs: cfg.n_slabs,
        n_substeps: cfg.n_substeps,
        dim: cfg.dim,
        start: x.to_vec(),
        plus: BranchPath { subordinator: subordinator.to_vec(), positions },
        minus: None,
    }
}
