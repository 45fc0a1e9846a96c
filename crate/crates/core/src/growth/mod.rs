//! Biphasic Richards' growth dynamics.
//!
//! Each group `m` grows according to a generalised logistic law with shape
//! parameter `gamma`, intrinsic rate `alpha`, and a shared carrying capacity
//! `K`. For the first `t_d` years after the start of recovery the rate is
//! scaled by a factor `alpha_d`; afterwards growth reverts to the full rate.
//! The solution stays continuous at the change point even though the
//! derivative jumps there.

mod analytic;
mod rkf45;

pub use analytic::solve_analytic;
pub use rkf45::{integrate, SolverOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum-of-cover values within this distance of `K` have the competition
/// bracket clamped at zero from below, so roundoff at capacity cannot
/// produce spurious decay.
pub const CAPACITY_CLAMP: f64 = 1e-12;

/// Per-group growth parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    /// Intrinsic rate of cover increase (1/years).
    pub alpha: f64,
    /// Dimensionless shape parameter; 1 is logistic, the limit 0 is Gompertz.
    pub gamma: f64,
    /// Relative change point (years after the start of recovery).
    pub t_d: f64,
    /// Rate scale factor applied during the initial phase, in (0, 1].
    pub alpha_d: f64,
}

impl GroupParams {
    pub fn new(alpha: f64, gamma: f64, t_d: f64, alpha_d: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
        }
        if !(t_d.is_finite() && t_d >= 0.0) {
            return Err(Error::Domain(format!("t_d must be >= 0, got {t_d}")));
        }
        if !(alpha_d.is_finite() && alpha_d > 0.0 && alpha_d <= 1.0) {
            return Err(Error::Domain(format!("alpha_d must be in (0, 1], got {alpha_d}")));
        }
        Ok(Self { alpha, gamma, t_d, alpha_d })
    }
}

/// Full parameter set: an ordered list of group parameters plus the shared
/// carrying capacity. With two groups, group 1 is the fast-growing
/// Acroporidae family and group 2 all other hard corals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    groups: Vec<GroupParams>,
    k: f64,
}

impl GrowthParams {
    pub fn new(groups: Vec<GroupParams>, k: f64) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Domain("at least one group is required".into()));
        }
        if !(k.is_finite() && k > 0.0 && k <= 100.0) {
            return Err(Error::Domain(format!("K must be in (0, 100], got {k}")));
        }
        Ok(Self { groups, k })
    }

    pub fn single(group: GroupParams, k: f64) -> Result<Self> {
        Self::new(vec![group], k)
    }

    /// Rebuild from the flat vector `[alpha_1, gamma_1, t_d_1, alpha_d_1, ...]`.
    pub fn from_flat(theta: &[f64], k: f64) -> Result<Self> {
        if theta.is_empty() || theta.len() % 4 != 0 {
            return Err(Error::Dimension(format!(
                "flat parameter vector must have length 4*M, got {}",
                theta.len()
            )));
        }
        let groups = theta
            .chunks_exact(4)
            .map(|c| GroupParams::new(c[0], c[1], c[2], c[3]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups, k)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.groups.len());
        for g in &self.groups {
            out.extend_from_slice(&[g.alpha, g.gamma, g.t_d, g.alpha_d]);
        }
        out
    }

    pub fn groups(&self) -> &[GroupParams] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Absolute change points `t0 + t_d_m`, sorted, deduplicated, and
    /// restricted to the open interval `(t0, t_end)`.
    pub fn change_points(&self, t0: f64, t_end: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .groups
            .iter()
            .map(|g| t0 + g.t_d)
            .filter(|&t| t > t0 && t < t_end)
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }
}

/// Known initial condition: per-group cover at the start of recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub t0: f64,
    pub c0: Vec<f64>,
}

impl InitialState {
    pub fn new(t0: f64, c0: Vec<f64>) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::Domain("t0 must be finite".into()));
        }
        if c0.is_empty() || c0.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::Domain("all initial covers must be > 0".into()));
        }
        Ok(Self { t0, c0 })
    }

    /// Check shape and capacity constraints against a parameter set.
    pub fn validate_against(&self, params: &GrowthParams) -> Result<()> {
        if self.c0.len() != params.n_groups() {
            return Err(Error::Dimension(format!(
                "initial state has {} groups, parameters have {}",
                self.c0.len(),
                params.n_groups()
            )));
        }
        let total: f64 = self.c0.iter().sum();
        if total > params.k() {
            return Err(Error::Domain(format!(
                "initial cover sum {total} exceeds carrying capacity {}",
                params.k()
            )));
        }
        Ok(())
    }
}

/// Mean cover evaluated on a time grid, one row per time, one column per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionGrid {
    times: Vec<f64>,
    cover: Vec<f64>, // row-major, times.len() * n_groups
    n_groups: usize,
}

impl SolutionGrid {
    pub(crate) fn from_rows(times: Vec<f64>, rows: Vec<Vec<f64>>, n_groups: usize) -> Self {
        debug_assert_eq!(times.len(), rows.len());
        let mut cover = Vec::with_capacity(times.len() * n_groups);
        for row in rows {
            debug_assert_eq!(row.len(), n_groups);
            cover.extend_from_slice(&row);
        }
        Self { times, cover, n_groups }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// Cover of group `m` at time index `i`.
    pub fn value(&self, i: usize, m: usize) -> f64 {
        self.cover[i * self.n_groups + m]
    }

    /// Cover row at time index `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.cover[i * self.n_groups..(i + 1) * self.n_groups]
    }

    /// Trajectory of a single group over all grid times.
    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.times.len()).map(|i| self.value(i, m)).collect()
    }
}

/// Growth rate of every group given explicit phase flags: `damped[m]` is true
/// while group `m` is still in its initial damped phase.
pub fn rhs_phased(cover: &[f64], params: &GrowthParams, damped: &[bool]) -> Result<Vec<f64>> {
    let k = params.k();
    if cover.len() != params.n_groups() || damped.len() != params.n_groups() {
        return Err(Error::Dimension(format!(
            "cover/phase length {} vs {} groups",
            cover.len(),
            params.n_groups()
        )));
    }
    if let Some(&bad) = cover.iter().find(|&&c| !(c.is_finite() && c > 0.0)) {
        return Err(Error::Domain(format!("cover values must be > 0, got {bad}")));
    }
    let total: f64 = cover.iter().sum();
    let ratio = total / k;
    let mut rates = Vec::with_capacity(cover.len());
    for (m, g) in params.groups().iter().enumerate() {
        let mut bracket = 1.0 - ratio.powf(g.gamma);
        if bracket < 0.0 && (total - k).abs() <= CAPACITY_CLAMP {
            bracket = 0.0;
        }
        let scale = if damped[m] { g.alpha_d } else { 1.0 };
        rates.push(scale * g.alpha / g.gamma * cover[m] * bracket);
    }
    Ok(rates)
}

/// Growth rate at absolute time `t` for a recovery that started at `t0`;
/// the damped factor applies to group `m` while `t <= t0 + t_d_m`.
pub fn rhs(t: f64, cover: &[f64], params: &GrowthParams, t0: f64) -> Result<Vec<f64>> {
    let damped: Vec<bool> = params.groups().iter().map(|g| t <= t0 + g.t_d).collect();
    rhs_phased(cover, params, &damped)
}
