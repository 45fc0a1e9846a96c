//! Observation model, priors, and the unnormalised log-posterior target.
//!
//! Observed covers are modelled as independent Gaussians around the model
//! mean with per-time, per-group variances given by the squared standard
//! error of the transect mean. Parameters carry independent uniform priors;
//! sampling happens in an unconstrained space reached by a per-coordinate
//! scaled-logit bijection, whose log-Jacobian is folded into the target.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{
    integrate, solve_analytic, GrowthParams, InitialState, SolutionGrid, SolverOptions,
};
use crate::sampler::LogDensity;

/// Variance-of-mean entries below this floor (in squared percent cover) are
/// raised to it; five identical transect readings would otherwise produce a
/// degenerate likelihood.
pub const VARIANCE_FLOOR: f64 = 1e-4;

/// Observed initial covers below this floor (percent) are raised to it so the
/// fixed initial condition stays strictly positive.
pub const INITIAL_COVER_FLOOR: f64 = 1e-4;

const LN_2PI: f64 = 1.8378770664093454835606594728112;

/// One recovery trajectory: observation times (the first is the disturbance
/// visit), per-group observed cover, and per-group variance of the site mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub reef: String,
    pub site: String,
    /// Absolute survey times in decimal years, strictly increasing.
    pub times: Vec<f64>,
    /// Observed cover, one row per time, one column per group (% cover).
    pub obs: Vec<Vec<f64>>,
    /// Variance of the site mean per time and group, floored.
    pub stderr_var: Vec<Vec<f64>>,
    /// Carrying capacity (% area), fixed rather than inferred.
    pub k: f64,
    pub group_names: Vec<String>,
}

impl Trajectory {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        reef: impl Into<String>,
        site: impl Into<String>,
        times: Vec<f64>,
        obs: Vec<Vec<f64>>,
        stderr_var: Vec<Vec<f64>>,
        k: f64,
        group_names: Vec<String>,
    ) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::Domain(format!(
                "a trajectory needs at least 2 visits after the disturbance visit, got {} times",
                times.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("trajectory times must be strictly increasing".into()));
        }
        if !(k.is_finite() && k > 0.0 && k <= 100.0) {
            return Err(Error::Domain(format!("K must be in (0, 100], got {k}")));
        }
        let n_groups = group_names.len();
        if n_groups == 0 {
            return Err(Error::Dimension("at least one group is required".into()));
        }
        if obs.len() != times.len() || stderr_var.len() != times.len() {
            return Err(Error::Dimension(format!(
                "times/obs/stderr_var rows disagree: {}/{}/{}",
                times.len(),
                obs.len(),
                stderr_var.len()
            )));
        }
        for (j, (o, v)) in obs.iter().zip(&stderr_var).enumerate() {
            if o.len() != n_groups || v.len() != n_groups {
                return Err(Error::Dimension(format!("row {j} has wrong group count")));
            }
            if o.iter().any(|&x| !(0.0..=100.0).contains(&x)) {
                return Err(Error::Domain(format!("observed cover out of [0, 100] at row {j}")));
            }
            if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::Domain(format!("negative or non-finite variance at row {j}")));
            }
        }
        let stderr_var = stderr_var
            .into_iter()
            .map(|row| row.into_iter().map(|v: f64| v.max(VARIANCE_FLOOR)).collect())
            .collect();
        Ok(Self {
            id: id.into(),
            reef: reef.into(),
            site: site.into(),
            times,
            obs,
            stderr_var,
            k,
            group_names,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    /// Number of visits after the disturbance visit.
    pub fn n_post_visits(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// The fixed initial condition: observed cover at the disturbance visit,
    /// floored away from zero.
    pub fn initial_state(&self) -> Result<InitialState> {
        let c0: Vec<f64> = self.obs[0].iter().map(|&x| x.max(INITIAL_COVER_FLOOR)).collect();
        let total: f64 = c0.iter().sum();
        if total > self.k {
            return Err(Error::Domain(format!(
                "initial cover sum {total} exceeds K = {} for trajectory {}",
                self.k, self.id
            )));
        }
        InitialState::new(self.t0(), c0)
    }
}

/// Uniform prior bounds for one group, as `(lower, upper)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPrior {
    pub alpha: (f64, f64),
    pub gamma: (f64, f64),
    pub t_d: (f64, f64),
    pub alpha_d: (f64, f64),
}

/// Independent uniform priors for every free parameter. `K` is fixed by the
/// data and contributes nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    groups: Vec<GroupPrior>,
}

impl PriorSpec {
    /// Reference priors: `alpha ~ U(0,1)`, `gamma ~ U(0,2)`,
    /// `alpha_d ~ U(0,0.9)`, `t_d ~ U(0,D)` with `D` the trajectory duration.
    pub fn reference(n_groups: usize, duration: f64) -> Result<Self> {
        let g = GroupPrior {
            alpha: (0.0, 1.0),
            gamma: (0.0, 2.0),
            t_d: (0.0, duration),
            alpha_d: (0.0, 0.9),
        };
        Self::new(vec![g; n_groups])
    }

    pub fn new(groups: Vec<GroupPrior>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Config("prior needs at least one group".into()));
        }
        for g in &groups {
            for (name, (lo, hi)) in [
                ("alpha", g.alpha),
                ("gamma", g.gamma),
                ("t_d", g.t_d),
                ("alpha_d", g.alpha_d),
            ] {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Config(format!(
                        "prior bounds for {name} must be finite and ordered, got ({lo}, {hi})"
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Number of free parameters (4 per group).
    pub fn dim(&self) -> usize {
        4 * self.groups.len()
    }

    /// Flat bounds in parameter order `[alpha, gamma, t_d, alpha_d]` per group.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.dim());
        for g in &self.groups {
            out.extend_from_slice(&[g.alpha, g.gamma, g.t_d, g.alpha_d]);
        }
        out
    }

    /// Strict interior membership of a flat parameter vector.
    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && self
                .bounds()
                .iter()
                .zip(theta)
                .all(|(&(lo, hi), &x)| x.is_finite() && x > lo && x < hi)
    }

    /// Sum of `-ln(b - a)` over all coordinates: the in-support log prior.
    pub fn log_density_in_support(&self) -> f64 {
        self.bounds().iter().map(|&(lo, hi)| -(hi - lo).ln()).sum()
    }

    /// Uniform draw from the open prior box (flat parameter order).
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds()
            .iter()
            .map(|&(lo, hi)| {
                let x: f64 = rng.gen_range(lo..hi);
                if x > lo {
                    x
                } else {
                    0.5 * (lo + hi)
                }
            })
            .collect()
    }
}

/// Position in the unconstrained sampling space, one coordinate per free
/// parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedVector(pub Vec<f64>);

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Map an unconstrained vector onto the prior box. Returns the flat
/// parameter vector and the log-Jacobian of the map.
pub fn transform(z: &[f64], prior: &PriorSpec) -> Result<(Vec<f64>, f64)> {
    let bounds = prior.bounds();
    if z.len() != bounds.len() {
        return Err(Error::Dimension(format!(
            "unconstrained vector has {} coordinates, prior expects {}",
            z.len(),
            bounds.len()
        )));
    }
    let mut theta = Vec::with_capacity(z.len());
    let mut log_jac = 0.0;
    for (&zi, &(lo, hi)) in z.iter().zip(&bounds) {
        let s = sigmoid(zi);
        // keep the image strictly inside the open interval even for extreme
        // coordinates, so downstream domain checks hold
        let x = (lo + (hi - lo) * s).clamp(lo + (hi - lo) * 1e-300, hi - (hi - lo) * 1e-16);
        theta.push(x);
        log_jac += (hi - lo).ln() - softplus(zi) - softplus(-zi);
    }
    Ok((theta, log_jac))
}

/// Inverse of [`transform`]. Rejects values on or outside the bounds.
pub fn inverse_transform(theta: &[f64], prior: &PriorSpec) -> Result<UnconstrainedVector> {
    let bounds = prior.bounds();
    if theta.len() != bounds.len() {
        return Err(Error::Dimension(format!(
            "parameter vector has {} coordinates, prior expects {}",
            theta.len(),
            bounds.len()
        )));
    }
    let mut z = Vec::with_capacity(theta.len());
    for (&x, &(lo, hi)) in theta.iter().zip(&bounds) {
        if !(x > lo && x < hi) {
            return Err(Error::Domain(format!(
                "value {x} is outside the open prior interval ({lo}, {hi})"
            )));
        }
        z.push((x - lo).ln() - (hi - x).ln());
    }
    Ok(UnconstrainedVector(z))
}

/// Gaussian log-likelihood of a trajectory given the model solution on the
/// trajectory's own time grid. The exact normaliser is kept so predictive
/// densities are comparable across trajectories.
pub fn log_likelihood(traj: &Trajectory, solution: &SolutionGrid) -> Result<f64> {
    if solution.times() != traj.times.as_slice() {
        return Err(Error::Dimension(
            "solution must be evaluated exactly on the trajectory times".into(),
        ));
    }
    if solution.n_groups() != traj.n_groups() {
        return Err(Error::Dimension(format!(
            "solution has {} groups, trajectory has {}",
            solution.n_groups(),
            traj.n_groups()
        )));
    }
    let m = traj.n_groups();
    let mut ll = 0.0;
    for j in 0..traj.times.len() {
        ll -= 0.5 * (m as f64) * LN_2PI;
        for g in 0..m {
            let c = solution.value(j, g);
            if !c.is_finite() {
                return Err(Error::Solver(format!("non-finite model cover at row {j}")));
            }
            let v = traj.stderr_var[j][g];
            let d = traj.obs[j][g] - c;
            ll -= 0.5 * (v.ln() + d * d / v);
        }
    }
    Ok(ll)
}

/// Log prior density of a parameter set: the sum of log uniform densities
/// when every parameter is in support, `-inf` otherwise.
pub fn log_prior(params: &GrowthParams, prior: &PriorSpec) -> f64 {
    let theta = params.to_flat();
    if prior.contains(&theta) {
        prior.log_density_in_support()
    } else {
        f64::NEG_INFINITY
    }
}

/// Parameter names in flat order, `alpha, gamma, T_d, alpha_d`, suffixed
/// `_A` (Acroporidae) and `_C` (other hard corals) for the two-group model.
pub fn param_names(n_groups: usize) -> Vec<String> {
    let base = ["alpha", "gamma", "T_d", "alpha_d"];
    match n_groups {
        1 => base.iter().map(|s| s.to_string()).collect(),
        2 => {
            let mut out = Vec::with_capacity(8);
            for suffix in ["_A", "_C"] {
                out.extend(base.iter().map(|s| format!("{s}{suffix}")));
            }
            out
        }
        _ => (0..n_groups)
            .flat_map(|g| base.iter().map(move |s| format!("{s}_{}", g + 1)))
            .collect(),
    }
}

/// The unnormalised log-posterior over the unconstrained space, with the
/// model solved analytically for one group and numerically for several.
///
/// Solver failures map to `-inf` (the proposal is rejected) and are counted
/// so pathologies stay visible in fit reports.
pub struct PosteriorTarget<'a> {
    traj: &'a Trajectory,
    prior: PriorSpec,
    init: InitialState,
    solver: SolverOptions,
    solver_failures: AtomicU64,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(traj: &'a Trajectory, prior: PriorSpec, solver: SolverOptions) -> Result<Self> {
        if prior.n_groups() != traj.n_groups() {
            return Err(Error::Dimension(format!(
                "prior has {} groups, trajectory has {}",
                prior.n_groups(),
                traj.n_groups()
            )));
        }
        let init = traj.initial_state()?;
        Ok(Self { traj, prior, init, solver, solver_failures: AtomicU64::new(0) })
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn trajectory(&self) -> &Trajectory {
        self.traj
    }

    pub fn solver_failures(&self) -> u64 {
        self.solver_failures.load(Ordering::Relaxed)
    }

    /// Solve the model on the trajectory grid for a flat parameter vector.
    pub fn solve(&self, theta: &[f64]) -> Result<SolutionGrid> {
        let params = GrowthParams::from_flat(theta, self.traj.k)?;
        if params.n_groups() == 1 {
            solve_analytic(&params, &self.init, &self.traj.times)
        } else {
            integrate(&params, &self.init, &self.traj.times, &self.solver)
        }
    }

    /// Log-posterior (up to a constant) at an unconstrained position.
    pub fn log_posterior(&self, z: &[f64]) -> f64 {
        let Ok((theta, log_jac)) = transform(z, &self.prior) else {
            return f64::NEG_INFINITY;
        };
        if !self.prior.contains(&theta) {
            return f64::NEG_INFINITY;
        }
        let solution = match self.solve(&theta) {
            Ok(s) => s,
            Err(_) => {
                self.solver_failures.fetch_add(1, Ordering::Relaxed);
                return f64::NEG_INFINITY;
            }
        };
        let ll = match log_likelihood(self.traj, &solution) {
            Ok(v) => v,
            Err(_) => {
                self.solver_failures.fetch_add(1, Ordering::Relaxed);
                return f64::NEG_INFINITY;
            }
        };
        ll + self.prior.log_density_in_support() + log_jac
    }
}

impl LogDensity for PosteriorTarget<'_> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        self.log_posterior(z)
    }

    fn to_constrained(&self, z: &[f64]) -> Vec<f64> {
        transform(z, &self.prior).map(|(theta, _)| theta).unwrap_or_else(|_| z.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::GroupParams;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_trajectory(m: usize) -> Trajectory {
        let times = vec![0.0, 1.0, 2.0, 3.0];
        let obs = vec![vec![5.0; m], vec![8.0; m], vec![12.0; m], vec![17.0; m]];
        let var = vec![vec![1.0; m]; 4];
        let names = match m {
            1 => vec!["total".to_string()],
            _ => vec!["acroporidae".to_string(), "other-hard-coral".to_string()],
        };
        Trajectory::new("t1", "ReefA", "1", times, obs, var, 90.0, names).unwrap()
    }

    /// Independent multivariate-normal log-density with diagonal covariance,
    /// written out in full per time point.
    fn mvn_logpdf_oracle(obs: &[f64], mean: &[f64], var: &[f64]) -> f64 {
        let m = obs.len() as f64;
        let det: f64 = var.iter().product();
        let quad: f64 = obs
            .iter()
            .zip(mean)
            .zip(var)
            .map(|((&x, &mu), &v)| (x - mu) * (x - mu) / v)
            .sum();
        -0.5 * (m * LN_2PI + det.ln() + quad)
    }

    #[test]
    fn zero_residual_single_time() {
        let traj = Trajectory::new(
            "t",
            "r",
            "s",
            vec![0.0, 1.0, 2.0],
            vec![vec![5.0], vec![5.0], vec![5.0]],
            vec![vec![1.0]; 3],
            90.0,
            vec!["total".into()],
        )
        .unwrap();
        let grid =
            SolutionGrid::from_rows(traj.times.clone(), vec![vec![5.0], vec![5.0], vec![5.0]], 1);
        let ll = log_likelihood(&traj, &grid).unwrap();
        // each zero-residual unit-variance time contributes -ln(2 pi)/2
        assert_abs_diff_eq!(ll, 3.0 * -0.9189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn unit_residual_adds_half() {
        let traj = Trajectory::new(
            "t",
            "r",
            "s",
            vec![0.0, 1.0, 2.0],
            vec![vec![5.0], vec![5.0], vec![6.0]],
            vec![vec![1.0]; 3],
            90.0,
            vec!["total".into()],
        )
        .unwrap();
        let grid =
            SolutionGrid::from_rows(traj.times.clone(), vec![vec![5.0], vec![5.0], vec![5.0]], 1);
        let ll = log_likelihood(&traj, &grid).unwrap();
        assert_abs_diff_eq!(ll, 2.0 * -0.9189385332046727 + -1.4189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn matches_dense_gaussian_oracle_two_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let times = vec![0.0, 1.5, 4.0];
        let obs: Vec<Vec<f64>> =
            (0..3).map(|_| (0..2).map(|_| rng.gen_range(1.0..60.0)).collect()).collect();
        let var: Vec<Vec<f64>> =
            (0..3).map(|_| (0..2).map(|_| rng.gen_range(0.1..4.0)).collect()).collect();
        let mean: Vec<Vec<f64>> =
            (0..3).map(|_| (0..2).map(|_| rng.gen_range(1.0..60.0)).collect()).collect();
        let traj = Trajectory::new(
            "t",
            "r",
            "s",
            times.clone(),
            obs.clone(),
            var.clone(),
            90.0,
            vec!["acroporidae".into(), "other-hard-coral".into()],
        )
        .unwrap();
        let grid = SolutionGrid::from_rows(times, mean.clone(), 2);
        let ll = log_likelihood(&traj, &grid).unwrap();
        let expect: f64 = (0..3).map(|j| mvn_logpdf_oracle(&obs[j], &mean[j], &var[j])).sum();
        assert_abs_diff_eq!(ll, expect, epsilon = 1e-10);
    }

    #[test]
    fn likelihood_invariant_under_time_permutation() {
        // permuting rows together with their data leaves the sum unchanged
        let traj = toy_trajectory(1);
        let rows = vec![vec![5.5], vec![8.5], vec![11.0], vec![16.0]];
        let grid = SolutionGrid::from_rows(traj.times.clone(), rows.clone(), 1);
        let ll = log_likelihood(&traj, &grid).unwrap();

        let perm = [2usize, 0, 3, 1];
        let mut all: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..4)
            .map(|i| {
                (
                    traj.times[perm[i]],
                    traj.obs[perm[i]].clone(),
                    traj.stderr_var[perm[i]].clone(),
                    rows[perm[i]].clone(),
                )
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let times2: Vec<f64> = all.iter().map(|x| x.0).collect();
        let traj2 = Trajectory::new(
            "t",
            "r",
            "s",
            times2.clone(),
            all.iter().map(|x| x.1.clone()).collect(),
            all.iter().map(|x| x.2.clone()).collect(),
            90.0,
            vec!["total".into()],
        )
        .unwrap();
        let grid2 = SolutionGrid::from_rows(times2, all.iter().map(|x| x.3.clone()).collect(), 1);
        assert_abs_diff_eq!(ll, log_likelihood(&traj2, &grid2).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn huge_variance_contributes_only_constants() {
        let big = 1e12;
        let make = |resid: f64| {
            let traj = Trajectory::new(
                "t",
                "r",
                "s",
                vec![0.0, 1.0, 2.0],
                vec![vec![5.0], vec![5.0], vec![(5.0 + resid).min(100.0)]],
                vec![vec![1.0], vec![1.0], vec![big]],
                90.0,
                vec!["total".into()],
            )
            .unwrap();
            let grid = SolutionGrid::from_rows(
                traj.times.clone(),
                vec![vec![5.0], vec![5.0], vec![5.0]],
                1,
            );
            log_likelihood(&traj, &grid).unwrap()
        };
        // the huge-variance observation's residual no longer matters
        assert_abs_diff_eq!(make(0.0), make(50.0), epsilon = 1e-8);
        // and what it adds is exactly the constant term
        let base = 2.0 * -0.9189385332046727;
        assert_abs_diff_eq!(make(0.0), base - 0.5 * (LN_2PI + big.ln()), epsilon = 1e-8);
    }

    #[test]
    fn log_prior_values() {
        let prior = PriorSpec::reference(1, 5.0).unwrap();
        let p =
            GrowthParams::single(GroupParams::new(0.5, 1.0, 2.0, 0.45).unwrap(), 90.0).unwrap();
        // -ln(1 * 2 * 5 * 0.9) = -ln 9
        assert_abs_diff_eq!(log_prior(&p, &prior), -(9.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log_prior(&p, &prior), -2.1972245773362196, epsilon = 1e-9);

        let prior2 = PriorSpec::reference(2, 8.0).unwrap();
        let g = GroupParams::new(0.5, 1.0, 2.0, 0.45).unwrap();
        let p2 = GrowthParams::new(vec![g, g], 90.0).unwrap();
        // per group: -ln(1 * 2 * 8 * 0.9) = -ln 14.4
        assert_abs_diff_eq!(log_prior(&p2, &prior2), -2.0 * (14.4f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log_prior(&p2, &prior2), -5.33445641316391, epsilon = 1e-9);

        // outside support
        let out =
            GrowthParams::single(GroupParams::new(0.5, 1.0, 6.0, 0.45).unwrap(), 90.0).unwrap();
        assert_eq!(log_prior(&out, &prior), f64::NEG_INFINITY);
        let out =
            GrowthParams::single(GroupParams::new(0.5, 1.0, 2.0, 0.95).unwrap(), 90.0).unwrap();
        assert_eq!(log_prior(&out, &prior), f64::NEG_INFINITY);
    }

    #[test]
    fn transform_midpoint_and_roundtrip() {
        let prior = PriorSpec::reference(1, 6.0).unwrap();
        let (theta, _) = transform(&[0.0, 0.0, 0.0, 0.0], &prior).unwrap();
        assert_abs_diff_eq!(theta[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[2], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[3], 0.45, epsilon = 1e-12);

        let z = inverse_transform(&theta, &prior).unwrap();
        for zi in &z.0 {
            assert_abs_diff_eq!(*zi, 0.0, epsilon = 1e-12);
        }
        assert!(inverse_transform(&[0.0, 1.0, 3.0, 0.45], &prior).is_err());
        assert!(inverse_transform(&[1.0, 1.0, 3.0, 0.45], &prior).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let prior = PriorSpec::reference(2, 7.0).unwrap();
        let z: Vec<f64> = vec![0.3, -1.2, 0.8, 2.0, -0.5, 0.0, 1.5, -2.2];
        let (_, log_jac) = transform(&z, &prior).unwrap();
        // central differences of each coordinate of the forward map
        let h = 1e-6;
        let mut log_det = 0.0;
        for i in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let (tp, _) = transform(&zp, &prior).unwrap();
            let (tm, _) = transform(&zm, &prior).unwrap();
            log_det += ((tp[i] - tm[i]) / (2.0 * h)).ln();
        }
        assert_relative_eq!(log_jac, log_det, max_relative = 1e-6);
    }

    #[test]
    fn posterior_peak_near_truth_on_grid() {
        // synthetic data at known parameters, low noise
        let theta_star = [0.6, 1.0, 2.5, 0.3];
        let k = 90.0;
        let times: Vec<f64> = (0..=8).map(|i| i as f64).collect();
        let params = GrowthParams::from_flat(&theta_star, k).unwrap();
        let init = InitialState::new(0.0, vec![5.0]).unwrap();
        let sol = solve_analytic(&params, &init, &times).unwrap();
        let obs: Vec<Vec<f64>> = (0..times.len()).map(|i| vec![sol.value(i, 0)]).collect();
        let var = vec![vec![0.09]; times.len()];
        let traj = Trajectory::new("g", "r", "s", times, obs, var, k, vec!["total".into()]).unwrap();
        let prior = PriorSpec::reference(1, traj.duration()).unwrap();
        let target = PosteriorTarget::new(&traj, prior.clone(), SolverOptions::default()).unwrap();

        // coarse 4-D grid containing theta_star as a grid point
        let axes = [
            vec![0.2, 0.4, 0.6, 0.8],
            vec![0.5, 1.0, 1.5],
            vec![0.5, 1.5, 2.5, 3.5],
            vec![0.15, 0.3, 0.45, 0.6],
        ];
        let mut best = (f64::NEG_INFINITY, vec![0.0; 4]);
        for &a in &axes[0] {
            for &g in &axes[1] {
                for &td in &axes[2] {
                    for &ad in &axes[3] {
                        let theta = [a, g, td, ad];
                        let z = inverse_transform(&theta, &prior).unwrap();
                        let lp = target.log_posterior(&z.0);
                        if lp > best.0 {
                            best = (lp, theta.to_vec());
                        }
                    }
                }
            }
        }
        assert_eq!(best.1, theta_star.to_vec(), "grid argmax should be the generating point");
    }

    #[test]
    fn posterior_continuity_in_z() {
        let traj = toy_trajectory(1);
        let prior = PriorSpec::reference(1, traj.duration()).unwrap();
        let target = PosteriorTarget::new(&traj, prior, SolverOptions::default()).unwrap();
        let z = [0.2, -0.4, 0.9, 0.1];
        let mut z2 = z;
        z2[0] += 1e-14;
        let a = target.log_posterior(&z);
        let b = target.log_posterior(&z2);
        assert!(a.is_finite());
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }

    #[test]
    fn evidence_agrees_between_spaces() {
        // Monte Carlo change-of-variables consistency: the prior-box average
        // of the likelihood equals the logistic-proposal average of
        // exp(log_posterior - log proposal density).
        let traj = toy_trajectory(1);
        let prior = PriorSpec::reference(1, traj.duration()).unwrap();
        let target = PosteriorTarget::new(&traj, prior.clone(), SolverOptions::default()).unwrap();
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);

        let mut theta_vals = Vec::with_capacity(n);
        for _ in 0..n {
            let theta = prior.sample(&mut rng);
            let sol = target.solve(&theta).unwrap();
            theta_vals.push(log_likelihood(&traj, &sol).unwrap().exp());
        }

        let mut z_vals = Vec::with_capacity(n);
        for _ in 0..n {
            // standard logistic draws via inverse CDF; then theta(z) ~ prior
            let z: Vec<f64> = (0..prior.dim())
                .map(|_| {
                    let u: f64 = rng.gen_range(1e-12..1.0);
                    u.ln() - (1.0 - u).ln()
                })
                .collect();
            let lp = target.log_posterior(&z);
            let log_q: f64 = z.iter().map(|&zi| -softplus(zi) - softplus(-zi)).sum();
            z_vals.push((lp - log_q).exp());
        }

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let se = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
                / v.len() as f64)
                .sqrt()
        };
        let (m1, s1) = (mean(&theta_vals), se(&theta_vals));
        let (m2, s2) = (mean(&z_vals), se(&z_vals));
        let tol = 3.0 * (s1 * s1 + s2 * s2).sqrt();
        assert!((m1 - m2).abs() <= tol, "evidence estimates differ: {m1} vs {m2} (tol {tol})");
    }

    #[test]
    fn variance_floor_applied() {
        let traj = Trajectory::new(
            "t",
            "r",
            "s",
            vec![0.0, 1.0, 2.0],
            vec![vec![5.0]; 3],
            vec![vec![0.0], vec![1e-9], vec![1.0]],
            90.0,
            vec!["total".into()],
        )
        .unwrap();
        assert_eq!(traj.stderr_var[0][0], VARIANCE_FLOOR);
        assert_eq!(traj.stderr_var[1][0], VARIANCE_FLOOR);
        assert_eq!(traj.stderr_var[2][0], 1.0);
    }

    #[test]
    fn trajectory_validation() {
        let names = vec!["total".to_string()];
        // too few visits
        assert!(Trajectory::new(
            "t",
            "r",
            "s",
            vec![0.0, 1.0],
            vec![vec![5.0]; 2],
            vec![vec![1.0]; 2],
            90.0,
            names.clone()
        )
        .is_err());
        // out-of-range cover
        assert!(Trajectory::new(
            "t",
            "r",
            "s",
            vec![0.0, 1.0, 2.0],
            vec![vec![5.0], vec![101.0], vec![5.0]],
            vec![vec![1.0]; 3],
            90.0,
            names.clone()
        )
        .is_err());
        // non-increasing times
        assert!(Trajectory::new(
            "t",
            "r",
            "s",
            vec![0.0, 2.0, 2.0],
            vec![vec![5.0]; 3],
            vec![vec![1.0]; 3],
            90.0,
            names
        )
        .is_err());
    }

    #[test]
    fn param_name_layout() {
        assert_eq!(param_names(1), vec!["alpha", "gamma", "T_d", "alpha_d"]);
        assert_eq!(
            param_names(2),
            vec![
                "alpha_A", "gamma_A", "T_d_A", "alpha_d_A", "alpha_C", "gamma_C", "T_d_C",
                "alpha_d_C"
            ]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn roundtrip_identity(
            z in proptest::collection::vec(-8.0f64..8.0, 4),
            duration in 1.0f64..20.0,
        ) {
            let prior = PriorSpec::reference(1, duration).unwrap();
            let (theta, _) = transform(&z, &prior).unwrap();
            // the transform image always lies strictly inside the support
            prop_assert!(prior.contains(&theta));
            let z2 = inverse_transform(&theta, &prior).unwrap();
            for (a, b) in z.iter().zip(&z2.0) {
                prop_assert!((a - b).abs() <= 2e-12, "{a} vs {b}");
            }
        }
    }
}
