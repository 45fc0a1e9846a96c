//! Posterior predictive simulation and model-fitness summaries.
//!
//! Simulated datasets draw a parameter vector uniformly from the pooled
//! post-burn-in posterior draws, solve the model on the trajectory grid and
//! add the observation noise. Simulated covers are deliberately NOT clamped
//! to [0, 100]: the observation model is an unbounded Gaussian and the
//! quantile arithmetic has to match it, otherwise observed quantiles near
//! zero cover would be biased.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::Trajectory;

/// Credible-interval levels reported throughout, in percent.
pub const CRI_LEVELS: [u8; 4] = [50, 90, 95, 99];

/// Equal-tailed band at one level: per-time, per-group bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBand {
    pub level: u8,
    /// `lo[time][group]`
    pub lo: Vec<Vec<f64>>,
    /// `hi[time][group]`
    pub hi: Vec<Vec<f64>>,
}

/// Simulated predictive datasets plus their credible bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEnsemble {
    pub times: Vec<f64>,
    pub n_groups: usize,
    /// `sims[draw][time][group]`, flattened draw-major.
    sims: Vec<f64>,
    pub n_draws: usize,
    pub bands: Vec<LevelBand>,
    /// Posterior draws rejected because the solver failed on them.
    pub redraws: u64,
}

impl PredictiveEnsemble {
    /// Assemble an ensemble from raw simulations (draw-major layout) and
    /// compute the credible bands.
    pub fn from_sims(times: Vec<f64>, n_groups: usize, sims: Vec<f64>, redraws: u64) -> Result<Self> {
        let per_draw = times.len() * n_groups;
        if per_draw == 0 || sims.is_empty() || sims.len() % per_draw != 0 {
            return Err(Error::Dimension(format!(
                "simulation buffer of {} values does not tile {} cells",
                sims.len(),
                per_draw
            )));
        }
        let n_draws = sims.len() / per_draw;
        let mut ens =
            Self { times, n_groups, sims, n_draws, bands: Vec::new(), redraws };
        ens.bands = CRI_LEVELS
            .iter()
            .map(|&level| ens.band_at(f64::from(level)))
            .collect();
        Ok(ens)
    }

    #[inline]
    pub fn sim_value(&self, draw: usize, time: usize, group: usize) -> f64 {
        self.sims[(draw * self.times.len() + time) * self.n_groups + group]
    }

    /// All simulated values for one (time, group) cell.
    pub fn cell(&self, time: usize, group: usize) -> Vec<f64> {
        (0..self.n_draws).map(|d| self.sim_value(d, time, group)).collect()
    }

    /// Equal-tailed band of an arbitrary level (percent), from order
    /// statistics: the lower endpoint is the ceil(n q)-th smallest with
    /// q = (1 - level/100)/2 and the upper endpoint mirrors it, so band
    /// membership agrees exactly with the observed-quantile arithmetic.
    pub fn band_at(&self, level: f64) -> LevelBand {
        let q_lo = (1.0 - level / 100.0) / 2.0;
        let n = self.n_draws;
        let rank_lo = ((n as f64 * q_lo).ceil() as usize).clamp(1, n);
        let rank_hi = n + 1 - rank_lo;
        let mut lo = vec![vec![0.0; self.n_groups]; self.times.len()];
        let mut hi = vec![vec![0.0; self.n_groups]; self.times.len()];
        let mut buf = Vec::with_capacity(n);
        for t in 0..self.times.len() {
            for g in 0..self.n_groups {
                buf.clear();
                buf.extend((0..n).map(|d| self.sim_value(d, t, g)));
                buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
                lo[t][g] = buf[rank_lo - 1];
                hi[t][g] = buf[rank_hi - 1];
            }
        }
        LevelBand { level: level.round() as u8, lo, hi }
    }
}

/// Corpus-level coverage summary: for each credibility level beta the
/// estimated proportion of observations inside their beta% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    /// Levels 1..=99.
    pub beta_grid: Vec<u32>,
    pub p_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub n_obs: usize,
}

/// Draw predictive datasets for a trajectory from pooled posterior draws.
///
/// `target` supplies the model solve; a draw whose solve fails is replaced by
/// a fresh one (counted in `redraws`).
pub fn simulate_predictive<T, R>(
    draws: &[Vec<f64>],
    traj: &Trajectory,
    solver: &T,
    n_draws: usize,
    rng: &mut R,
) -> Result<PredictiveEnsemble>
where
    T: SolveModel + ?Sized,
    R: Rng,
{
    if draws.is_empty() {
        return Err(Error::Domain("no posterior draws supplied".into()));
    }
    if n_draws == 0 {
        return Err(Error::Domain("n_draws must be at least 1".into()));
    }
    let n_times = traj.times.len();
    let n_groups = traj.n_groups();
    let mut sims = Vec::with_capacity(n_draws * n_times * n_groups);
    let mut redraws = 0u64;
    let redraw_cap = 100 * n_draws as u64 + 1000;
    let mut produced = 0;
    while produced < n_draws {
        let theta = &draws[rng.gen_range(0..draws.len())];
        let solution = match solver.solve_on(theta, traj) {
            Ok(s) => s,
            Err(_) => {
                redraws += 1;
                if redraws > redraw_cap {
                    return Err(Error::Solver(format!(
                        "predictive redraw cap exhausted after {redraws} failures"
                    )));
                }
                continue;
            }
        };
        for (j, row) in solution.iter().enumerate() {
            for (g, &mean) in row.iter().enumerate() {
                let sd = traj.stderr_var[j][g].sqrt();
                let noise: f64 = rng.sample(StandardNormal);
                sims.push(mean + sd * noise);
            }
        }
        produced += 1;
    }
    PredictiveEnsemble::from_sims(traj.times.clone(), n_groups, sims, redraws)
}

/// Anything that can produce the model mean on a trajectory grid from a flat
/// parameter vector. Implemented by the posterior target so the predictive
/// simulation reuses the analytic/numeric split and failure accounting.
pub trait SolveModel: Sync {
    fn solve_on(&self, theta: &[f64], traj: &Trajectory) -> Result<Vec<Vec<f64>>>;
}

impl SolveModel for crate::likelihood::PosteriorTarget<'_> {
    fn solve_on(&self, theta: &[f64], traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        debug_assert_eq!(self.trajectory().times, traj.times);
        let grid = self.solve(theta)?;
        Ok((0..grid.n_times()).map(|i| grid.row(i).to_vec()).collect())
    }
}

/// Observed quantile of every observation within the ensemble: the fraction
/// of simulated values at or below it, counting ties at half weight.
pub fn observed_quantile(ens: &PredictiveEnsemble, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    if ens.times != traj.times || ens.n_groups != traj.n_groups() {
        return Err(Error::Dimension(
            "ensemble must be simulated on the trajectory's own grid".into(),
        ));
    }
    let n = ens.n_draws as f64;
    let mut out = vec![vec![0.0; ens.n_groups]; ens.times.len()];
    for t in 0..ens.times.len() {
        for g in 0..ens.n_groups {
            let obs = traj.obs[t][g];
            let mut less = 0.0;
            let mut equal = 0.0;
            for d in 0..ens.n_draws {
                let s = ens.sim_value(d, t, g);
                if s < obs {
                    less += 1.0;
                } else if s == obs {
                    equal += 1.0;
                }
            }
            out[t][g] = (less + 0.5 * equal) / n;
        }
    }
    Ok(out)
}

/// Smallest credibility level (percent) whose equal-tailed interval contains
/// an observation with quantile `q`.
pub fn smallest_cri(q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    // written as one product and one exact subtraction so that rational
    // quantiles k/n land exactly on integer levels
    if q < 0.5 {
        100.0 - 200.0 * q
    } else {
        200.0 * q - 100.0
    }
}

/// Pool smallest-CrI values across a corpus into the coverage curve over the
/// integer grid beta = 1..=99, with binomial standard errors.
pub fn coverage_curve(betas: &[f64]) -> Result<CoverageCurve> {
    if betas.is_empty() {
        return Err(Error::Domain("coverage curve needs at least one observation".into()));
    }
    let n = betas.len() as f64;
    let beta_grid: Vec<u32> = (1..=99).collect();
    let mut p_hat = Vec::with_capacity(99);
    let mut s_hat = Vec::with_capacity(99);
    for &b in &beta_grid {
        let count = betas.iter().filter(|&&x| x < f64::from(b)).count() as f64;
        let p = count / n;
        p_hat.push(p);
        s_hat.push((p * (1.0 - p) / n).sqrt());
    }
    Ok(CoverageCurve { beta_grid, p_hat, s_hat, n_obs: betas.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn flat_traj(times: usize) -> Trajectory {
        let t: Vec<f64> = (0..times).map(|i| i as f64).collect();
        Trajectory::new(
            "t",
            "r",
            "s",
            t,
            vec![vec![10.0]; times],
            vec![vec![1.25]; times],
            90.0,
            vec!["total".into()],
        )
        .unwrap()
    }

    /// Trivial solver returning a constant mean, for ensemble tests.
    struct ConstSolver(f64);
    impl SolveModel for ConstSolver {
        fn solve_on(&self, _theta: &[f64], traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
            Ok(vec![vec![self.0; traj.n_groups()]; traj.times.len()])
        }
    }

    /// Solver that fails on a marked parameter vector.
    struct FlakySolver;
    impl SolveModel for FlakySolver {
        fn solve_on(&self, theta: &[f64], traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
            if theta[0] < 0.0 {
                Err(Error::Solver("marked draw".into()))
            } else {
                Ok(vec![vec![10.0; traj.n_groups()]; traj.times.len()])
            }
        }
    }

    #[test]
    fn degenerate_posterior_band_width_matches_gaussian() {
        // all posterior draws identical: band spread is observation noise only
        let traj = flat_traj(3);
        let draws = vec![vec![0.5, 1.0, 2.0, 0.45]];
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ens = simulate_predictive(&draws, &traj, &ConstSolver(10.0), 10_000, &mut rng).unwrap();
        let band95 = ens.bands.iter().find(|b| b.level == 95).unwrap();
        let sd = 1.25f64.sqrt();
        for t in 0..3 {
            let halfwidth = 0.5 * (band95.hi[t][0] - band95.lo[t][0]);
            let expect = 1.959963984540054 * sd;
            let rel = (halfwidth - expect).abs() / expect;
            assert!(rel <= 0.05, "95% halfwidth {halfwidth} vs {expect} (rel {rel})");
        }
    }

    #[test]
    fn single_draw_bands_collapse() {
        let traj = flat_traj(3);
        let draws = vec![vec![0.5, 1.0, 2.0, 0.45]];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ens = simulate_predictive(&draws, &traj, &ConstSolver(10.0), 1, &mut rng).unwrap();
        for band in &ens.bands {
            for t in 0..3 {
                assert_eq!(band.lo[t][0], band.hi[t][0]);
                assert_eq!(band.lo[t][0], ens.sim_value(0, t, 0));
            }
        }
    }

    #[test]
    fn bands_are_nested() {
        let traj = flat_traj(4);
        let draws: Vec<Vec<f64>> = (0..50).map(|i| vec![0.01 + i as f64 * 0.015, 1.0, 2.0, 0.45]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ens = simulate_predictive(&draws, &traj, &ConstSolver(10.0), 500, &mut rng).unwrap();
        for w in ens.bands.windows(2) {
            let (narrow, wide) = (&w[0], &w[1]);
            assert!(narrow.level < wide.level);
            for t in 0..4 {
                assert!(wide.lo[t][0] <= narrow.lo[t][0]);
                assert!(wide.hi[t][0] >= narrow.hi[t][0]);
            }
        }
    }

    #[test]
    fn solver_failures_are_redrawn_and_counted() {
        let traj = flat_traj(3);
        let draws = vec![vec![-1.0, 1.0, 2.0, 0.45], vec![0.5, 1.0, 2.0, 0.45]];
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ens = simulate_predictive(&draws, &traj, &FlakySolver, 200, &mut rng).unwrap();
        assert_eq!(ens.n_draws, 200);
        assert!(ens.redraws > 0, "about half the draws should have been redrawn");
    }

    #[test]
    fn observed_quantile_extremes_and_median() {
        let traj = flat_traj(3);
        // hand-built ensemble: values 1..=5 at every cell
        let mut sims = Vec::new();
        for d in 0..5 {
            for _t in 0..3 {
                sims.push(d as f64 + 1.0);
            }
        }
        let ens = PredictiveEnsemble::from_sims(traj.times.clone(), 1, sims, 0).unwrap();

        let mut below = traj.clone();
        below.obs = vec![vec![0.5]; 3];
        assert_eq!(observed_quantile(&ens, &below).unwrap()[0][0], 0.0);

        let mut above = traj.clone();
        above.obs = vec![vec![9.0]; 3];
        assert_eq!(observed_quantile(&ens, &above).unwrap()[0][0], 1.0);

        let mut median = traj.clone();
        median.obs = vec![vec![3.0]; 3]; // ties the middle order statistic
        let q = observed_quantile(&ens, &median).unwrap()[0][0];
        assert_abs_diff_eq!(q, 0.5, epsilon = 0.2 / 5.0 + 1e-12);
    }

    #[test]
    fn observed_quantile_matches_normal_cdf() {
        let times = vec![0.0, 1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 100_000;
        let mut sims = Vec::with_capacity(n * 3);
        for _ in 0..n {
            for _ in 0..3 {
                sims.push(rng.sample::<f64, _>(StandardNormal));
            }
        }
        let ens = PredictiveEnsemble::from_sims(times.clone(), 1, sims, 0).unwrap();
        let traj = Trajectory::new(
            "t",
            "r",
            "s",
            times,
            vec![vec![1.645]; 3],
            vec![vec![1.0]; 3],
            90.0,
            vec!["total".into()],
        )
        .unwrap();
        let q = observed_quantile(&ens, &traj).unwrap();
        for t in 0..3 {
            assert_abs_diff_eq!(q[t][0], 0.95, epsilon = 0.005);
        }
    }

    #[test]
    fn smallest_cri_branches() {
        assert_eq!(smallest_cri(0.5), 0.0);
        assert_abs_diff_eq!(smallest_cri(0.025), 95.0, epsilon = 1e-12);
        assert_abs_diff_eq!(smallest_cri(0.975), 95.0, epsilon = 1e-12);
        assert_eq!(smallest_cri(0.0), 100.0);
        assert_eq!(smallest_cri(1.0), 100.0);
    }

    #[test]
    fn composition_equals_direct_interval_membership() {
        // exhaustive small ensembles in generic position: the smallest-CrI
        // of the observed quantile classifies membership identically to the
        // reported band endpoints, for every integer beta
        for n in 1..=10usize {
            let times = vec![0.0, 1.0, 2.0];
            let mut sims = Vec::new();
            for d in 0..n {
                for _ in 0..3 {
                    sims.push(d as f64 + 1.0); // sims 1..=n, distinct
                }
            }
            let ens = PredictiveEnsemble::from_sims(times.clone(), 1, sims, 0).unwrap();
            // observations in every gap, strictly between simulated values
            for pos in 0..=n {
                let obs_val = pos as f64 + 0.5;
                let traj = Trajectory::new(
                    "t",
                    "r",
                    "s",
                    times.clone(),
                    vec![vec![obs_val]; 3],
                    vec![vec![1.0]; 3],
                    90.0,
                    vec!["total".into()],
                )
                .unwrap();
                let q = observed_quantile(&ens, &traj).unwrap()[0][0];
                let beta_obs = smallest_cri(q);
                for beta in 1..=99u32 {
                    let band = ens.band_at(f64::from(beta));
                    let inside_direct = band.lo[0][0] <= obs_val && obs_val <= band.hi[0][0];
                    let inside_composed = beta_obs <= f64::from(beta);
                    assert_eq!(
                        inside_composed, inside_direct,
                        "n={n} obs={obs_val} beta={beta} q={q} beta_obs={beta_obs}"
                    );
                }
            }
        }
    }

    #[test]
    fn coverage_curve_values() {
        // all observations at the median: every interval contains them
        let c = coverage_curve(&[0.0, 0.0, 0.0]).unwrap();
        assert!(c.p_hat.iter().all(|&p| p == 1.0));

        // frozen binomial standard error: p = 0.5, N = 100
        let betas: Vec<f64> = (0..100).map(|i| if i < 50 { 10.0 } else { 90.0 }).collect();
        let c = coverage_curve(&betas).unwrap();
        let idx = c.beta_grid.iter().position(|&b| b == 50).unwrap();
        assert_abs_diff_eq!(c.p_hat[idx], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.s_hat[idx], 0.05, epsilon = 1e-12);

        // monotone by construction
        for w in c.p_hat.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(coverage_curve(&[]).is_err());
    }

    #[test]
    fn uniform_betas_track_the_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let betas: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..100.0)).collect();
        let c = coverage_curve(&betas).unwrap();
        let mut ok = 0;
        for (i, &b) in c.beta_grid.iter().enumerate() {
            if (c.p_hat[i] - f64::from(b) / 100.0).abs() <= 3.0 * c.s_hat[i] {
                ok += 1;
            }
        }
        assert!(ok >= 95, "only {ok}/99 grid points within 3 standard errors");
    }
}
