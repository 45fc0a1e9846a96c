//! Synthetic trajectory generation for the validation harness.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::growth::{integrate, solve_analytic, GrowthParams, InitialState, SolverOptions};
use crate::likelihood::Trajectory;

/// Solve the model and observe it under Gaussian noise.
///
/// `noise_sd[j]` is the observation standard deviation at time `j`, applied
/// to every group; the trajectory's variance fields are set to its square,
/// consistent with the noise actually added. Deterministic given the RNG
/// state. The observation at the first time is left exactly at the model
/// value so the fixed-initial-condition convention of the likelihood matches
/// the generating process.
#[allow(clippy::too_many_arguments)]
pub fn generate_synthetic<R: Rng>(
    id: impl Into<String>,
    reef: impl Into<String>,
    site: impl Into<String>,
    params: &GrowthParams,
    init: &InitialState,
    times: &[f64],
    noise_sd: &[f64],
    rng: &mut R,
) -> Result<Trajectory> {
    if noise_sd.len() != times.len() {
        return Err(Error::Dimension(format!(
            "noise_sd has {} entries for {} times",
            noise_sd.len(),
            times.len()
        )));
    }
    if noise_sd.iter().any(|&s| !s.is_finite() || s < 0.0) {
        return Err(Error::Domain("noise standard deviations must be >= 0".into()));
    }
    let solution = if params.n_groups() == 1 {
        solve_analytic(params, init, times)?
    } else {
        integrate(params, init, times, &SolverOptions::default())?
    };

    let mut obs = Vec::with_capacity(times.len());
    let mut var = Vec::with_capacity(times.len());
    for (j, &sd) in noise_sd.iter().enumerate() {
        let mut row = Vec::with_capacity(params.n_groups());
        for g in 0..params.n_groups() {
            let mean = solution.value(j, g);
            let x = if j == 0 {
                mean
            } else {
                let noise: f64 = rng.sample(StandardNormal);
                (mean + sd * noise).clamp(0.0, 100.0)
            };
            row.push(x);
        }
        obs.push(row);
        var.push(vec![sd * sd; params.n_groups()]);
    }

    let group_names = match params.n_groups() {
        1 => vec!["total".to_string()],
        2 => vec!["acroporidae".to_string(), "other-hard-coral".to_string()],
        m => (1..=m).map(|g| format!("group-{g}")).collect(),
    };
    Trajectory::new(id, reef, site, times.to_vec(), obs, var, params.k(), group_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::GroupParams;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> GrowthParams {
        GrowthParams::single(GroupParams::new(0.5, 1.0, 2.0, 0.3).unwrap(), 90.0).unwrap()
    }

    #[test]
    fn zero_noise_reproduces_the_solution() {
        let p = params();
        let init = InitialState::new(0.0, vec![5.0]).unwrap();
        let times: Vec<f64> = (0..=6).map(|i| i as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = generate_synthetic(
            "s", "r", "1", &p, &init, &times, &vec![0.0; times.len()], &mut rng,
        )
        .unwrap();
        let exact = solve_analytic(&p, &init, &times).unwrap();
        for j in 0..times.len() {
            assert_abs_diff_eq!(traj.obs[j][0], exact.value(j, 0), epsilon = 1e-12);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let p = params();
        let init = InitialState::new(0.0, vec![5.0]).unwrap();
        let times: Vec<f64> = (0..=6).map(|i| i as f64).collect();
        let sd = vec![1.0; times.len()];
        let mut rng1 = ChaCha8Rng::seed_from_u64(9);
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        let a = generate_synthetic("s", "r", "1", &p, &init, &times, &sd, &mut rng1).unwrap();
        let b = generate_synthetic("s", "r", "1", &p, &init, &times, &sd, &mut rng2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initial_observation_is_exact_and_noise_sd_matches() {
        let p = params();
        let init = InitialState::new(0.0, vec![20.0]).unwrap();
        let times = vec![0.0, 1.0, 2.0];
        let sd = vec![2.0, 2.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let traj = generate_synthetic(
                format!("s{i}"),
                "r",
                "1",
                &p,
                &init,
                &times,
                &sd,
                &mut rng,
            )
            .unwrap();
            assert_eq!(traj.obs[0][0], 20.0, "first observation stays at the model value");
            assert_eq!(traj.stderr_var[1][0], 4.0);
            vals.push(traj.obs[1][0]);
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd_hat = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (n as f64 - 1.0))
            .sqrt();
        assert!((sd_hat - 2.0).abs() / 2.0 <= 0.03, "empirical sd {sd_hat}");
    }
}
