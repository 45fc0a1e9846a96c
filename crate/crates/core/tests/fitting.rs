//! Multi-chain fit orchestration against synthetic trajectories.

use biphasic::data::generate_synthetic;
use biphasic::growth::{GrowthParams, InitialState, SolverOptions};
use biphasic::likelihood::{PosteriorTarget, PriorSpec, Trajectory};
use biphasic::sampler::{run_fit, FitConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic_trajectory(theta: &[f64], noise_sd: f64, seed: u64, n_years: usize) -> Trajectory {
    let params = GrowthParams::from_flat(theta, 90.0).unwrap();
    let init = InitialState::new(0.0, vec![5.0]).unwrap();
    let times: Vec<f64> = (0..=n_years).map(|i| i as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_synthetic(
        format!("synth-{seed}"),
        "SynthReef",
        "1",
        &params,
        &init,
        &times,
        &vec![noise_sd; times.len()],
        &mut rng,
    )
    .unwrap()
}

#[test]
fn informative_data_converges_before_cap() {
    let traj = synthetic_trajectory(&[0.6, 1.0, 2.0, 0.3], 0.8, 42, 10);
    let prior = PriorSpec::reference(1, traj.duration()).unwrap();
    let target = PosteriorTarget::new(&traj, prior, SolverOptions::default()).unwrap();
    let config = FitConfig { seed: 7, max_iters: 200_000, round_iters: 20_000, ..Default::default() };
    let fit = run_fit(&target, &config).unwrap();
    assert!(fit.converged(), "failures: {:?}", fit.report.failures);
    assert!(
        fit.report.iterations_used < 200_000,
        "expected early stop, used {}",
        fit.report.iterations_used
    );
    assert_eq!(fit.chains.len(), 4);
    for p in &fit.report.params {
        assert!(p.r_hat <= 1.1, "{}: r_hat {}", p.name, p.r_hat);
        assert!(p.ess >= 200.0, "{}: ess {}", p.name, p.ess);
        assert!(p.r_hat_upper95 >= p.r_hat);
    }
    // every stored draw satisfies the prior support exactly
    let prior = target.prior();
    for chain in &fit.chains {
        for draw in &chain.theta_draws {
            assert!(prior.contains(draw));
        }
    }
}

#[test]
fn flat_data_with_tight_budget_flags_ess_failure() {
    // nearly flat recovery: the damped-phase parameters are unidentifiable,
    // and a tight budget leaves too few effective draws
    let traj = synthetic_trajectory(&[0.02, 1.0, 8.0, 0.85], 2.0, 43, 10);
    let prior = PriorSpec::reference(1, traj.duration()).unwrap();
    let target = PosteriorTarget::new(&traj, prior, SolverOptions::default()).unwrap();
    let config = FitConfig { seed: 11, max_iters: 1_000, round_iters: 500, ..Default::default() };
    let fit = run_fit(&target, &config).unwrap();
    assert!(!fit.converged(), "a 1k-iteration budget should not satisfy the gate");
    assert!(
        fit.report.failures.iter().any(|f| f.contains("ess")),
        "expected an effective-sample-size failure, got {:?}",
        fit.report.failures
    );
    assert_eq!(fit.report.iterations_used, 1_000);
}

#[test]
fn fit_is_deterministic() {
    let traj = synthetic_trajectory(&[0.5, 0.8, 1.5, 0.4], 1.0, 44, 8);
    let prior = PriorSpec::reference(1, traj.duration()).unwrap();
    let config = FitConfig { seed: 3, max_iters: 4_000, round_iters: 2_000, ..Default::default() };
    let target = PosteriorTarget::new(&traj, prior.clone(), SolverOptions::default()).unwrap();
    let a = run_fit(&target, &config).unwrap();
    let target = PosteriorTarget::new(&traj, prior, SolverOptions::default()).unwrap();
    let b = run_fit(&target, &config).unwrap();
    for (ca, cb) in a.chains.iter().zip(&b.chains) {
        assert_eq!(ca.theta_draws, cb.theta_draws);
        assert_eq!(ca.log_post_trace, cb.log_post_trace);
    }
}

/// Desk-scale simulation-based calibration: fit replicate prior-drawn
/// datasets and check that the truth lands inside its own posterior at the
/// advertised rates.
#[test]
fn sbc_truth_inside_posterior_boxes() {
    let replicates = 20;
    let mut inside_99_box = 0;
    let mut alpha_mean_inside_95 = 0;

    for r in 0..replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + r);
        let prior_proto = PriorSpec::reference(1, 10.0).unwrap();
        let theta_star = prior_proto.sample(&mut rng);
        let traj = synthetic_trajectory(&theta_star, 1.0, 2000 + r, 10);
        let prior = PriorSpec::reference(1, traj.duration()).unwrap();
        let target = PosteriorTarget::new(&traj, prior, SolverOptions::default()).unwrap();
        let config = FitConfig {
            seed: 5000 + r,
            max_iters: 60_000,
            round_iters: 20_000,
            ..Default::default()
        };
        let fit = run_fit(&target, &config).unwrap();
        let pooled = fit.pooled_draws();
        assert!(!pooled.is_empty());

        // joint 99% box: every coordinate of the truth within its marginal
        // central 99% interval
        let dim = theta_star.len();
        let mut all_inside = true;
        for p in 0..dim {
            let mut col: Vec<f64> = pooled.iter().map(|d| d[p]).collect();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let lo = col[((col.len() as f64) * 0.005).floor() as usize];
            let hi = col[(((col.len() as f64) * 0.995).ceil() as usize - 1).min(col.len() - 1)];
            if !(lo <= theta_star[p] && theta_star[p] <= hi) {
                all_inside = false;
            }
        }
        if all_inside {
            inside_99_box += 1;
        }

        // pooled posterior mean of alpha inside its own central 95% interval
        let mut alpha: Vec<f64> = pooled.iter().map(|d| d[0]).collect();
        alpha.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = alpha.iter().sum::<f64>() / alpha.len() as f64;
        let lo = alpha[((alpha.len() as f64) * 0.025).floor() as usize];
        let hi = alpha[(((alpha.len() as f64) * 0.975).ceil() as usize - 1).min(alpha.len() - 1)];
        if lo <= mean && mean <= hi {
            alpha_mean_inside_95 += 1;
        }
    }

    assert!(
        inside_99_box >= 18,
        "truth inside the joint 99% box for only {inside_99_box}/{replicates} replicates"
    );
    assert_eq!(
        alpha_mean_inside_95, replicates,
        "a posterior mean outside its own central interval indicates a broken sampler"
    );
}
