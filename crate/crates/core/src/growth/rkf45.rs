//! Adaptive Runge-Kutta-Fehlberg 4(5) integration of the coupled model.
//!
//! Integration is split at every change point and restarted, so no step ever
//! straddles a derivative discontinuity, and accepted steps are forced to
//! land exactly on every requested output time (output grids are coarse, so
//! the extra step control costs next to nothing).

use crate::error::{Error, Result};
use crate::growth::analytic::validate_grid;
use crate::growth::{rhs_phased, GrowthParams, InitialState, SolutionGrid};

/// Step-size and tolerance controls for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step (years).
    pub h_init: f64,
    /// Floor below which step-size underflow is reported as stiffness.
    pub h_min: f64,
    /// Ceiling on the step (years).
    pub h_max: f64,
    /// Safety factor on the error-based step update.
    pub safety: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: 1.0,
            safety: 0.9,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("h_init", self.h_init),
            ("h_min", self.h_min),
            ("h_max", self.h_max),
            ("safety", self.safety),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("solver option {name} must be > 0, got {v}")));
            }
        }
        if self.h_min > self.h_max {
            return Err(Error::Config("solver h_min exceeds h_max".into()));
        }
        Ok(())
    }
}

// Fehlberg 4(5) tableau.
const A: [[f64; 5]; 5] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
// Fifth-order weights propagate the solution; E is the embedded 4th/5th
// order difference used for the error estimate.
const B5: [f64; 6] =
    [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const E: [f64; 6] =
    [1.0 / 360.0, 0.0, -128.0 / 4275.0, -2197.0 / 75240.0, 1.0 / 50.0, 2.0 / 55.0];

const MAX_STEPS: u64 = 50_000_000;

/// Integrate the coupled biphasic model and return covers exactly on `times`.
pub fn integrate(
    params: &GrowthParams,
    init: &InitialState,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<SolutionGrid> {
    opts.validate()?;
    init.validate_against(params)?;
    validate_grid(times, init.t0)?;

    let n_groups = params.n_groups();
    let t_end = *times.last().unwrap();

    // Mandatory landing points: change points plus every requested time.
    let mut mandatory = params.change_points(init.t0, t_end);
    mandatory.extend(times.iter().copied().filter(|&t| t > init.t0));
    mandatory.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mandatory.dedup();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    let mut out_idx = 0;
    if times[out_idx] == init.t0 {
        rows.push(init.c0.clone());
        out_idx += 1;
    }

    let mut t = init.t0;
    let mut y = init.c0.clone();
    let mut h = opts.h_init.min(opts.h_max);
    let mut steps: u64 = 0;

    for &target in &mandatory {
        // Phase flags are constant over (t, target]: classify by midpoint.
        let mid = 0.5 * (t + target);
        let damped: Vec<bool> = params.groups().iter().map(|g| mid <= init.t0 + g.t_d).collect();

        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::Solver(format!("step budget exhausted at t = {t}")));
            }
            let landing = h >= target - t;
            let h_try = if landing { target - t } else { h };
            match fehlberg_step(&y, h_try, params, &damped, opts) {
                StepOutcome::Accept { y_new, err_ratio } => {
                    t = if landing { target } else { t + h_try };
                    y = y_new;
                    let grow = opts.safety * err_ratio.powf(-0.2);
                    h = (h_try * grow.clamp(0.2, 5.0)).clamp(opts.h_min, opts.h_max);
                }
                StepOutcome::Reject { err_ratio } => {
                    if h_try <= opts.h_min {
                        return Err(Error::Solver(format!(
                            "step size underflow below {} at t = {t} (stiffness)",
                            opts.h_min
                        )));
                    }
                    let shrink = opts.safety * err_ratio.powf(-0.2);
                    h = (h_try * shrink.clamp(0.1, 0.9)).max(opts.h_min);
                }
                StepOutcome::NonFinite => {
                    if h_try <= opts.h_min {
                        return Err(Error::Solver(format!(
                            "non-finite state at t = {t} with minimal step"
                        )));
                    }
                    h = (h_try * 0.1).max(opts.h_min);
                }
            }
        }

        while out_idx < times.len() && times[out_idx] == target {
            rows.push(y.clone());
            out_idx += 1;
        }
    }

    debug_assert_eq!(out_idx, times.len());
    Ok(SolutionGrid::from_rows(times.to_vec(), rows, n_groups))
}

enum StepOutcome {
    Accept { y_new: Vec<f64>, err_ratio: f64 },
    Reject { err_ratio: f64 },
    NonFinite,
}

/// One embedded Fehlberg step with a max-norm scaled error estimate.
///
/// A trial stage whose cover dips non-positive is treated like a non-finite
/// state: the step is retried smaller rather than surfacing a domain error.
fn fehlberg_step(
    y: &[f64],
    h: f64,
    params: &GrowthParams,
    damped: &[bool],
    opts: &SolverOptions,
) -> StepOutcome {
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(6);
    let mut stage = vec![0.0; n];

    match rhs_phased(y, params, damped) {
        Ok(r) => k.push(r),
        Err(_) => return StepOutcome::NonFinite,
    }
    for s in 1..6 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[s - 1][j] * kj[i];
            }
            stage[i] = y[i] + h * acc;
        }
        if stage.iter().any(|x| !x.is_finite()) {
            return StepOutcome::NonFinite;
        }
        match rhs_phased(&stage, params, damped) {
            Ok(r) => k.push(r),
            Err(_) => return StepOutcome::NonFinite,
        }
    }

    let mut y_new = vec![0.0; n];
    let mut err_ratio = 0.0f64;
    for i in 0..n {
        let mut sol = 0.0;
        let mut err = 0.0;
        for (s, ks) in k.iter().enumerate() {
            sol += B5[s] * ks[i];
            err += E[s] * ks[i];
        }
        y_new[i] = y[i] + h * sol;
        let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
        let e = (h * err / scale).abs();
        if !e.is_finite() {
            return StepOutcome::NonFinite;
        }
        err_ratio = err_ratio.max(e);
    }
    if y_new.iter().any(|x| !x.is_finite()) {
        return StepOutcome::NonFinite;
    }
    if err_ratio <= 1.0 {
        StepOutcome::Accept { y_new, err_ratio: err_ratio.max(1e-10) }
    } else {
        StepOutcome::Reject { err_ratio }
    }
}
