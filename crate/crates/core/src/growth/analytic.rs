//! Closed-form solution of the single-group biphasic Richards' model.

use crate::error::{Error, Result};
use crate::growth::{GrowthParams, InitialState, SolutionGrid};

/// Evaluate the exact solution of the single-group model on a time grid.
///
/// During the damped phase the cover follows the Richards' solution with
/// effective rate `alpha_d * alpha`; afterwards it continues from the
/// change-point cover `C_d` with the full rate, the exponent measured from
/// the change point itself so the solution is continuous there for any `t0`.
pub fn solve_analytic(
    params: &GrowthParams,
    init: &InitialState,
    times: &[f64],
) -> Result<SolutionGrid> {
    if params.n_groups() != 1 {
        return Err(Error::Dimension(format!(
            "analytic solution requires exactly one group, got {}",
            params.n_groups()
        )));
    }
    init.validate_against(params)?;
    validate_grid(times, init.t0)?;

    let g = params.groups()[0];
    let k = params.k();
    let c0 = init.c0[0];
    let t_change = init.t0 + g.t_d;
    let c_d = richards_value(k, c0, g.gamma, g.alpha_d * g.alpha, g.t_d);

    let rows = times
        .iter()
        .map(|&t| {
            let c = if t <= t_change {
                richards_value(k, c0, g.gamma, g.alpha_d * g.alpha, t - init.t0)
            } else {
                richards_value(k, c_d, g.gamma, g.alpha, t - t_change)
            };
            vec![c]
        })
        .collect();
    Ok(SolutionGrid::from_rows(times.to_vec(), rows, 1))
}

pub(crate) fn validate_grid(times: &[f64], t0: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Domain("output time grid is empty".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < t0) {
        return Err(Error::Domain(format!("all output times must be finite and >= t0 = {t0}")));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("output times must be strictly increasing".into()));
    }
    Ok(())
}

/// Richards' solution `K (1 + u0 e^{-rate dt})^{-1/gamma}` with
/// `u0 = (K/c)^gamma - 1`, evaluated in log space so large `(K/c)^gamma`
/// never overflows and small `gamma` keeps full precision.
fn richards_value(k: f64, c_start: f64, gamma: f64, rate: f64, dt: f64) -> f64 {
    if dt == 0.0 || c_start == k {
        return c_start;
    }
    // ln u0 = l0 + ln(1 - e^{-l0}) where l0 = gamma ln(K/c)
    let l0 = gamma * (k / c_start).ln();
    let ln_u0 = l0 + (-(-l0).exp_m1()).ln();
    let w = ln_u0 - rate * dt;
    // s = ln(1 + e^w), split to avoid overflow of e^w
    let s = if w > 33.0 { w + (-w).exp().ln_1p() } else { w.exp().ln_1p() };
    k * (-s / gamma).exp()
}
