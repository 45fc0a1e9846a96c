//! Convergence diagnostics: split-chain potential scale reduction with an
//! F-based upper confidence bound, pooled effective sample size with Geyer
//! truncation, and the pass/fail gate combining them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Pass thresholds: every parameter must satisfy both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateThresholds {
    pub r_hat: f64,
    pub ess: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self { r_hat: 1.1, ess: 200.0 }
    }
}

impl GateThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_hat.is_finite() && self.r_hat >= 1.0) {
            return Err(Error::Config(format!("r_hat threshold must be >= 1, got {}", self.r_hat)));
        }
        if !(self.ess.is_finite() && self.ess > 0.0) {
            return Err(Error::Config(format!("ess threshold must be > 0, got {}", self.ess)));
        }
        Ok(())
    }
}

/// Diagnostics for one parameter, ready for the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInput {
    pub name: String,
    pub r_hat: f64,
    pub r_hat_upper95: f64,
    pub ess: f64,
}

/// Gate outcome over all parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub params: Vec<ParamInput>,
    pub pass: bool,
    /// Parameters that miss a threshold, with the reason.
    pub failures: Vec<String>,
    pub iterations_used: u64,
    pub thresholds: GateThresholds,
}

/// Split every chain into halves (dropping the middle draw of odd-length
/// chains), turning m chains into 2m for the split estimator.
pub fn split_chains(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for chain in chains {
        let half = chain.len() / 2;
        out.push(chain[..half].to_vec());
        out.push(chain[chain.len() - half..].to_vec());
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0)
}

/// Potential scale reduction factor on split chains, with the classical
/// 95% upper confidence bound from the F sampling distribution of the
/// between/within variance ratio.
pub fn r_hat(chains: &[&[f64]]) -> Result<(f64, f64)> {
    validate_chains(chains)?;
    let min_len = chains.iter().map(|c| c.len()).min().unwrap();
    let trimmed: Vec<&[f64]> = chains.iter().map(|c| &c[..min_len]).collect();
    let split = split_chains(&trimmed);
    let views: Vec<&[f64]> = split.iter().map(|v| v.as_slice()).collect();
    psrf_unsplit(&views)
}

/// The same estimator without the splitting step; [`r_hat`] is exactly this
/// applied to the half-chains.
pub fn psrf_unsplit(chains: &[&[f64]]) -> Result<(f64, f64)> {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    if chains.iter().any(|c| c.len() != chains[0].len()) {
        return Err(Error::Dimension("split chains must share one length".into()));
    }
    if n < 4.0 {
        return Err(Error::Degenerate("chains too short for the split estimator".into()));
    }

    let xbar: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let s2: Vec<f64> = chains.iter().map(|c| sample_var(c)).collect();
    let w = mean(&s2);
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::Degenerate(
            "zero within-chain variance: the potential scale reduction is undefined".into(),
        ));
    }
    let b = n * sample_var(&xbar);
    let muhat = mean(&xbar);

    let var_w = sample_var(&s2) / m;
    let var_b = 2.0 * b * b / (m - 1.0);
    let xbar_sq: Vec<f64> = xbar.iter().map(|x| x * x).collect();
    let cov_wb =
        (n / m) * (sample_cov(&s2, &xbar_sq) - 2.0 * muhat * sample_cov(&s2, &xbar));

    let v = (n - 1.0) / n * w + (1.0 + 1.0 / m) * b / n;
    let var_v = ((n - 1.0) * (n - 1.0) * var_w
        + (1.0 + 1.0 / m) * (1.0 + 1.0 / m) * var_b
        + 2.0 * (n - 1.0) * (1.0 + 1.0 / m) * cov_wb)
        / (n * n);

    let df_adj = if var_v > 0.0 && v > 0.0 {
        let df_v = 2.0 * v * v / var_v;
        (df_v + 3.0) / (df_v + 1.0)
    } else {
        1.0
    };

    let r2_fixed = (n - 1.0) / n;
    let r2_random = (1.0 + 1.0 / m) / n * (b / w);
    let point = (df_adj * (r2_fixed + r2_random)).sqrt();

    let b_df = m - 1.0;
    let w_df = if var_w > 0.0 { (2.0 * w * w / var_w).min(1e6) } else { 1e6 };
    let f_quantile = FisherSnedecor::new(b_df, w_df)
        .map_err(|e| Error::Degenerate(format!("F distribution: {e}")))?
        .inverse_cdf(0.975);
    let upper = (df_adj * (r2_fixed + f_quantile * r2_random)).sqrt();

    Ok((point, upper.max(point)))
}

/// Pooled effective sample size: total draws divided by the integrated
/// autocorrelation time, with per-chain autocorrelations averaged and the
/// sum truncated by the initial monotone positive-sequence rule.
pub fn ess(chains: &[&[f64]]) -> Result<f64> {
    validate_chains(chains)?;
    let min_len = chains.iter().map(|c| c.len()).min().unwrap();
    let n = min_len;
    let m = chains.len();

    struct ChainStats<'a> {
        data: &'a [f64],
        mean: f64,
        c0: f64,
    }
    let mut stats = Vec::with_capacity(m);
    for c in chains {
        let data = &c[..n];
        let mu = mean(data);
        let c0 = data.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64;
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::Degenerate(
                "zero within-chain variance: the effective sample size is undefined".into(),
            ));
        }
        stats.push(ChainStats { data, mean: mu, c0 });
    }

    let rho_bar = |k: usize| -> f64 {
        let mut acc = 0.0;
        for s in &stats {
            let mut c_k = 0.0;
            for t in 0..n - k {
                c_k += (s.data[t] - s.mean) * (s.data[t + k] - s.mean);
            }
            acc += c_k / n as f64 / s.c0;
        }
        acc / m as f64
    };

    // Geyer pairs Gamma_i = rho(2i) + rho(2i+1): keep while positive, then
    // enforce monotone non-increase.
    let mut gammas: Vec<f64> = Vec::new();
    let mut i = 0;
    while 2 * i + 1 < n {
        let g = rho_bar(2 * i) + rho_bar(2 * i + 1);
        if g <= 0.0 {
            break;
        }
        let capped = match gammas.last() {
            Some(&prev) => g.min(prev),
            None => g,
        };
        gammas.push(capped);
        i += 1;
    }
    if gammas.is_empty() {
        return Err(Error::Degenerate("no positive autocorrelation pair at lag 0".into()));
    }
    let tau = (2.0 * gammas.iter().sum::<f64>() - 1.0).max(f64::MIN_POSITIVE);
    Ok((m * n) as f64 / tau)
}

fn validate_chains(chains: &[&[f64]]) -> Result<()> {
    if chains.len() < 2 {
        return Err(Error::Dimension("at least 2 chains are required".into()));
    }
    let min_len = chains.iter().map(|c| c.len()).min().unwrap();
    if min_len < 10 {
        return Err(Error::Degenerate(format!(
            "chains must have at least 10 draws, shortest has {min_len}"
        )));
    }
    for c in chains {
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::Degenerate("chains contain non-finite draws".into()));
        }
    }
    Ok(())
}

/// Apply the thresholds to per-parameter diagnostics.
pub fn gate(
    params: Vec<ParamInput>,
    thresholds: &GateThresholds,
    iterations_used: u64,
) -> ConvergenceReport {
    let mut failures = Vec::new();
    for p in &params {
        if !(p.r_hat <= thresholds.r_hat) {
            failures.push(format!("{}: r_hat {:.4} > {}", p.name, p.r_hat, thresholds.r_hat));
        }
        if !(p.ess >= thresholds.ess) {
            failures.push(format!("{}: ess {:.1} < {}", p.name, p.ess, thresholds.ess));
        }
    }
    ConvergenceReport {
        pass: failures.is_empty(),
        failures,
        params,
        iterations_used,
        thresholds: *thresholds,
    }
}
