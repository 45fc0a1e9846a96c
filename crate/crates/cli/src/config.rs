//! Run configuration: a flat key-value document mirroring the CLI flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use anyhow::{bail, Context, Result};
use biphasic::diagnostics::GateThresholds;
use biphasic::growth::SolverOptions;
use biphasic::likelihood::PriorSpec;
use biphasic::sampler::{FitConfig, RamOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of model groups: 1 (total hard coral) or 2 (Acroporidae and
    /// other hard corals).
    pub model: usize,
    pub seed: u64,
    /// Worker threads for fitting; 0 picks the machine default.
    pub jobs: usize,
    pub chains: usize,
    pub max_iters: u64,
    pub round_iters: u64,
    pub thin: u64,
    pub mem_cap_mb: f64,
    pub rhat_threshold: f64,
    pub ess_threshold: f64,
    /// One-sided paired t-test significance for disturbance detection.
    pub p_threshold: f64,
    /// Minimum visits after the disturbance visit for a usable trajectory.
    pub min_post_visits: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Posterior predictive simulations per trajectory.
    pub predictive_draws: usize,
    /// Upper prior bounds (all lower bounds are 0; the change-point upper
    /// bound is each trajectory's own duration).
    pub alpha_upper: f64,
    pub gamma_upper: f64,
    pub alpha_d_upper: f64,
    /// Include the disturbance-visit observation in coverage statistics.
    pub include_initial: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: 1,
            seed: 0,
            jobs: 0,
            chains: 4,
            max_iters: 200_000,
            round_iters: 20_000,
            thin: 1,
            mem_cap_mb: 256.0,
            rhat_threshold: 1.1,
            ess_threshold: 200.0,
            p_threshold: 0.05,
            min_post_visits: 3,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            predictive_draws: 2000,
            alpha_upper: 1.0,
            gamma_upper: 2.0,
            alpha_d_upper: 0.9,
            include_initial: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: Self = toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                Ok(cfg)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.model == 1 || self.model == 2) {
            bail!("model must be 1 or 2, got {}", self.model);
        }
        if self.chains < 2 {
            bail!("at least 2 chains are required, got {}", self.chains);
        }
        if self.max_iters == 0 || self.round_iters == 0 {
            bail!("max_iters and round_iters must be positive");
        }
        if self.thin == 0 {
            bail!("thin must be at least 1");
        }
        for (name, v) in [
            ("mem_cap_mb", self.mem_cap_mb),
            ("rhat_threshold", self.rhat_threshold),
            ("ess_threshold", self.ess_threshold),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("alpha_upper", self.alpha_upper),
            ("gamma_upper", self.gamma_upper),
            ("alpha_d_upper", self.alpha_d_upper),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive and finite, got {v}");
            }
        }
        if self.rhat_threshold < 1.0 {
            bail!("rhat_threshold below 1 can never pass");
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            bail!("p_threshold must be in (0, 1), got {}", self.p_threshold);
        }
        if self.predictive_draws == 0 {
            bail!("predictive_draws must be at least 1");
        }
        if self.min_post_visits < 2 {
            bail!("min_post_visits below 2 cannot form a valid trajectory");
        }
        Ok(())
    }

    /// Stable digest of the resolved configuration, stamped into outputs.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { rel_tol: self.rel_tol, abs_tol: self.abs_tol, ..Default::default() }
    }

    pub fn prior(&self, duration: f64) -> Result<PriorSpec> {
        let g = biphasic::likelihood::GroupPrior {
            alpha: (0.0, self.alpha_upper),
            gamma: (0.0, self.gamma_upper),
            t_d: (0.0, duration),
            alpha_d: (0.0, self.alpha_d_upper),
        };
        Ok(PriorSpec::new(vec![g; self.model])?)
    }

    pub fn fit_config(&self, stream_offset: u64) -> FitConfig {
        FitConfig {
            chains: self.chains,
            max_iters: self.max_iters,
            round_iters: self.round_iters,
            seed: self.seed,
            stream_offset,
            thin: self.thin,
            mem_cap_mb: self.mem_cap_mb,
            thresholds: GateThresholds { r_hat: self.rhat_threshold, ess: self.ess_threshold },
            ram: RamOptions::default(),
            init_retry_cap: 100,
        }
    }
}

/// Stable per-trajectory RNG stream base: the low byte is reserved for the
/// chain index and purpose tags, so trajectories never share a stream.
pub fn stream_base(id: &str) -> u64 {
    let digest = Sha256::digest(id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) & !0xff
}

/// Stream used by the predictive simulation of a trajectory.
pub fn predictive_stream(id: &str) -> u64 {
    stream_base(id) | 0xff
}
