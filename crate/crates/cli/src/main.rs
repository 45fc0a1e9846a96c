//! Batch CLI for biphasic recovery calibration.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use biphasic_cli::commands;
use biphasic_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "biphasic",
    about = "Calibrate biphasic recovery models to benthic cover surveys",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalFlags {
    /// Flat key-value config file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = machine default).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Number of model groups: 1 or 2.
    #[arg(long, global = true)]
    model: Option<usize>,

    #[arg(long, global = true)]
    max_iters: Option<u64>,

    #[arg(long, global = true)]
    chains: Option<usize>,

    #[arg(long, global = true)]
    rhat_threshold: Option<f64>,

    #[arg(long, global = true)]
    ess_threshold: Option<f64>,

    #[arg(long, global = true)]
    p_threshold: Option<f64>,
}

impl GlobalFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.chains {
            cfg.chains = v;
        }
        if let Some(v) = self.rhat_threshold {
            cfg.rhat_threshold = v;
        }
        if let Some(v) = self.ess_threshold {
            cfg.ess_threshold = v;
        }
        if let Some(v) = self.p_threshold {
            cfg.p_threshold = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fabricate a synthetic transect survey from known parameters.
    Simulate {
        /// Simulation spec (JSON).
        #[arg(long)]
        params: PathBuf,
        /// Output survey CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment a survey into recovery trajectories and disturbance events.
    Segment {
        #[arg(long)]
        survey: PathBuf,
        /// Taxonomy table CSV (raw_label,model_group).
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Site metadata CSV (reef,site,K_override).
        #[arg(long)]
        site_meta: Option<PathBuf>,
        /// Directory for trajectories.json and events.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sample every trajectory posterior.
    Fit {
        #[arg(long)]
        trajectories: PathBuf,
        /// Directory for per-trajectory draws and fit_report.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Recompute the convergence table from stored draws.
    Diagnose {
        #[arg(long)]
        draws_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior predictive bands and observed quantiles.
    Predict {
        #[arg(long)]
        draws_dir: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        /// Directory for bands.csv and quantiles.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Pool observed quantiles into the coverage curve.
    Coverage {
        #[arg(long)]
        quantiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep the disturbance-visit observations (excluded by default).
        #[arg(long)]
        include_initial: bool,
    },
    /// Render static SVG figures.
    Plot {
        #[command(subcommand)]
        what: PlotCommand,
    },
}

#[derive(Subcommand)]
enum PlotCommand {
    /// Recovery band figures, one per trajectory and group.
    Bands {
        #[arg(long)]
        bands: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Coverage curve figure.
    Coverage {
        #[arg(long)]
        coverage: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Marginal posterior histograms.
    Marginals {
        #[arg(long)]
        draws_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-chain trace plots.
    Traces {
        #[arg(long)]
        draws_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Family of undamped recovery curves across shape parameters.
    GrowthCurves {
        #[arg(long, default_value_t = 90.0)]
        k: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 5.0)]
        c0: f64,
        /// Comma-separated shape parameter values.
        #[arg(long, value_delimiter = ',', default_value = "0.000001,1,5")]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 30.0)]
        t_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.global.resolve()?;
    commands::init_jobs(&config)?;
    match cli.command {
        Command::Simulate { params, out } => {
            commands::simulate::run(&config, &params, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Segment { survey, taxonomy, site_meta, out_dir } => {
            let summary = commands::segment::run(
                &config,
                &survey,
                taxonomy.as_deref(),
                site_meta.as_deref(),
                &out_dir,
            )?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} records ({} rejected), {} sites, {} disturbances, {} trajectories",
                summary.records,
                summary.rejected_rows,
                summary.sites,
                summary.events,
                summary.trajectories
            );
        }
        Command::Fit { trajectories, out_dir } => {
            let summary = commands::fit::run(&config, &trajectories, &out_dir)?;
            eprintln!("fitted {} trajectories, {} converged", summary.fitted, summary.converged);
        }
        Command::Diagnose { draws_dir, out } => {
            let summary = commands::diagnose::run(&config, &draws_dir, &out)?;
            eprintln!("{} trajectories, {} pass the gate", summary.trajectories, summary.passed);
        }
        Command::Predict { draws_dir, trajectories, out_dir } => {
            let summary =
                commands::predict::run(&config, &draws_dir, &trajectories, &out_dir)?;
            eprintln!(
                "{} trajectories, {} observations",
                summary.trajectories, summary.observations
            );
        }
        Command::Coverage { quantiles, out, include_initial } => {
            let mut config = config;
            config.include_initial |= include_initial;
            let summary = commands::coverage::run(&config, &quantiles, &out)?;
            eprintln!(
                "{} observations pooled ({} initial visits skipped)",
                summary.observations, summary.skipped_initial
            );
        }
        Command::Plot { what } => match what {
            PlotCommand::Bands { bands, trajectories, out_dir } => {
                let n = commands::plot::bands(&config, &bands, &trajectories, &out_dir)?;
                eprintln!("wrote {n} band figures");
            }
            PlotCommand::Coverage { coverage, out } => {
                commands::plot::coverage(&config, &coverage, &out)?;
                eprintln!("wrote {}", out.display());
            }
            PlotCommand::Marginals { draws_dir, out_dir } => {
                let n = commands::plot::marginals(&config, &draws_dir, &out_dir)?;
                eprintln!("wrote {n} marginal figures");
            }
            PlotCommand::Traces { draws_dir, out_dir } => {
                let n = commands::plot::traces(&config, &draws_dir, &out_dir)?;
                eprintln!("wrote {n} trace figures");
            }
            PlotCommand::GrowthCurves { k, alpha, c0, gammas, t_max, out } => {
                commands::plot::growth_curves(&config, k, alpha, c0, &gammas, t_max, &out)?;
                eprintln!("wrote {}", out.display());
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": {
                    "message": format!("{err:#}"),
                }
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
