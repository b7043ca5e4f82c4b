use std::path::PathBuf;
use std::process::ExitCode;

use adasched::experiment::{self, ExperimentConfig};
use adasched::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    version,
    about = "Adaptive timestep schedules and few-step sampling on analytic mixtures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the importance curve and the equidistant/importance/adaptive schedules.
    Schedule(Common),
    /// Sample a batch and print (or write) a JSON report.
    Sample(Common),
    /// Run several configs and write a CSV matrix.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Extra config files, one row each.
        #[arg(long = "configs", num_args = 1..)]
        configs: Vec<PathBuf>,
        /// `key=v1,v2,...` over the base config, one row per value.
        #[arg(long)]
        sweep: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML or JSON config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    schedule_kind: Option<String>,
    #[arg(long)]
    num_train_steps: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
    #[arg(long)]
    importance_epsilon: Option<f64>,
    #[arg(long, short = 'n')]
    steps: Option<usize>,
    /// equidistant | importance | adaptive
    #[arg(long)]
    timesteps: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    /// plain | gamma | gamma_i
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    /// none | interpolate | negative_prompt
    #[arg(long)]
    cfg_mode: Option<String>,
    #[arg(long)]
    cfg_scale: Option<f64>,
    #[arg(long)]
    distill_omega: Option<f64>,
    #[arg(long)]
    condition: Option<usize>,
    #[arg(long)]
    negative: Option<usize>,
    /// none | tanh-balance | tanh-only | quantile
    #[arg(long)]
    clip_method: Option<String>,
    #[arg(long)]
    clip_alpha: Option<f64>,
    #[arg(long)]
    clip_beta: Option<f64>,
    #[arg(long)]
    quantile_q: Option<f64>,
    #[arg(long)]
    quantile_ceiling: Option<f64>,
    #[arg(long)]
    clip_channels: Option<usize>,
    /// balance-first | tanh-first
    #[arg(long)]
    clip_order: Option<String>,
    /// every-step | final-only
    #[arg(long)]
    clip_schedule: Option<String>,
    /// Preset (bimodal-1d, grid-2d, skewed-2d) or mixture file.
    #[arg(long)]
    mixture: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    directions: Option<usize>,
    /// Report path for `sample`, CSV path for `compare`, directory for `schedule`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trajectory CSV for `sample`.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        [
            ("schedule_kind", self.schedule_kind.clone()),
            ("num_train_steps", s(&self.num_train_steps)),
            ("beta_start", s(&self.beta_start)),
            ("beta_end", s(&self.beta_end)),
            ("importance_epsilon", s(&self.importance_epsilon)),
            ("steps", s(&self.steps)),
            ("timesteps", self.timesteps.clone()),
            ("theta", s(&self.theta)),
            ("variant", self.variant.clone()),
            ("gamma", s(&self.gamma)),
            ("cfg_mode", self.cfg_mode.clone()),
            ("cfg_scale", s(&self.cfg_scale)),
            ("distill_omega", s(&self.distill_omega)),
            ("condition", s(&self.condition)),
            ("negative", s(&self.negative)),
            ("clip_method", self.clip_method.clone()),
            ("clip_alpha", s(&self.clip_alpha)),
            ("clip_beta", s(&self.clip_beta)),
            ("quantile_q", s(&self.quantile_q)),
            ("quantile_ceiling", s(&self.quantile_ceiling)),
            ("clip_channels", s(&self.clip_channels)),
            ("clip_order", self.clip_order.clone()),
            ("clip_schedule", self.clip_schedule.clone()),
            ("mixture", self.mixture.clone()),
            ("batch", s(&self.batch)),
            ("seed", s(&self.seed)),
            ("directions", s(&self.directions)),
            ("trajectories", path(&self.trajectories)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    fn resolve(&self, file: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
        let mut cfg = match file {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in self.overrides() {
            cfg.set(key, &value)?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Schedule(common) => {
            let cfg = common.resolve(common.config.as_ref())?;
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let (curve, schedules) = experiment::cmd_schedule(&cfg, &dir)?;
            eprintln!("wrote {} and {}", curve.display(), schedules.display());
        }
        Command::Sample(common) => {
            let mut cfg = common.resolve(common.config.as_ref())?;
            cfg.out = common.out.clone().or(cfg.out);
            experiment::cmd_sample(&cfg)?;
        }
        Command::Compare {
            common,
            configs,
            sweep,
        } => {
            let mut rows = Vec::new();
            if common.config.is_some() || sweep.is_some() || configs.is_empty() {
                let base = common.resolve(common.config.as_ref())?;
                match &sweep {
                    Some(arg) => rows.extend(experiment::sweep(&base, arg)?),
                    None => rows.push(base),
                }
            }
            for path in &configs {
                rows.push(common.resolve(Some(path))?);
            }
            let table = experiment::cmd_compare(&rows)?;
            match &common.out {
                Some(path) => {
                    let f = std::fs::File::create(path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    experiment::write_compare(&table, f)?;
                }
                None => experiment::write_compare(&table, std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
