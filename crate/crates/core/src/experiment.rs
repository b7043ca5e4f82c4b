//! Experiment configuration and the `schedule`, `sample` and `compare`
//! commands.
//!
//! A configuration is a flat record so that files, flags and sweeps all
//! address fields by the same key. Every random draw derives from `seed`
//! through [`crate::seed`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::guidance::{GuidanceConfig, GuidanceMode, DEFAULT_GUIDANCE_SCALE};
use crate::importance::{ImportanceCurve, DEFAULT_EPSILON};
use crate::metrics::{self, RunReport, DEFAULT_DIRECTIONS};
use crate::noise_schedule::{
    NoiseSchedule, ScheduleKind, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_TRAIN_STEPS,
};
use crate::oracle::{MixtureEps, MixtureModel};
use crate::postprocess::{
    ClipMethod, ClipOrder, ClipSchedule, PostprocessConfig, DEFAULT_BALANCE, DEFAULT_QUANTILE,
    DEFAULT_QUANTILE_CEILING,
};
use crate::sampler::{initial_noise, Sampler, SamplerConfig, SamplerVariant, DEFAULT_GAMMA};
use crate::seed::{stream, Purpose};
use crate::timesteps::{self, TimestepSchedule, DEFAULT_THETA};

pub const DEFAULT_STEPS: usize = 8;
pub const DEFAULT_BATCH: usize = 2000;

/// How the sampling timesteps are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimestepRule {
    Equidistant,
    Importance,
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schedule_kind: ScheduleKind,
    pub num_train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub importance_epsilon: f64,
    pub steps: usize,
    pub timesteps: TimestepRule,
    pub theta: f64,
    pub variant: SamplerVariant,
    pub gamma: f64,
    pub cfg_mode: GuidanceMode,
    pub cfg_scale: f64,
    pub distill_omega: Option<f64>,
    /// Component to condition on; required when guidance is active.
    pub condition: Option<usize>,
    /// Reference component for guidance; the full mixture when unset.
    pub negative: Option<usize>,
    pub clip_method: ClipMethod,
    pub clip_alpha: f64,
    pub clip_beta: f64,
    pub quantile_q: f64,
    pub quantile_ceiling: f64,
    pub clip_channels: usize,
    pub clip_order: ClipOrder,
    pub clip_schedule: ClipSchedule,
    /// Preset name or path to a JSON/TOML mixture file.
    pub mixture: String,
    pub batch: usize,
    pub seed: u64,
    pub directions: usize,
    pub out: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schedule_kind: ScheduleKind::Linear,
            num_train_steps: DEFAULT_TRAIN_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            importance_epsilon: DEFAULT_EPSILON,
            steps: DEFAULT_STEPS,
            timesteps: TimestepRule::Adaptive,
            theta: DEFAULT_THETA,
            variant: SamplerVariant::GammaI,
            gamma: DEFAULT_GAMMA,
            cfg_mode: GuidanceMode::None,
            cfg_scale: DEFAULT_GUIDANCE_SCALE,
            distill_omega: None,
            condition: None,
            negative: None,
            clip_method: ClipMethod::None,
            clip_alpha: DEFAULT_BALANCE,
            clip_beta: DEFAULT_BALANCE,
            quantile_q: DEFAULT_QUANTILE,
            quantile_ceiling: DEFAULT_QUANTILE_CEILING,
            clip_channels: 1,
            clip_order: ClipOrder::BalanceFirst,
            clip_schedule: ClipSchedule::EveryStep,
            mixture: "bimodal-1d".into(),
            batch: DEFAULT_BATCH,
            seed: 0,
            directions: DEFAULT_DIRECTIONS,
            out: None,
            trajectories: None,
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    /// Loads TOML (`.toml`) or JSON (anything else).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(config_error)
        } else {
            serde_json::from_str(&text).map_err(config_error)
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_error)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(config_error)
    }

    /// Sets field `key` (dashes or underscores) from its textual form.
    /// Numbers and booleans parse as such; enum names accept either
    /// separator; `none`/`null` clears optional fields.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let key = key.trim_start_matches("--").replace('-', "_");
        let mut doc = serde_json::to_value(&*self).map_err(config_error)?;
        let fields = doc.as_object_mut().expect("config is a record");
        if !fields.contains_key(&key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        let mut candidates: Vec<Value> = Vec::new();
        if let Ok(v) = serde_json::from_str::<Value>(raw) {
            candidates.push(v);
        }
        candidates.push(Value::String(raw.to_string()));
        candidates.push(Value::String(raw.replace('-', "_")));
        candidates.push(Value::String(raw.replace('_', "-")));
        if matches!(raw, "none" | "null") {
            candidates.push(Value::Null);
        }
        for v in candidates {
            fields.insert(key.clone(), v);
            if let Ok(cfg) = serde_json::from_value::<Self>(Value::Object(fields.clone())) {
                *self = cfg;
                return Ok(());
            }
        }
        Err(Error::Config(format!("invalid value `{raw}` for `{key}`")))
    }

    pub fn guidance(&self) -> GuidanceConfig {
        GuidanceConfig {
            omega: self.cfg_scale,
            mode: self.cfg_mode,
            distill_omega: self.distill_omega,
        }
    }

    pub fn postprocess(&self) -> PostprocessConfig {
        PostprocessConfig {
            method: self.clip_method,
            alpha: self.clip_alpha,
            beta: self.clip_beta,
            quantile_q: self.quantile_q,
            quantile_ceiling: self.quantile_ceiling,
            channels: self.clip_channels,
            order: self.clip_order,
            schedule: self.clip_schedule,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            variant: self.variant,
            gamma: self.gamma,
            postprocess: self.postprocess(),
            rng_seed: self.seed,
        }
    }

    pub fn load_mixture(&self) -> Result<MixtureModel> {
        match MixtureModel::preset(&self.mixture) {
            Some(m) => Ok(m),
            None => {
                let path = Path::new(&self.mixture);
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "`{}` is neither a preset ({}) nor a file",
                        self.mixture,
                        MixtureModel::PRESETS.join(", ")
                    )));
                }
                MixtureModel::from_file(path)
            }
        }
    }

    pub fn build_schedule(&self) -> Result<NoiseSchedule> {
        if self.schedule_kind == ScheduleKind::Custom {
            return Err(Error::Config(
                "custom schedules are built from alpha-bar values in code".into(),
            ));
        }
        NoiseSchedule::build(
            self.schedule_kind,
            self.num_train_steps,
            self.beta_start,
            self.beta_end,
        )
    }

    /// Schedule, curve and sampling timesteps.
    pub fn resolve_schedule(&self) -> Result<(NoiseSchedule, ImportanceCurve, TimestepSchedule)> {
        let schedule = self.build_schedule()?;
        let curve = ImportanceCurve::compute(&schedule, self.importance_epsilon)?;
        let ts = match self.timesteps {
            TimestepRule::Equidistant => timesteps::equidistant(&schedule, self.steps)?,
            TimestepRule::Importance => timesteps::importance(&curve, self.steps)?,
            TimestepRule::Adaptive => {
                timesteps::adaptive(&schedule, &curve, self.steps, self.theta)?
            }
        };
        Ok((schedule, curve, ts))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        self.guidance().validate()?;
        self.sampler_config().validate()?;
        if self.cfg_mode != GuidanceMode::None && self.condition.is_none() {
            return Err(Error::Config("guidance needs a condition label".into()));
        }
        Ok(())
    }

    /// Copy used in reports: output locations do not affect results.
    fn echo(&self) -> Self {
        Self {
            out: None,
            trajectories: None,
            ..self.clone()
        }
    }
}

pub type Report = RunReport<ExperimentConfig>;

/// Outputs of one `sample` run.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub report: Report,
    pub samples: Vec<Vec<f64>>,
    pub trajectories: Option<Vec<crate::sampler::SampleTrajectory>>,
}

/// Runs the sampler over a batch and scores it against exact draws from
/// the target: the conditioned component when a condition is set, the
/// full mixture otherwise.
pub fn run_sample(config: &ExperimentConfig, keep_trajectories: bool) -> Result<SampleRun> {
    let start = Instant::now();
    config.validate()?;
    let mixture = config.load_mixture()?;
    let (schedule, curve, ts) = config.resolve_schedule()?;

    let model = match config.condition {
        None => MixtureEps::unconditional(&mixture, &schedule),
        Some(c) if config.cfg_mode == GuidanceMode::None => {
            MixtureEps::conditional(&mixture, &schedule, c)?
        }
        Some(c) => MixtureEps::guided(&mixture, &schedule, c, config.negative, config.guidance())?,
    };
    let target = match config.condition {
        Some(c) => mixture.conditioned(c)?,
        None => mixture.clone(),
    };

    let sampler = Sampler::new(config.sampler_config(), &schedule, &ts)?.with_curve(&curve)?;
    let initials = initial_noise(config.seed, config.batch, mixture.dim());
    let (samples, trajectories) = if keep_trajectories {
        let runs = sampler.run_batch(&model, &initials)?;
        let finals = runs.iter().map(|r| r.final_state.clone()).collect();
        (finals, Some(runs))
    } else {
        (sampler.sample_batch(&model, &initials)?, None)
    };

    let truth = target.sample_with(
        config.batch,
        &mut stream(config.seed, Purpose::GroundTruth, 0),
    );
    let moments = metrics::moments_error(&samples, &target)?;
    let distance =
        metrics::distribution_distance(&samples, &truth, config.directions, config.seed)?;
    let per_eval = if config.cfg_mode == GuidanceMode::None {
        1
    } else {
        2
    };

    let report = RunReport {
        config: config.echo(),
        timesteps: ts.steps().to_vec(),
        step_count: ts.len(),
        model_evaluations: ts.len() * per_eval,
        mean_error: moments.mean_error,
        cov_error: moments.cov_error,
        wasserstein1: distance,
        saturation_fraction: metrics::saturation_fraction(&samples),
        wall_time_ms: Some(start.elapsed().as_millis() as u64),
    };
    report.check()?;
    Ok(SampleRun {
        report,
        samples,
        trajectories,
    })
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

/// Writes `curve.csv` (t, alpha_bar, snr, importance) and `schedules.csv`
/// (slot, t_e, t_i, t_as, provenance, importance) into `dir`.
pub fn cmd_schedule(config: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let schedule = config.build_schedule()?;
    let curve = ImportanceCurve::compute(&schedule, config.importance_epsilon)?;
    let n = config.steps;
    let t_e = timesteps::equidistant(&schedule, n)?;
    let t_i = timesteps::importance(&curve, n)?;
    let t_as = timesteps::adaptive(&schedule, &curve, n, config.theta)?;

    let curve_path = dir.join("curve.csv");
    let err = csv_err(&curve_path);
    let mut w = csv_writer(&curve_path)?;
    w.write_record(["t", "alpha_bar", "snr", "importance"])
        .map_err(&err)?;
    for t in 0..schedule.num_steps() {
        w.write_record([
            t.to_string(),
            schedule.alpha_bars()[t].to_string(),
            schedule.snr(t)?.to_string(),
            curve.values()[t].to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(&curve_path, e))?;
    drop(err);

    let sched_path = dir.join("schedules.csv");
    let err = csv_err(&sched_path);
    let mut w = csv_writer(&sched_path)?;
    w.write_record(["slot", "t_e", "t_i", "t_as", "provenance", "importance"])
        .map_err(&err)?;
    for slot in 0..n {
        let t = t_as.steps()[slot];
        w.write_record([
            slot.to_string(),
            t_e.steps()[slot].to_string(),
            t_i.steps()[slot].to_string(),
            t.to_string(),
            t_as.provenance()[slot].to_string(),
            curve.values()[t].to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(&sched_path, e))?;
    drop(err);
    Ok((curve_path, sched_path))
}

/// Runs one experiment, writes the JSON report to `config.out` (stdout when
/// unset) and optionally the trajectories CSV.
pub fn cmd_sample(config: &ExperimentConfig) -> Result<Report> {
    let run = run_sample(config, config.trajectories.is_some())?;
    let json = serde_json::to_string_pretty(&run.report).map_err(config_error)?;
    match &config.out {
        Some(path) => {
            let mut f = create(path)?;
            writeln!(f, "{json}").map_err(|e| Error::io(path, e))?;
        }
        None => println!("{json}"),
    }
    if let (Some(path), Some(trajs)) = (&config.trajectories, &run.trajectories) {
        write_trajectories(path, trajs)?;
    }
    Ok(run.report)
}

/// One row per visited state: `chain, position, timestep, x0..`; the
/// terminal estimate has timestep `clean`.
pub fn write_trajectories(path: &Path, trajs: &[crate::sampler::SampleTrajectory]) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    let dim = trajs.first().map_or(0, |t| t.final_state.len());
    let mut header = vec!["chain".to_string(), "position".into(), "timestep".into()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(&err)?;
    for (chain, traj) in trajs.iter().enumerate() {
        let rows = traj
            .states
            .iter()
            .map(|(t, x)| (t.to_string(), x))
            .chain(std::iter::once(("clean".to_string(), &traj.final_state)));
        for (pos, (t, x)) in rows.enumerate() {
            let mut rec = vec![chain.to_string(), pos.to_string(), t];
            rec.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Expands `key=v1,v2,...` into one config per value.
pub fn sweep(base: &ExperimentConfig, arg: &str) -> Result<Vec<ExperimentConfig>> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("sweep `{arg}` is not key=v1,v2,...")))?;
    values
        .split(',')
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(key.trim(), v.trim())?;
            Ok(cfg)
        })
        .collect()
}

pub const COMPARE_COLUMNS: [&str; 16] = [
    "row",
    "steps",
    "timesteps",
    "theta",
    "variant",
    "gamma",
    "cfg_mode",
    "cfg_scale",
    "clip_method",
    "schedule",
    "mean_error",
    "cov_error",
    "wasserstein1",
    "saturation_fraction",
    "model_evaluations",
    "step_count",
];

/// Runs each config and returns one CSV row per config, in input order.
/// All configs must share mixture and seed.
pub fn cmd_compare(configs: &[ExperimentConfig]) -> Result<Vec<Vec<String>>> {
    let first = match configs {
        [first, _, ..] => first,
        _ => return Err(Error::Config("compare needs at least two configs".into())),
    };
    if let Some(bad) = configs
        .iter()
        .find(|c| c.mixture != first.mixture || c.seed != first.seed)
    {
        return Err(Error::Config(format!(
            "configs must share mixture and seed: `{}`/{} vs `{}`/{}",
            first.mixture, first.seed, bad.mixture, bad.seed
        )));
    }
    configs
        .iter()
        .enumerate()
        .map(|(i, cfg)| {
            let r = run_sample(cfg, false)?.report;
            let steps = r
                .timesteps
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            Ok(vec![
                i.to_string(),
                cfg.steps.to_string(),
                format!("{:?}", cfg.timesteps).to_lowercase(),
                cfg.theta.to_string(),
                cfg.variant.to_string(),
                cfg.gamma.to_string(),
                cfg.cfg_mode.to_string(),
                cfg.cfg_scale.to_string(),
                cfg.clip_method.to_string(),
                steps,
                r.mean_error.to_string(),
                r.cov_error.to_string(),
                r.wasserstein1.to_string(),
                r.saturation_fraction.to_string(),
                r.model_evaluations.to_string(),
                r.step_count.to_string(),
            ])
        })
        .collect()
}

/// Writes compare rows as CSV to `out`.
pub fn write_compare<W: Write>(rows: &[Vec<String>], out: W) -> Result<()> {
    let err = |e: csv::Error| Error::io("<compare>", std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARE_COLUMNS).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<compare>", e))
}
