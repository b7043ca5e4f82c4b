//! Few-step reverse sampling.
//!
//! Every variant walks the timestep schedule high-noise first and finishes
//! with a denoise to a clean estimate.
//!
//! * `plain`: deterministic denoise from each slot straight to the next.
//! * `gamma`: denoise to `round((1 - gamma) * t_next)`, then noisify back up
//!   to `t_next` with fresh noise.
//! * `gamma_i`: as `gamma`, except transitions into an importance-selected
//!   slot denoise to `round(I[t_next] * t_next)`.
//!
//! Noise is only drawn when the intermediate target is strictly below
//! `t_next`, so `gamma = 0` reproduces `plain` bit for bit.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::importance::ImportanceCurve;
use crate::noise_schedule::NoiseSchedule;
use crate::postprocess::{ClipSchedule, PostprocessConfig};
use crate::seed::{stream, ChainRng, Purpose};
use crate::timesteps::{Provenance, TimestepSchedule};

pub const DEFAULT_GAMMA: f64 = 0.2;

/// A noise predictor `eps(x, t)`.
pub trait EpsModel: Sync {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64], t: usize) -> Result<Vec<f64>>;
}

impl<M: EpsModel + ?Sized> EpsModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn predict(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        (**self).predict(x, t)
    }
}

/// Wraps a closure as an [`EpsModel`].
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64], usize) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> EpsModel for FnModel<F>
where
    F: Fn(&[f64], usize) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        Ok((self.f)(x, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Step(usize),
    Clean,
}

fn predict_checked<M: EpsModel + ?Sized>(model: &M, x: &[f64], t: usize) -> Result<Vec<f64>> {
    let eps = model.predict(x, t)?;
    check_dim(x.len(), eps.len())?;
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("noise prediction at t={t}")));
    }
    Ok(eps)
}

/// One deterministic step from `t_from` to `target`, optionally passing the
/// clean estimate through `post`. When `post` changes the estimate, the
/// noise term is re-derived from it so the step stays on the line through
/// `x` and the processed estimate.
fn denoise_with<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x: &[f64],
    t_from: usize,
    target: Target,
    post: Option<&PostprocessConfig>,
) -> Result<Vec<f64>> {
    if let Target::Step(t_to) = target {
        if t_to == t_from {
            return Ok(x.to_vec());
        }
        if t_to > t_from {
            return Err(Error::invalid(format!(
                "denoise must move to a lower timestep, got {t_from} -> {t_to}"
            )));
        }
    }
    let ab = schedule.alpha_bar(t_from)?;
    let mut eps = predict_checked(model, x, t_from)?;
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut x0: Vec<f64> = x
        .iter()
        .zip(&eps)
        .map(|(xi, e)| (xi - sb * e) / sa)
        .collect();
    if let Some(p) = post.filter(|p| p.enabled()) {
        x0 = p.apply(&x0)?;
        eps = x
            .iter()
            .zip(&x0)
            .map(|(xi, c)| (xi - sa * c) / sb)
            .collect();
    }
    let out = match target {
        Target::Clean => x0,
        Target::Step(t_to) => {
            let ab_to = schedule.alpha_bar(t_to)?;
            let (ta, tb) = (ab_to.sqrt(), (1.0 - ab_to).sqrt());
            x0.iter().zip(&eps).map(|(c, e)| ta * c + tb * e).collect()
        }
    };
    check_finite(&out, "sampler state")?;
    Ok(out)
}

/// `x_hat_0 = (x - sqrt(1 - ab_from) eps) / sqrt(ab_from)`, then
/// `x_to = sqrt(ab_to) x_hat_0 + sqrt(1 - ab_to) eps`.
pub fn denoise_step<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x: &[f64],
    t_from: usize,
    t_to: usize,
) -> Result<Vec<f64>> {
    denoise_with(model, schedule, x, t_from, Target::Step(t_to), None)
}

/// The clean-sample estimate `x_hat_0` at `t_from`.
pub fn denoise_to_clean<M: EpsModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x: &[f64],
    t_from: usize,
) -> Result<Vec<f64>> {
    denoise_with(model, schedule, x, t_from, Target::Clean, None)
}

/// Forward kernel from `t_from` up to `t_to`:
/// `sqrt(r) x + sqrt(1 - r) noise` with `r = ab_to / ab_from`.
pub fn noisify(
    schedule: &NoiseSchedule,
    x: &[f64],
    t_from: usize,
    t_to: usize,
    noise: &[f64],
) -> Result<Vec<f64>> {
    check_dim(x.len(), noise.len())?;
    if t_to < t_from {
        return Err(Error::invalid(format!(
            "noisify must move to a higher timestep, got {t_from} -> {t_to}"
        )));
    }
    if t_to == t_from {
        return Ok(x.to_vec());
    }
    let r = schedule.alpha_bar(t_to)? / schedule.alpha_bar(t_from)?;
    let (a, b) = (r.sqrt(), (1.0 - r).sqrt());
    Ok(x.iter().zip(noise).map(|(xi, n)| a * xi + b * n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerVariant {
    Plain,
    Gamma,
    #[default]
    GammaI,
}

impl SamplerVariant {
    pub const ALL: [SamplerVariant; 3] = [
        SamplerVariant::Plain,
        SamplerVariant::Gamma,
        SamplerVariant::GammaI,
    ];
}

impl fmt::Display for SamplerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerVariant::Plain => "plain",
            SamplerVariant::Gamma => "gamma",
            SamplerVariant::GammaI => "gamma_i",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub variant: SamplerVariant,
    /// Ignored by `plain`.
    pub gamma: f64,
    pub postprocess: PostprocessConfig,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            variant: SamplerVariant::default(),
            gamma: DEFAULT_GAMMA,
            postprocess: PostprocessConfig::default(),
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        self.postprocess.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleTrajectory {
    /// Every visited `(timestep, state)`, starting with the initial noise.
    pub states: Vec<(usize, Vec<f64>)>,
    /// Terminal clean estimate.
    pub final_state: Vec<f64>,
}

/// Binds a noise schedule and timestep schedule to a configuration.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    config: SamplerConfig,
    schedule: &'a NoiseSchedule,
    timesteps: &'a TimestepSchedule,
    curve: Option<&'a ImportanceCurve>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        config: SamplerConfig,
        schedule: &'a NoiseSchedule,
        timesteps: &'a TimestepSchedule,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(&top) = timesteps.steps().first() {
            if top >= schedule.num_steps() {
                return Err(Error::IndexOutOfRange {
                    index: top,
                    len: schedule.num_steps(),
                });
            }
        }
        Ok(Self {
            config,
            schedule,
            timesteps,
            curve: None,
        })
    }

    /// Attaches the importance curve read by `gamma_i`.
    pub fn with_curve(mut self, curve: &'a ImportanceCurve) -> Result<Self> {
        if !curve.matches(self.schedule) {
            return Err(Error::invalid(
                "importance curve was not computed from the sampler's schedule",
            ));
        }
        self.curve = Some(curve);
        Ok(self)
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn timesteps(&self) -> &TimestepSchedule {
        self.timesteps
    }

    /// Intermediate denoise target for the transition into slot `next`.
    fn intermediate(&self, next: usize) -> Result<usize> {
        let (t_next, prov) = (
            self.timesteps.steps()[next],
            self.timesteps.provenance()[next],
        );
        let scale = match (self.config.variant, prov) {
            (SamplerVariant::Plain, _) => return Ok(t_next),
            (SamplerVariant::GammaI, Provenance::Importance) => {
                let curve = self.curve.ok_or_else(|| {
                    Error::invalid("gamma_i needs an importance curve for this schedule")
                })?;
                curve.at(t_next)?
            }
            _ => 1.0 - self.config.gamma,
        };
        Ok(((scale * t_next as f64).round().max(0.0) as usize).min(t_next))
    }

    /// Runs one chain from `initial`, drawing any noise from `rng`.
    pub fn run<M: EpsModel + ?Sized, R: Rng + ?Sized>(
        &self,
        model: &M,
        initial: &[f64],
        rng: &mut R,
    ) -> Result<SampleTrajectory> {
        check_dim(model.dim(), initial.len())?;
        check_finite(initial, "initial state")?;
        let steps = self.timesteps.steps();
        let post = &self.config.postprocess;
        let every = (post.schedule == ClipSchedule::EveryStep).then_some(post);

        let mut x = initial.to_vec();
        let mut states = vec![(steps[0], x.clone())];
        for next in 1..steps.len() {
            let (t, t_next) = (steps[next - 1], steps[next]);
            let s = self.intermediate(next)?;
            x = denoise_with(model, self.schedule, &x, t, Target::Step(s), every)?;
            if s < t_next {
                states.push((s, x.clone()));
                let noise: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
                x = noisify(self.schedule, &x, s, t_next, &noise)?;
            }
            states.push((t_next, x.clone()));
        }
        let last = *steps.last().expect("non-empty schedule");
        let final_state = denoise_with(model, self.schedule, &x, last, Target::Clean, Some(post))?;
        Ok(SampleTrajectory {
            states,
            final_state,
        })
    }

    /// Runs chain `index` with its own noise stream derived from the seed.
    pub fn run_chain<M: EpsModel + ?Sized>(
        &self,
        model: &M,
        initial: &[f64],
        index: u64,
    ) -> Result<SampleTrajectory> {
        let mut rng = self.chain_rng(index);
        self.run(model, initial, &mut rng)
    }

    pub fn chain_rng(&self, index: u64) -> ChainRng {
        stream(self.config.rng_seed, Purpose::Sampler, index)
    }

    /// Runs one chain per initial state in parallel. Results do not depend on
    /// thread count.
    pub fn run_batch<M: EpsModel + ?Sized>(
        &self,
        model: &M,
        initials: &[Vec<f64>],
    ) -> Result<Vec<SampleTrajectory>> {
        initials
            .par_iter()
            .enumerate()
            .map(|(i, x)| self.run_chain(model, x, i as u64))
            .collect()
    }

    /// Like `run_batch` but keeps only terminal states.
    pub fn sample_batch<M: EpsModel + ?Sized>(
        &self,
        model: &M,
        initials: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        initials
            .par_iter()
            .enumerate()
            .map(|(i, x)| self.run_chain(model, x, i as u64).map(|t| t.final_state))
            .collect()
    }
}

/// Standard-normal starting states, one stream per chain.
pub fn initial_noise(root_seed: u64, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = stream(root_seed, Purpose::Initial, i as u64);
            (0..dim).map(|_| rng.sample(StandardNormal)).collect()
        })
        .collect()
}

/// One-shot convenience around [`Sampler`].
pub fn run_sampler<M: EpsModel + ?Sized>(
    config: SamplerConfig,
    schedule: &NoiseSchedule,
    timesteps: &TimestepSchedule,
    curve: Option<&ImportanceCurve>,
    model: &M,
    initial: &[f64],
) -> Result<SampleTrajectory> {
    let mut sampler = Sampler::new(config, schedule, timesteps)?;
    if let Some(c) = curve {
        sampler = sampler.with_curve(c)?;
    }
    sampler.run_chain(model, initial, 0)
}
