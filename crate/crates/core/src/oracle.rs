//! Analytic Gaussian-mixture diffusion model.
//!
//! A mixture of isotropic Gaussians stays a mixture of isotropic Gaussians
//! under the forward process: at step `t` component `k` has mean
//! `sqrt(ab) * mu_k` and variance `ab * var_k + 1 - ab`. That makes the score
//! `grad_x log p_t(x)` available in closed form, and with it the exact noise
//! prediction `eps = -sqrt(1 - ab) * score`.
//!
//! Each component doubles as a condition label. The conditional model for
//! label `k` is component `k` alone; the unconditional model is the full
//! mixture.

use std::path::Path;

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::guidance::{GuidanceConfig, GuidanceMode};
use crate::noise_schedule::NoiseSchedule;
use crate::sampler::EpsModel;
use crate::seed::ChainRng;

const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct MixtureModel {
    dim: usize,
    components: Vec<Component>,
}

/// On-disk form of a mixture: just the component list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<Component>,
}

impl TryFrom<MixtureSpec> for MixtureModel {
    type Error = Error;

    fn try_from(spec: MixtureSpec) -> Result<Self> {
        MixtureModel::new(spec.components)
    }
}

impl From<MixtureModel> for MixtureSpec {
    fn from(m: MixtureModel) -> Self {
        MixtureSpec {
            components: m.components,
        }
    }
}

impl MixtureModel {
    /// Weights must lie in [0, 1] and sum to one; variances must be positive.
    /// Zero-weight components are allowed and still usable as conditions.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or(Error::Empty("mixture components"))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be at least 1"));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            check_dim(dim, c.mean.len())?;
            check_finite(&c.mean, "component mean")?;
            if !(0.0..=1.0).contains(&c.weight) {
                return Err(Error::invalid(format!(
                    "weight[{k}] = {} outside [0, 1]",
                    c.weight
                )));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::invalid(format!(
                    "variance[{k}] = {} must be positive",
                    c.variance
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { dim, components })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: MixtureSpec = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Self::try_from(spec)
    }

    /// Built-in mixtures: `bimodal-1d`, `grid-2d`, `skewed-2d`.
    pub fn preset(name: &str) -> Option<Self> {
        let c = |weight: f64, mean: &[f64], variance: f64| Component {
            weight,
            mean: mean.to_vec(),
            variance,
        };
        let components = match name {
            "bimodal-1d" => vec![c(0.3, &[-0.5], 0.01), c(0.7, &[0.5], 0.01)],
            "grid-2d" => {
                let axis = [-0.5, 0.0, 0.5];
                axis.iter()
                    .flat_map(|&a| axis.iter().map(move |&b| [a, b]))
                    .map(|m| c(1.0 / 9.0, &m, 0.005))
                    .collect()
            }
            "skewed-2d" => vec![
                c(0.6, &[-0.4, -0.3], 0.02),
                c(0.3, &[0.45, 0.35], 0.01),
                c(0.1, &[0.5, -0.55], 0.005),
            ],
            _ => return None,
        };
        Some(Self::new(components).expect("preset is valid"))
    }

    pub const PRESETS: [&'static str; 3] = ["bimodal-1d", "grid-2d", "skewed-2d"];

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label < self.components.len() {
            Ok(())
        } else {
            Err(Error::UnknownCondition {
                label,
                components: self.components.len(),
            })
        }
    }

    /// The single-component model for condition `label`.
    pub fn conditioned(&self, label: usize) -> Result<Self> {
        self.check_label(label)?;
        let mut c = self.components[label].clone();
        c.weight = 1.0;
        Self::new(vec![c])
    }

    /// Mixture parameters after diffusing to signal level `alpha_bar`.
    pub fn diffused_at(&self, alpha_bar: f64) -> Self {
        let signal = alpha_bar.sqrt();
        let components = self
            .components
            .iter()
            .map(|c| Component {
                weight: c.weight,
                mean: c.mean.iter().map(|m| signal * m).collect(),
                variance: alpha_bar * c.variance + (1.0 - alpha_bar),
            })
            .collect();
        Self {
            dim: self.dim,
            components,
        }
    }

    pub fn diffused_params(&self, schedule: &NoiseSchedule, t: usize) -> Result<Self> {
        Ok(self.diffused_at(schedule.alpha_bar(t)?))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_finite(x, "x")
    }

    /// Per-component `ln w_k + ln N(x; m_k, v_k I)` at signal level `alpha_bar`.
    fn component_log_densities(&self, x: &[f64], alpha_bar: f64) -> Vec<f64> {
        let d = self.dim as f64;
        let signal = alpha_bar.sqrt();
        self.components
            .iter()
            .map(|c| {
                let var = alpha_bar * c.variance + (1.0 - alpha_bar);
                let sq: f64 = x
                    .iter()
                    .zip(&c.mean)
                    .map(|(xi, m)| (xi - signal * m).powi(2))
                    .sum();
                c.weight.ln() - 0.5 * sq / var - 0.5 * d * (2.0 * std::f64::consts::PI * var).ln()
            })
            .collect()
    }

    /// `ln p_t(x)` via log-sum-exp over components.
    pub fn log_density(&self, schedule: &NoiseSchedule, x: &[f64], t: usize) -> Result<f64> {
        self.check_point(x)?;
        let ab = schedule.alpha_bar(t)?;
        Ok(log_sum_exp(&self.component_log_densities(x, ab)))
    }

    /// Posterior component probabilities given `x` at step `t`.
    pub fn responsibilities(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
    ) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let ab = schedule.alpha_bar(t)?;
        Ok(softmax(&self.component_log_densities(x, ab)))
    }

    /// Score of diffused component `label` alone.
    pub fn component_score(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
        label: usize,
    ) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_label(label)?;
        let ab = schedule.alpha_bar(t)?;
        Ok(self.component_score_at(x, ab, label))
    }

    fn component_score_at(&self, x: &[f64], alpha_bar: f64, label: usize) -> Vec<f64> {
        let c = &self.components[label];
        let signal = alpha_bar.sqrt();
        let var = alpha_bar * c.variance + (1.0 - alpha_bar);
        x.iter()
            .zip(&c.mean)
            .map(|(xi, m)| (signal * m - xi) / var)
            .collect()
    }

    /// `grad_x log p_t(x)` of the full mixture.
    pub fn score(&self, schedule: &NoiseSchedule, x: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let ab = schedule.alpha_bar(t)?;
        Ok(self.score_at(x, ab))
    }

    fn score_at(&self, x: &[f64], alpha_bar: f64) -> Vec<f64> {
        let resp = softmax(&self.component_log_densities(x, alpha_bar));
        let mut out = vec![0.0; self.dim];
        for (k, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            for (o, s) in out.iter_mut().zip(self.component_score_at(x, alpha_bar, k)) {
                *o += r * s;
            }
        }
        out
    }

    /// Exact noise prediction; `condition` restricts to one component.
    pub fn epsilon_prediction(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: usize,
        condition: Option<usize>,
    ) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let ab = schedule.alpha_bar(t)?;
        let score = match condition {
            Some(label) => {
                self.check_label(label)?;
                self.component_score_at(x, ab, label)
            }
            None => self.score_at(x, ab),
        };
        let sigma = (1.0 - ab).sqrt();
        Ok(score.into_iter().map(|s| -sigma * s).collect())
    }

    /// Exact ancestral draws, deterministic in `seed`.
    pub fn sample_ground_truth(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::SeedableRng;
        let mut rng = ChainRng::seed_from_u64(seed);
        self.sample_with(count, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let weights = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .expect("validated weights");
        (0..count)
            .map(|_| {
                let c = &self.components[weights.sample(rng)];
                let sd = c.variance.sqrt();
                c.mean
                    .iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect()
    }

    /// Closed-form mean `sum_k w_k mu_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for c in &self.components {
            for (o, m) in out.iter_mut().zip(&c.mean) {
                *o += c.weight * m;
            }
        }
        out
    }

    /// Closed-form covariance `sum_k w_k (var_k I + mu_k mu_k^T) - mu mu^T`,
    /// row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mu = self.mean();
        let mut cov = vec![0.0; d * d];
        for c in &self.components {
            for i in 0..d {
                cov[i * d + i] += c.weight * c.variance;
                for j in 0..d {
                    cov[i * d + j] += c.weight * c.mean[i] * c.mean[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= mu[i] * mu[j];
            }
        }
        cov
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(values);
    values.iter().map(|v| (v - lse).exp()).collect()
}

/// Noise predictor backed by a mixture, with optional condition and guidance.
///
/// With guidance active the conditional prediction is combined with a
/// reference prediction: the unconditional mixture, or the component named
/// by `negative`.
#[derive(Debug, Clone)]
pub struct MixtureEps<'a> {
    model: &'a MixtureModel,
    schedule: &'a NoiseSchedule,
    condition: Option<usize>,
    negative: Option<usize>,
    guidance: GuidanceConfig,
}

impl<'a> MixtureEps<'a> {
    pub fn unconditional(model: &'a MixtureModel, schedule: &'a NoiseSchedule) -> Self {
        Self {
            model,
            schedule,
            condition: None,
            negative: None,
            guidance: GuidanceConfig::default(),
        }
    }

    pub fn conditional(
        model: &'a MixtureModel,
        schedule: &'a NoiseSchedule,
        condition: usize,
    ) -> Result<Self> {
        model.check_label(condition)?;
        Ok(Self {
            condition: Some(condition),
            ..Self::unconditional(model, schedule)
        })
    }

    pub fn guided(
        model: &'a MixtureModel,
        schedule: &'a NoiseSchedule,
        condition: usize,
        negative: Option<usize>,
        guidance: GuidanceConfig,
    ) -> Result<Self> {
        guidance.validate()?;
        model.check_label(condition)?;
        if let Some(n) = negative {
            model.check_label(n)?;
        }
        Ok(Self {
            model,
            schedule,
            condition: Some(condition),
            negative,
            guidance,
        })
    }
}

impl EpsModel for MixtureEps<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn predict(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let cond = self
            .model
            .epsilon_prediction(self.schedule, x, t, self.condition)?;
        if self.guidance.mode == GuidanceMode::None || self.condition.is_none() {
            return Ok(cond);
        }
        let reference = self
            .model
            .epsilon_prediction(self.schedule, x, t, self.negative)?;
        self.guidance.combine(&cond, &reference)
    }
}
