//! Discrete variance-preserving forward-diffusion schedules.
//!
//! A schedule holds the per-step variance increments `beta_t`, the retention
//! factors `alpha_t = 1 - beta_t` and their running product
//! `alpha_bar_t = prod_{i <= t} alpha_i`. Everything downstream consumes
//! `alpha_bar`: the marginal at step `t` is
//! `x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) noise`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_index, Error, Result};

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Offset used by the squared-cosine profile.
const COSINE_OFFSET: f64 = 0.008;
/// Upper bound on any single beta of the cosine profile.
const COSINE_MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    ScaledLinear,
    Cosine,
    /// Built directly from a prescribed `alpha_bar` sequence.
    Custom,
}

impl ScheduleKind {
    pub const BUILT_IN: [ScheduleKind; 3] = [
        ScheduleKind::Linear,
        ScheduleKind::ScaledLinear,
        ScheduleKind::Cosine,
    ];
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::ScaledLinear => "scaled_linear",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Identity of a schedule, derived from the bit patterns of its `alpha_bar`
/// array. Two schedules with the same id are numerically identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    id: ScheduleId,
}

impl NoiseSchedule {
    /// Builds a schedule of `num_steps` steps.
    ///
    /// `beta_start`/`beta_end` drive the linear and scaled-linear kinds; the
    /// cosine kind ignores them but they are still validated.
    pub fn build(
        kind: ScheduleKind,
        num_steps: usize,
        beta_start: f64,
        beta_end: f64,
    ) -> Result<Self> {
        if num_steps < 2 {
            return Err(Error::invalid(format!(
                "num_steps must be >= 2, got {num_steps}"
            )));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let last = (num_steps - 1) as f64;
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear => (0..num_steps)
                .map(|t| beta_start + (beta_end - beta_start) * t as f64 / last)
                .collect(),
            ScheduleKind::ScaledLinear => {
                let (lo, hi) = (beta_start.sqrt(), beta_end.sqrt());
                (0..num_steps)
                    .map(|t| {
                        let r = lo + (hi - lo) * t as f64 / last;
                        r * r
                    })
                    .collect()
            }
            ScheduleKind::Cosine => {
                let profile = |u: f64| {
                    ((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2)
                        .cos()
                        .powi(2)
                };
                let n = num_steps as f64;
                (0..num_steps)
                    .map(|t| {
                        let b = 1.0 - profile((t + 1) as f64 / n) / profile(t as f64 / n);
                        b.min(COSINE_MAX_BETA)
                    })
                    .collect()
            }
            ScheduleKind::Custom => {
                return Err(Error::invalid(
                    "custom schedules are built with NoiseSchedule::from_alpha_bars",
                ))
            }
        };
        Self::from_betas(kind, betas)
    }

    /// The canonical linear schedule, 1e-4 to 0.02 over 1000 steps.
    pub fn ddpm_default() -> Self {
        Self::build(
            ScheduleKind::Linear,
            DEFAULT_TRAIN_STEPS,
            DEFAULT_BETA_START,
            DEFAULT_BETA_END,
        )
        .expect("default schedule parameters are valid")
    }

    /// Builds a schedule whose cumulative products are exactly `alpha_bars`.
    ///
    /// The sequence must be strictly decreasing inside (0, 1).
    pub fn from_alpha_bars(alpha_bars: Vec<f64>) -> Result<Self> {
        if alpha_bars.len() < 2 {
            return Err(Error::invalid("need at least two alpha_bar values"));
        }
        let mut alphas = Vec::with_capacity(alpha_bars.len());
        let mut prev = 1.0;
        for (t, &ab) in alpha_bars.iter().enumerate() {
            if !(ab > 0.0 && ab < prev) {
                return Err(Error::invalid(format!(
                    "alpha_bar must be strictly decreasing in (0, 1); alpha_bar[{t}] = {ab}"
                )));
            }
            alphas.push(ab / prev);
            prev = ab;
        }
        let betas: Vec<f64> = alphas.iter().map(|a| 1.0 - a).collect();
        let alphas = betas.iter().map(|b| 1.0 - b).collect();
        let id = fingerprint(&alpha_bars);
        Ok(Self {
            kind: ScheduleKind::Custom,
            betas,
            alphas,
            alpha_bars,
            id,
        })
    }

    fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        if let Some((t, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > 0.0 && b < 1.0))
        {
            return Err(Error::invalid(format!("beta[{t}] = {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars: Vec<f64> = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        if alpha_bars.iter().any(|&ab| ab <= 0.0) {
            return Err(Error::invalid("alpha_bar underflowed to zero"));
        }
        let id = fingerprint(&alpha_bars);
        Ok(Self {
            kind,
            betas,
            alphas,
            alpha_bars,
            id,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn num_steps(&self) -> usize {
        self.alpha_bars.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn id(&self) -> ScheduleId {
        self.id
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        check_index(t, self.num_steps())?;
        Ok(self.alpha_bars[t])
    }

    /// Signal-to-noise ratio `alpha_bar_t / (1 - alpha_bar_t)`.
    pub fn snr(&self, t: usize) -> Result<f64> {
        let ab = self.alpha_bar(t)?;
        Ok(ab / (1.0 - ab))
    }

    /// Noises `x0` to step `t` with the supplied standard-normal draw.
    pub fn forward_diffuse(&self, x0: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>> {
        check_dim(x0.len(), noise.len())?;
        let ab = self.alpha_bar(t)?;
        let (signal, sigma) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x0
            .iter()
            .zip(noise)
            .map(|(x, z)| signal * x + sigma * z)
            .collect())
    }
}

fn fingerprint(values: &[f64]) -> ScheduleId {
    // FNV-1a over the raw bits; stable across runs and platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    ScheduleId(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_product() {
        let s = NoiseSchedule::build(ScheduleKind::Linear, 2, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bars(), &[0.5, 0.25]);
    }

    #[test]
    fn first_alpha_bar_is_one_minus_beta_start() {
        let s = NoiseSchedule::ddpm_default();
        assert_eq!(s.alpha_bars()[0], 1.0 - 1e-4);
        assert_eq!(s.alpha_bars()[0], s.alphas()[0]);
    }

    #[test]
    fn alphas_are_exact_complements() {
        for kind in ScheduleKind::BUILT_IN {
            let s = NoiseSchedule::build(kind, 1000, 1e-4, 0.02).unwrap();
            for (a, b) in s.alphas().iter().zip(s.betas()) {
                assert_eq!(*a, 1.0 - b);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSchedule::build(ScheduleKind::Linear, 1, 1e-4, 0.02).is_err());
        assert!(NoiseSchedule::build(ScheduleKind::Linear, 10, 0.0, 0.02).is_err());
        assert!(NoiseSchedule::build(ScheduleKind::Linear, 10, 0.03, 0.02).is_err());
        assert!(NoiseSchedule::build(ScheduleKind::Linear, 10, 1e-4, 1.0).is_err());
        assert!(NoiseSchedule::build(ScheduleKind::Custom, 10, 1e-4, 0.02).is_err());
    }

    #[test]
    fn snr_examples() {
        let s = NoiseSchedule::from_alpha_bars(vec![0.8, 0.5]).unwrap();
        assert!((s.snr(0).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(s.snr(1).unwrap(), 1.0);
        assert!(matches!(
            s.snr(2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn forward_diffuse_zero_noise_scales_signal() {
        let s = NoiseSchedule::ddpm_default();
        let x0 = [0.3, -1.2];
        let out = s.forward_diffuse(&x0, 400, &[0.0, 0.0]).unwrap();
        let k = s.alpha_bar(400).unwrap().sqrt();
        assert_eq!(out, vec![k * 0.3, k * -1.2]);
        assert!(s.forward_diffuse(&x0, 400, &[0.0]).is_err());
    }

    #[test]
    fn forward_diffuse_at_full_noise_returns_noise() {
        let s = NoiseSchedule::ddpm_default();
        let out = s.forward_diffuse(&[1.0], 999, &[0.7]).unwrap();
        assert!((out[0] - 0.7).abs() < 1e-2);
    }

    #[test]
    fn from_alpha_bars_round_trips() {
        let s = NoiseSchedule::ddpm_default();
        let c = NoiseSchedule::from_alpha_bars(s.alpha_bars().to_vec()).unwrap();
        assert_eq!(c.alpha_bars(), s.alpha_bars());
        assert_eq!(c.id(), s.id());
        assert!(NoiseSchedule::from_alpha_bars(vec![0.5, 0.6]).is_err());
        assert!(NoiseSchedule::from_alpha_bars(vec![1.0, 0.6]).is_err());
    }

    #[test]
    fn cosine_is_valid_and_differs_from_linear() {
        let cos = NoiseSchedule::build(ScheduleKind::Cosine, 1000, 1e-4, 0.02).unwrap();
        let lin = NoiseSchedule::ddpm_default();
        assert!(cos.alpha_bars().windows(2).all(|w| w[0] > w[1]));
        assert!(cos.betas().iter().all(|&b| b <= COSINE_MAX_BETA));
        assert_ne!(cos.id(), lin.id());
    }
}
