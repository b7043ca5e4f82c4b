//! Exposure mitigation for predicted clean samples.
//!
//! `exposure_correct` recentres the tensor (per channel, then globally) and
//! squashes it with `tanh`. `quantile_clip` is the dynamic-thresholding
//! baseline it is compared against.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

pub const DEFAULT_BALANCE: f64 = 0.5;
pub const DEFAULT_QUANTILE: f64 = 0.995;
pub const DEFAULT_QUANTILE_CEILING: f64 = 1.0;

/// Flat data viewed as `(channels, elements-per-channel)`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    data: Vec<f64>,
    channels: usize,
}

impl ChannelTensor {
    pub fn new(data: Vec<f64>, channels: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("channel tensor"));
        }
        if channels == 0 || !data.len().is_multiple_of(channels) {
            return Err(Error::invalid(format!(
                "{} values cannot be split into {channels} channels",
                data.len()
            )));
        }
        check_finite(&data, "channel tensor")?;
        Ok(Self { data, channels })
    }

    pub fn single(data: Vec<f64>) -> Result<Self> {
        Self::new(data, 1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel_len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.channel_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn mean(&self) -> f64 {
        mean(&self.data)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            channels: self.channels,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `x_c -= alpha * mean(x_c)` for each channel, then `x -= beta * mean(x)`
/// using the mean of the channel-shifted tensor.
pub fn color_balance(x: &ChannelTensor, alpha: f64, beta: f64) -> ChannelTensor {
    let n = x.channel_len();
    let mut data = x.data.clone();
    for chunk in data.chunks_mut(n) {
        let shift = alpha * mean(chunk);
        chunk.iter_mut().for_each(|v| *v -= shift);
    }
    let shift = beta * mean(&data);
    data.iter_mut().for_each(|v| *v -= shift);
    ChannelTensor {
        data,
        channels: x.channels,
    }
}

pub fn smooth_clip(x: &ChannelTensor) -> ChannelTensor {
    x.map(f64::tanh)
}

pub fn exposure_correct(x: &ChannelTensor, alpha: f64, beta: f64) -> ChannelTensor {
    smooth_clip(&color_balance(x, alpha, beta))
}

/// `s = clamp(quantile_q(|x|), 1, ceiling)`, output `clip(x, -s, s) / s`.
pub fn quantile_clip(x: &ChannelTensor, q: f64, ceiling: f64) -> Result<ChannelTensor> {
    check_quantile_params(q, ceiling)?;
    let abs: Vec<f64> = x.data.iter().map(|v| v.abs()).collect();
    let s = quantile(&abs, q).clamp(1.0, ceiling);
    Ok(x.map(|v| v.clamp(-s, s) / s))
}

fn check_quantile_params(q: f64, ceiling: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!(
            "quantile must be in (0, 1], got {q}"
        )));
    }
    if !(ceiling >= 1.0 && ceiling.is_finite()) {
        return Err(Error::invalid(format!(
            "quantile ceiling must be >= 1, got {ceiling}"
        )));
    }
    Ok(())
}

/// Linear-interpolation empirical quantile (position `q * (n - 1)`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClipMethod {
    #[default]
    None,
    TanhBalance,
    TanhOnly,
    Quantile,
}

impl ClipMethod {
    pub const ALL: [ClipMethod; 4] = [
        ClipMethod::None,
        ClipMethod::TanhBalance,
        ClipMethod::TanhOnly,
        ClipMethod::Quantile,
    ];
}

impl fmt::Display for ClipMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipMethod::None => "none",
            ClipMethod::TanhBalance => "tanh-balance",
            ClipMethod::TanhOnly => "tanh-only",
            ClipMethod::Quantile => "quantile",
        })
    }
}

/// Order of centring and squashing inside `tanh-balance`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClipOrder {
    #[default]
    BalanceFirst,
    TanhFirst,
}

/// When the sampler applies post-processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClipSchedule {
    /// Every intermediate clean-sample estimate.
    #[default]
    EveryStep,
    /// Only the terminal estimate.
    FinalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    pub method: ClipMethod,
    pub alpha: f64,
    pub beta: f64,
    pub quantile_q: f64,
    pub quantile_ceiling: f64,
    /// Channel count used to view each sample; must divide its dimension.
    pub channels: usize,
    pub order: ClipOrder,
    pub schedule: ClipSchedule,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            method: ClipMethod::None,
            alpha: DEFAULT_BALANCE,
            beta: DEFAULT_BALANCE,
            quantile_q: DEFAULT_QUANTILE,
            quantile_ceiling: DEFAULT_QUANTILE_CEILING,
            channels: 1,
            order: ClipOrder::BalanceFirst,
            schedule: ClipSchedule::EveryStep,
        }
    }
}

impl PostprocessConfig {
    pub fn with_method(method: ClipMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn enabled(&self) -> bool {
        self.method != ClipMethod::None
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("clip alpha", self.alpha), ("clip beta", self.beta)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if self.channels == 0 {
            return Err(Error::invalid("channels must be at least 1"));
        }
        check_quantile_params(self.quantile_q, self.quantile_ceiling)
    }

    /// Applies the configured method to one flat sample.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.method == ClipMethod::None {
            return Ok(x.to_vec());
        }
        let t = ChannelTensor::new(x.to_vec(), self.channels)?;
        let out = match (self.method, self.order) {
            (ClipMethod::None, _) => t,
            (ClipMethod::TanhOnly, _) => smooth_clip(&t),
            (ClipMethod::TanhBalance, ClipOrder::BalanceFirst) => {
                exposure_correct(&t, self.alpha, self.beta)
            }
            (ClipMethod::TanhBalance, ClipOrder::TanhFirst) => {
                color_balance(&smooth_clip(&t), self.alpha, self.beta)
            }
            (ClipMethod::Quantile, _) => quantile_clip(&t, self.quantile_q, self.quantile_ceiling)?,
        };
        Ok(out.into_data())
    }
}
