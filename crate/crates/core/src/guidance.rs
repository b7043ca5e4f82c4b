//! Classifier-free guidance.
//!
//! Two parameterisations are kept apart because they use the scale
//! differently:
//!
//! * interpolate: `(1 + w) * eps(c) - w * eps(null)`, with `w = 0` giving the
//!   plain conditional prediction;
//! * negative prompt: `eps(c_n) + w * (eps(c) - eps(c_n))`, with `w = 1`
//!   giving the plain conditional prediction.
//!
//! With `eps(c_n) = eps(null)` the negative form at `w + 1` equals the
//! interpolate form at `w`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const DEFAULT_GUIDANCE_SCALE: f64 = 7.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    #[default]
    None,
    Interpolate,
    NegativePrompt,
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidanceMode::None => "none",
            GuidanceMode::Interpolate => "interpolate",
            GuidanceMode::NegativePrompt => "negative_prompt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub omega: f64,
    pub mode: GuidanceMode,
    /// Scale the model was distilled under, for the compounding diagnostic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distill_omega: Option<f64>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            omega: DEFAULT_GUIDANCE_SCALE,
            mode: GuidanceMode::None,
            distill_omega: None,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::invalid(format!(
                "guidance scale must be >= 0, got {}",
                self.omega
            )));
        }
        if let Some(w) = self.distill_omega {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!(
                    "distill omega must be >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Combines a conditional and a reference prediction according to `mode`.
    /// For `None` the conditional prediction is returned unchanged.
    pub fn combine(&self, eps_cond: &[f64], eps_ref: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            GuidanceMode::None => Ok(eps_cond.to_vec()),
            GuidanceMode::Interpolate => guide_interpolate(eps_cond, eps_ref, self.omega),
            GuidanceMode::NegativePrompt => guide_negative(eps_cond, eps_ref, self.omega),
        }
    }

    pub fn compounding(&self) -> Option<Result<Compounding>> {
        self.distill_omega.map(|w| compounding_scale(self.omega, w))
    }
}

pub fn guide_interpolate(eps_cond: &[f64], eps_uncond: &[f64], omega: f64) -> Result<Vec<f64>> {
    check_dim(eps_cond.len(), eps_uncond.len())?;
    Ok(eps_cond
        .iter()
        .zip(eps_uncond)
        .map(|(c, u)| (1.0 + omega) * c - omega * u)
        .collect())
}

pub fn guide_negative(eps_cond: &[f64], eps_neg: &[f64], omega: f64) -> Result<Vec<f64>> {
    check_dim(eps_cond.len(), eps_neg.len())?;
    Ok(eps_cond
        .iter()
        .zip(eps_neg)
        .map(|(c, n)| n + omega * (c - n))
        .collect())
}

/// Effective amplification when guidance `omega` is applied on top of a model
/// distilled with guidance `distill_omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Compounding {
    pub scale: f64,
    /// Mixing coefficient `(omega - 1) / (omega * distill_omega)`; `None`
    /// when the product is zero.
    pub alpha: Option<f64>,
}

pub fn compounding_scale(omega: f64, distill_omega: f64) -> Result<Compounding> {
    if !(omega >= 0.0 && distill_omega >= 0.0) {
        return Err(Error::invalid(format!(
            "guidance scales must be >= 0, got {omega} and {distill_omega}"
        )));
    }
    let scale = omega * distill_omega;
    let alpha = (scale != 0.0).then(|| (omega - 1.0) / scale);
    Ok(Compounding { scale, alpha })
}
