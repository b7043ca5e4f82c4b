//! Per-timestep importance.
//!
//! For a schedule with log-SNR sequence `l_t = ln(alpha_bar_t / (1 - alpha_bar_t) + eps)`
//! the importance of step `t` is the inverse magnitude of the discrete
//! gradient of `l`, normalised by its maximum over all steps:
//!
//! ```text
//! I_t = |grad l_t|^-1 / max_j |grad l_j|^-1
//! ```
//!
//! The gradient is a central difference at interior points and a one-sided
//! difference at both ends. A gradient that is exactly zero contributes
//! `1 / eps` in place of the infinite inverse.

use serde::Serialize;

use crate::error::{check_index, Error, Result};
use crate::noise_schedule::{NoiseSchedule, ScheduleId};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceCurve {
    values: Vec<f64>,
    epsilon: f64,
    source: ScheduleId,
}

impl ImportanceCurve {
    pub fn compute(schedule: &NoiseSchedule, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let n = schedule.num_steps();
        if n < 3 {
            return Err(Error::invalid(format!(
                "importance needs at least 3 steps, schedule has {n}"
            )));
        }
        let log_snr: Vec<f64> = schedule
            .alpha_bars()
            .iter()
            .map(|ab| (ab / (1.0 - ab) + epsilon).ln())
            .collect();

        let inverse: Vec<f64> = discrete_gradient(&log_snr)
            .into_iter()
            .map(|g| {
                if g == 0.0 {
                    1.0 / epsilon
                } else {
                    1.0 / g.abs()
                }
            })
            .collect();
        let peak = inverse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::NonFinite("importance normaliser".into()));
        }
        let values = inverse.iter().map(|v| v / peak).collect();
        Ok(Self {
            values,
            epsilon,
            source: schedule.id(),
        })
    }

    /// Wraps precomputed values. They must lie in [0, 1] with maximum 1.
    pub fn from_values(values: Vec<f64>, epsilon: f64, source: ScheduleId) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("importance values"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("importance values must lie in [0, 1]"));
        }
        if values[argmax_first(&values)] != 1.0 {
            return Err(Error::invalid("importance values must peak at exactly 1"));
        }
        Ok(Self {
            values,
            epsilon,
            source,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn source_schedule_id(&self) -> ScheduleId {
        self.source
    }

    pub fn at(&self, t: usize) -> Result<f64> {
        check_index(t, self.values.len())?;
        Ok(self.values[t])
    }

    /// First index attaining the maximum (which is 1).
    pub fn argmax(&self) -> usize {
        argmax_first(&self.values)
    }

    pub fn matches(&self, schedule: &NoiseSchedule) -> bool {
        self.source == schedule.id() && self.values.len() == schedule.num_steps()
    }
}

/// Central differences inside, forward/backward differences at the ends.
pub(crate) fn discrete_gradient(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|t| match t {
            0 => values[1] - values[0],
            t if t == n - 1 => values[n - 1] - values[n - 2],
            t => (values[t + 1] - values[t - 1]) / 2.0,
        })
        .collect()
}

/// Index of the first maximum; ties go to the lowest index.
pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
