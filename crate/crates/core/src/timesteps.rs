//! Target-timestep selection.
//!
//! Three sampling schedules of `n` steps over a `T`-step noise schedule:
//!
//! * **equidistant**: `n` uniformly spaced indices from `T - 1` down to `0`,
//!   each rounded to the nearest integer.
//! * **importance**: `[0, T)` is cut into `n` contiguous intervals of equal
//!   width and each interval contributes its most important step.
//! * **adaptive**: slot `i` takes the importance candidate of interval `i`
//!   when that candidate's importance exceeds `theta`, otherwise the
//!   equidistant candidate of slot `i`. The result always has `n` steps.
//!
//! Schedules are stored high-noise first. Slot `i` of every schedule pairs
//! with the `i`-th interval counted from the top.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::{argmax_first, ImportanceCurve};
use crate::noise_schedule::NoiseSchedule;

pub const DEFAULT_THETA: f64 = 0.7;

/// Which rule supplied a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Equidistant,
    Importance,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Equidistant => "equidistant",
            Provenance::Importance => "importance",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestepSchedule {
    steps: Vec<usize>,
    provenance: Vec<Provenance>,
    theta: Option<f64>,
}

impl TimestepSchedule {
    /// Builds a schedule from explicit steps, checking the ordering invariant.
    pub fn new(steps: Vec<usize>, provenance: Vec<Provenance>, theta: Option<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Empty("timestep schedule"));
        }
        if steps.len() != provenance.len() {
            return Err(Error::DimensionMismatch {
                expected: steps.len(),
                found: provenance.len(),
            });
        }
        if let Some(w) = steps.windows(2).find(|w| w[0] <= w[1]) {
            return Err(Error::invalid(format!(
                "timesteps must be strictly decreasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            steps,
            provenance,
            theta,
        })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Provenance)> + '_ {
        self.steps
            .iter()
            .copied()
            .zip(self.provenance.iter().copied())
    }

    /// Writes `slot,timestep,importance,provenance` rows.
    pub fn write_csv<W: Write>(&self, curve: &ImportanceCurve, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "timestep", "importance", "provenance"])
            .map_err(csv_error)?;
        for (slot, (t, p)) in self.iter().enumerate() {
            w.write_record([
                slot.to_string(),
                t.to_string(),
                curve.at(t)?.to_string(),
                p.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e))
}

fn check_count(n: usize, num_steps: usize) -> Result<()> {
    if n < 2 || n > num_steps {
        return Err(Error::invalid(format!(
            "step count must be in [2, {num_steps}], got {n}"
        )));
    }
    Ok(())
}

/// Equidistant candidate for slot `i` of `n` over `num_steps` steps.
fn equidistant_slot(num_steps: usize, n: usize, i: usize) -> usize {
    let last = (num_steps - 1) as f64;
    (last * (n - 1 - i) as f64 / (n - 1) as f64).round() as usize
}

/// Bounds `[lo, hi)` of the interval paired with slot `i`.
fn slot_interval(num_steps: usize, n: usize, i: usize) -> (usize, usize) {
    let k = n - 1 - i;
    (k * num_steps / n, (k + 1) * num_steps / n)
}

pub fn equidistant(schedule: &NoiseSchedule, n: usize) -> Result<TimestepSchedule> {
    let num_steps = schedule.num_steps();
    check_count(n, num_steps)?;
    let steps = (0..n).map(|i| equidistant_slot(num_steps, n, i)).collect();
    TimestepSchedule::new(steps, vec![Provenance::Equidistant; n], None)
}

pub fn importance(curve: &ImportanceCurve, n: usize) -> Result<TimestepSchedule> {
    check_count(n, curve.len())?;
    let steps = (0..n)
        .map(|i| importance_slot(curve, n, i))
        .collect::<Vec<_>>();
    TimestepSchedule::new(steps, vec![Provenance::Importance; n], None)
}

fn importance_slot(curve: &ImportanceCurve, n: usize, i: usize) -> usize {
    let (lo, hi) = slot_interval(curve.len(), n, i);
    lo + argmax_first(&curve.values()[lo..hi])
}

pub fn adaptive(
    schedule: &NoiseSchedule,
    curve: &ImportanceCurve,
    n: usize,
    theta: f64,
) -> Result<TimestepSchedule> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid(format!(
            "theta must be in [0, 1], got {theta}"
        )));
    }
    if !curve.matches(schedule) {
        return Err(Error::invalid(
            "importance curve was not computed from this schedule",
        ));
    }
    let num_steps = schedule.num_steps();
    check_count(n, num_steps)?;

    let mut steps = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for i in 0..n {
        let candidate = importance_slot(curve, n, i);
        if curve.values()[candidate] > theta {
            steps.push(candidate);
            provenance.push(Provenance::Importance);
        } else {
            steps.push(equidistant_slot(num_steps, n, i));
            provenance.push(Provenance::Equidistant);
        }
    }
    resolve_collisions(&mut steps)?;
    TimestepSchedule::new(steps, provenance, Some(theta))
}

/// Pushes each later (smaller-t) entry below its predecessor.
fn resolve_collisions(steps: &mut [usize]) -> Result<()> {
    for i in 1..steps.len() {
        if steps[i] >= steps[i - 1] {
            steps[i] = steps[i - 1]
                .checked_sub(1)
                .ok_or_else(|| Error::invalid("cannot place distinct timesteps below zero"))?;
        }
    }
    Ok(())
}
