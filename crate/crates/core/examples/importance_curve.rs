//! Prints the importance curve of each built-in noise schedule at a few
//! timesteps, plus where it peaks.

use adasched::importance::DEFAULT_EPSILON;
use adasched::noise_schedule::{DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_TRAIN_STEPS};
use adasched::{ImportanceCurve, NoiseSchedule, ScheduleKind};

fn main() -> adasched::Result<()> {
    for kind in ScheduleKind::BUILT_IN {
        let schedule = NoiseSchedule::build(
            kind,
            DEFAULT_TRAIN_STEPS,
            DEFAULT_BETA_START,
            DEFAULT_BETA_END,
        )?;
        let curve = ImportanceCurve::compute(&schedule, DEFAULT_EPSILON)?;
        println!("{kind}: peak at t={}", curve.argmax());
        for t in [0, 100, 250, 500, 750, 900, 999] {
            println!(
                "  t={t:>4}  alpha_bar={:.6e}  snr={:.4e}  I={:.4}",
                schedule.alpha_bar(t)?,
                schedule.snr(t)?,
                curve.at(t)?
            );
        }
    }
    Ok(())
}
