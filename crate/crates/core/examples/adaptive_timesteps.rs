//! Builds equidistant, importance and adaptive timestep schedules side by side
//! and shows which slots the adaptive rule took from the importance peaks.

use adasched::importance::DEFAULT_EPSILON;
use adasched::timesteps::{self, DEFAULT_THETA};
use adasched::{ImportanceCurve, NoiseSchedule};

fn main() -> adasched::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(8);
    let schedule = NoiseSchedule::ddpm_default();
    let curve = ImportanceCurve::compute(&schedule, DEFAULT_EPSILON)?;

    let te = timesteps::equidistant(&schedule, n)?;
    let ti = timesteps::importance(&curve, n)?;
    let tas = timesteps::adaptive(&schedule, &curve, n, DEFAULT_THETA)?;

    println!("slot  t_e  t_i  t_as  source      I(t_as)");
    for i in 0..n {
        let (t, prov) = (tas.steps()[i], tas.provenance()[i]);
        println!(
            "{i:>4} {:>4} {:>4} {:>5}  {:<10} {:.3}",
            te.steps()[i],
            ti.steps()[i],
            t,
            prov.to_string(),
            curve.at(t)?
        );
    }

    // Sweep the threshold: lower theta lets more importance slots through.
    for theta in [0.0, 0.5, 0.7, 0.9, 1.0] {
        let s = timesteps::adaptive(&schedule, &curve, n, theta)?;
        println!("theta={theta:.1}: {:?}", s.steps());
    }
    Ok(())
}
