//! Runs the three sampler variants on the bimodal preset and scores each
//! against exact draws as the step count grows.

use adasched::importance::DEFAULT_EPSILON;
use adasched::metrics::wasserstein_1d;
use adasched::sampler::initial_noise;
use adasched::timesteps::{self, DEFAULT_THETA};
use adasched::{
    ImportanceCurve, MixtureEps, MixtureModel, NoiseSchedule, Sampler, SamplerConfig,
    SamplerVariant,
};

const BATCH: usize = 4000;

fn main() -> adasched::Result<()> {
    let schedule = NoiseSchedule::ddpm_default();
    let curve = ImportanceCurve::compute(&schedule, DEFAULT_EPSILON)?;
    let mixture = MixtureModel::preset("bimodal-1d").expect("preset");
    let model = MixtureEps::unconditional(&mixture, &schedule);

    let truth: Vec<f64> = mixture
        .sample_ground_truth(BATCH, 1)
        .into_iter()
        .map(|v| v[0])
        .collect();
    let initials = initial_noise(2, BATCH, 1);

    println!("steps  variant   W1");
    for n in [4, 8, 16] {
        let ts = timesteps::adaptive(&schedule, &curve, n, DEFAULT_THETA)?;
        for variant in SamplerVariant::ALL {
            let config = SamplerConfig {
                variant,
                rng_seed: 3,
                ..Default::default()
            };
            let sampler = Sampler::new(config, &schedule, &ts)?.with_curve(&curve)?;
            let out: Vec<f64> = sampler
                .sample_batch(&model, &initials)?
                .into_iter()
                .map(|v| v[0])
                .collect();
            println!(
                "{n:>5}  {:<8} {:.4}",
                variant.to_string(),
                wasserstein_1d(&out, &truth)?
            );
        }
    }

    // One chain in detail: where the gamma_i variant lands between anchors.
    let ts = timesteps::adaptive(&schedule, &curve, 8, DEFAULT_THETA)?;
    let sampler = Sampler::new(SamplerConfig::default(), &schedule, &ts)?.with_curve(&curve)?;
    let traj = sampler.run_chain(&model, &initials[0], 0)?;
    let visited: Vec<usize> = traj.states.iter().map(|(t, _)| *t).collect();
    println!(
        "anchors {:?}\nvisited {visited:?}\nfinal {:.4}",
        ts.steps(),
        traj.final_state[0]
    );
    Ok(())
}
