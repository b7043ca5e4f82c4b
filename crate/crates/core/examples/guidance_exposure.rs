//! Strong classifier-free guidance pushes samples past the data range. This
//! compares saturation under each post-processing method, plus the
//! compounding diagnostic for guidance on a distilled model.

use adasched::guidance::{compounding_scale, GuidanceMode};
use adasched::metrics::saturation_fraction;
use adasched::oracle::Component;
use adasched::postprocess::PostprocessConfig;
use adasched::sampler::initial_noise;
use adasched::timesteps;
use adasched::{
    ClipMethod, GuidanceConfig, MixtureEps, MixtureModel, NoiseSchedule, Sampler, SamplerConfig,
    SamplerVariant,
};

fn main() -> adasched::Result<()> {
    let schedule = NoiseSchedule::ddpm_default();
    let mixture = MixtureModel::new(vec![
        Component {
            weight: 0.5,
            mean: vec![0.4, 0.4, 0.2],
            variance: 0.01,
        },
        Component {
            weight: 0.5,
            mean: vec![-0.4, -0.4, -0.2],
            variance: 0.01,
        },
    ])?;
    let guidance = GuidanceConfig {
        omega: 7.5,
        mode: GuidanceMode::Interpolate,
        distill_omega: None,
    };
    let model = MixtureEps::guided(&mixture, &schedule, 0, None, guidance)?;
    let ts = timesteps::equidistant(&schedule, 2)?;
    let initials = initial_noise(11, 512, 3);

    for method in ClipMethod::ALL {
        let config = SamplerConfig {
            variant: SamplerVariant::Plain,
            postprocess: PostprocessConfig {
                channels: 3,
                ..PostprocessConfig::with_method(method)
            },
            ..Default::default()
        };
        let out = Sampler::new(config, &schedule, &ts)?.sample_batch(&model, &initials)?;
        let mean: f64 = out.iter().flatten().sum::<f64>() / (out.len() * 3) as f64;
        println!(
            "{:<13} saturation={:.3} mean={mean:.3}",
            method.to_string(),
            saturation_fraction(&out)
        );
    }

    for distilled in [1.0, 2.0, 4.0] {
        let c = compounding_scale(7.5, distilled)?;
        println!(
            "omega 7.5 on a model distilled at {distilled}: effective scale {:.1}",
            c.scale
        );
    }
    Ok(())
}
