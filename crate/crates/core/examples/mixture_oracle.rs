//! The analytic Gaussian-mixture oracle: closed-form scores, epsilon
//! predictions, and exact draws from the clean distribution.

use adasched::metrics::{empirical_moments, moments_error};
use adasched::{MixtureModel, NoiseSchedule};

fn main() -> adasched::Result<()> {
    let schedule = NoiseSchedule::ddpm_default();
    for name in MixtureModel::PRESETS {
        let model = MixtureModel::preset(name).expect("known preset");
        println!("{name}: dim={} components={}", model.dim(), model.len());

        let x = vec![0.25; model.dim()];
        for t in [0, 200, 600, 999] {
            let score = model.score(&schedule, &x, t)?;
            let eps = model.epsilon_prediction(&schedule, &x, t, None)?;
            println!("  t={t:>3} score={score:.4?} eps={eps:.4?}");
        }
        let eps0 = model.epsilon_prediction(&schedule, &x, 300, Some(0))?;
        println!("  conditioned on component 0 at t=300: eps={eps0:.4?}");

        let draws = model.sample_ground_truth(20_000, 7);
        let (mean, _) = empirical_moments(&draws)?;
        let err = moments_error(&draws, &model)?;
        println!(
            "  exact draws: mean={mean:.4?} (model {:.4?}), mean err {:.2e}, cov err {:.2e}",
            model.mean(),
            err.mean_error,
            err.cov_error
        );
    }
    Ok(())
}
