//! Guided few-step sampling on the skewed preset: equidistant timesteps with
//! the plain sampler and no clipping, against adaptive timesteps with the
//! gamma_i sampler and tanh-balance clipping. Prints the median distance over
//! a handful of seeds per step count.

use adasched::experiment::run_sample;
use adasched::ExperimentConfig;

const SEEDS: u64 = 5;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn config(steps: usize, seed: u64, ours: bool) -> adasched::Result<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    for (k, v) in [
        ("mixture", "skewed-2d"),
        ("condition", "0"),
        ("cfg_mode", "interpolate"),
        ("cfg_scale", "7.5"),
        ("batch", "1000"),
    ] {
        c.set(k, v)?;
    }
    c.set("steps", &steps.to_string())?;
    c.set("seed", &seed.to_string())?;
    if ours {
        c.set("timesteps", "adaptive")?;
        c.set("variant", "gamma_i")?;
        c.set("clip_method", "tanh-balance")?;
    } else {
        c.set("timesteps", "equidistant")?;
        c.set("variant", "plain")?;
        c.set("clip_method", "none")?;
    }
    Ok(c)
}

fn main() -> adasched::Result<()> {
    println!("steps  baseline  adaptive");
    for steps in [2, 4, 8] {
        let mut cols = [Vec::new(), Vec::new()];
        for seed in 0..SEEDS {
            for (i, ours) in [false, true].into_iter().enumerate() {
                let run = run_sample(&config(steps, seed, ours)?, false)?;
                cols[i].push(run.report.wasserstein1);
            }
        }
        let [a, b] = cols;
        println!("{steps:>5}  {:>8.4}  {:>8.4}", median(a), median(b));
    }
    Ok(())
}
