//! Values checked against independent reference computations.

use adasched::importance::DEFAULT_EPSILON;
use adasched::metrics::{moments_error, sliced_wasserstein, wasserstein_1d};
use adasched::postprocess::{exposure_correct, quantile_clip, smooth_clip, ChannelTensor};
use adasched::sampler::{denoise_step, initial_noise, noisify, FnModel};
use adasched::seed::{stream, Purpose};
use adasched::timesteps::{self, Provenance};
use adasched::{
    Component, ImportanceCurve, MixtureEps, MixtureModel, NoiseSchedule, Sampler, SamplerConfig,
    SamplerVariant,
};
use rand::Rng;
use rand_distr::StandardNormal;

/// Straight-line cumulative product of `1 - beta`.
fn reference_alpha_bars() -> Vec<f64> {
    let mut out = Vec::with_capacity(1000);
    let mut acc = 1.0;
    for t in 0..1000 {
        let beta = 1e-4 + (0.02 - 1e-4) * (t as f64) / 999.0;
        acc *= 1.0 - beta;
        out.push(acc);
    }
    out
}

#[test]
fn alpha_bar_matches_reference_loop() {
    let s = NoiseSchedule::ddpm_default();
    let r = reference_alpha_bars();
    assert!((s.alpha_bar(999).unwrap() - 4.0358e-5).abs() < 1e-8);
    for t in [0, 500, 999] {
        assert!((s.alpha_bar(t).unwrap() - r[t]).abs() <= 1e-15 * r[t].max(1.0) * 1000.0);
    }
}

#[test]
fn importance_at_ends_matches_reference() {
    let s = NoiseSchedule::ddpm_default();
    let c = ImportanceCurve::compute(&s, DEFAULT_EPSILON).unwrap();
    let r = reference_alpha_bars();
    let l: Vec<f64> = r.iter().map(|a| (a / (1.0 - a) + 1e-8).ln()).collect();
    let inv: Vec<f64> = (0..1000)
        .map(|t| {
            let g = if t == 0 {
                l[1] - l[0]
            } else if t == 999 {
                l[999] - l[998]
            } else {
                0.5 * (l[t + 1] - l[t - 1])
            };
            1.0 / g.abs()
        })
        .collect();
    let peak = inv.iter().copied().fold(0.0, f64::max);
    for t in [0, 349, 500, 999] {
        assert!((c.at(t).unwrap() - inv[t] / peak).abs() < 1e-12, "t={t}");
    }
    assert_eq!(c.argmax(), 349);
    assert!((c.at(0).unwrap() - 0.01258).abs() < 1e-4);
}

#[test]
fn two_segment_log_snr_gives_inverse_slope_ratio() {
    let (n, s1) = (200, 0.02);
    let mut l = Vec::with_capacity(n);
    let mut v = 6.0;
    for t in 0..n {
        l.push(v);
        v -= if t < n / 2 { s1 } else { 4.0 * s1 };
    }
    let ab: Vec<f64> = l.iter().map(|x: &f64| 1.0 / (1.0 + (-x).exp())).collect();
    let s = NoiseSchedule::from_alpha_bars(ab).unwrap();
    let c = ImportanceCurve::compute(&s, 1e-12).unwrap();
    let first = c.at(n / 4).unwrap();
    let second = c.at(3 * n / 4).unwrap();
    assert!((first / second - 4.0).abs() < 1e-3, "{}", first / second);
    assert!((first - 1.0).abs() < 1e-3);
}

#[test]
fn epsilon_insensitivity() {
    let s = NoiseSchedule::ddpm_default();
    let a = ImportanceCurve::compute(&s, 1e-8).unwrap();
    let b = ImportanceCurve::compute(&s, 1e-10).unwrap();
    // The perturbation scales like eps / SNR_t, so it is largest in the
    // last few steps where SNR is about 4e-5.
    for (t, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        let gap = (x - y).abs();
        let bound = if t < 990 { 1e-4 } else { 1.2e-4 };
        assert!(gap < bound, "t={t}: {gap}");
    }
}

#[test]
fn default_schedules_against_reference_spacing() {
    let s = NoiseSchedule::ddpm_default();
    let c = ImportanceCurve::compute(&s, DEFAULT_EPSILON).unwrap();
    let e = timesteps::equidistant(&s, 8).unwrap();
    let expected: Vec<usize> = (0..8)
        .map(|i| (999.0 * (7 - i) as f64 / 7.0).round() as usize)
        .collect();
    assert_eq!(e.steps(), expected.as_slice());
    assert_eq!(e.steps(), &[999, 856, 714, 571, 428, 285, 143, 0]);
    let i = timesteps::importance(&c, 8).unwrap();
    assert_eq!(i.steps(), &[875, 750, 625, 500, 375, 349, 249, 124]);

    let a = timesteps::adaptive(&s, &c, 8, 0.7).unwrap();
    assert_eq!(a.steps(), &[999, 856, 625, 500, 375, 349, 249, 0]);
    use Provenance::*;
    assert_eq!(
        a.provenance(),
        &[
            Equidistant,
            Equidistant,
            Importance,
            Importance,
            Importance,
            Importance,
            Importance,
            Equidistant
        ]
    );
    assert_eq!(
        timesteps::adaptive(&s, &c, 2, 0.7).unwrap().steps(),
        &[500, 349]
    );
    assert_eq!(
        timesteps::adaptive(&s, &c, 4, 0.7).unwrap().steps(),
        &[999, 500, 349, 249]
    );
}

#[test]
fn importance_schedule_is_denser_where_importance_is_high() {
    let s = NoiseSchedule::ddpm_default();
    let c = ImportanceCurve::compute(&s, DEFAULT_EPSILON).unwrap();
    let a = timesteps::adaptive(&s, &c, 8, 0.7).unwrap();
    let e = timesteps::equidistant(&s, 8).unwrap();
    // Mean gap between consecutive importance-selected slots vs uniform spacing.
    let gaps: Vec<usize> = a
        .steps()
        .windows(2)
        .zip(a.provenance().windows(2))
        .filter(|(_, p)| p[0] == Provenance::Importance && p[1] == Provenance::Importance)
        .map(|(w, _)| w[0] - w[1])
        .collect();
    let mean_gap = gaps.iter().sum::<usize>() as f64 / gaps.len() as f64;
    let uniform = (e.steps()[0] - e.steps()[7]) as f64 / 7.0;
    assert!(mean_gap < uniform, "{mean_gap} vs {uniform}");
}

#[test]
fn forward_diffuse_variance() {
    let s = NoiseSchedule::ddpm_default();
    let t = 420;
    let mut rng = stream(1, Purpose::GroundTruth, 0);
    let n = 100_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let v = s.forward_diffuse(&[0.7], t, &[z]).unwrap()[0];
        sum += v;
        sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = sq / nf - mean * mean;
    let target = 1.0 - s.alpha_bar(t).unwrap();
    assert!((var - target).abs() < 3.0 * target * (2.0 / nf).sqrt());
    let mean_target = s.alpha_bar(t).unwrap().sqrt() * 0.7;
    assert!((mean - mean_target).abs() < 4.0 * target.sqrt() / nf.sqrt());
}

#[test]
fn noisify_variance_telescopes() {
    let s = NoiseSchedule::ddpm_default();
    let (t_from, t_to) = (150, 610);
    let mut rng = stream(2, Purpose::Sampler, 0);
    let n = 100_000;
    let mut sq = 0.0;
    let mut sum = 0.0;
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let w: f64 = rng.sample(StandardNormal);
        let x = s.forward_diffuse(&[0.0], t_from, &[z]).unwrap();
        let v = noisify(&s, &x, t_from, t_to, &[w]).unwrap()[0];
        sum += v;
        sq += v * v;
    }
    let nf = n as f64;
    let var = sq / nf - (sum / nf).powi(2);
    let target = 1.0 - s.alpha_bar(t_to).unwrap();
    assert!((var - target).abs() < 3.0 * target * (2.0 / nf).sqrt());
}

fn random_mixture(seed: u64) -> MixtureModel {
    let mut rng = stream(seed, Purpose::GroundTruth, 99);
    let d = rng.random_range(1..=3);
    let k = rng.random_range(1..=4);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut comps: Vec<Component> = raw
        .iter()
        .map(|w| Component {
            weight: w / total,
            mean: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            variance: rng.random_range(0.02..0.6),
        })
        .collect();
    let s: f64 = comps.iter().map(|c| c.weight).sum();
    comps[0].weight += 1.0 - s;
    MixtureModel::new(comps).unwrap()
}

#[test]
fn epsilon_matches_finite_difference() {
    let s = NoiseSchedule::ddpm_default();
    for seed in 0..50 {
        let m = random_mixture(seed);
        let mut rng = stream(seed, Purpose::Initial, 0);
        let t = rng.random_range(0..1000);
        let x: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let eps = m.epsilon_prediction(&s, &x, t, None).unwrap();
        let sigma = (1.0 - s.alpha_bar(t).unwrap()).sqrt();
        for i in 0..x.len() {
            let h = 1e-5;
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (m.log_density(&s, &up, t).unwrap() - m.log_density(&s, &down, t).unwrap())
                / (2.0 * h);
            let expected = -sigma * fd;
            assert!(
                (eps[i] - expected).abs() <= 1e-5 * expected.abs().max(1e-3),
                "seed {seed}: {} vs {expected}",
                eps[i]
            );
        }
    }
}

#[test]
fn conditional_and_unconditional_differ_most_between_modes() {
    let s = NoiseSchedule::ddpm_default();
    let m = MixtureModel::new(vec![
        Component {
            weight: 0.5,
            mean: vec![-1.0],
            variance: 0.01,
        },
        Component {
            weight: 0.5,
            mean: vec![1.0],
            variance: 0.01,
        },
    ])
    .unwrap();
    let t = 50;
    let scale = s.alpha_bar(t).unwrap().sqrt();
    let (mut best_x, mut best) = (0.0, 0.0);
    for i in -200..=200 {
        let x = i as f64 / 100.0;
        let c = m.epsilon_prediction(&s, &[x], t, Some(0)).unwrap()[0];
        let u = m.epsilon_prediction(&s, &[x], t, None).unwrap()[0];
        if (c - u).abs() > best {
            best = (c - u).abs();
            best_x = x;
        }
    }
    // Condition 0 sits at -scale; the gap peaks on the far side of the
    // midpoint, at the other mode.
    assert!(best_x > 0.0 && best_x <= scale + 0.2, "peak at {best_x}");
}

#[test]
fn pure_noise_prediction_tends_to_input() {
    let ab = vec![0.999, 0.5, 1e-4, 1e-8];
    let s = NoiseSchedule::from_alpha_bars(ab).unwrap();
    let m = random_mixture(3);
    let x: Vec<f64> = (0..m.dim()).map(|i| 0.3 * i as f64 - 0.2).collect();
    let eps = m.epsilon_prediction(&s, &x, 3, None).unwrap();
    for (e, xi) in eps.iter().zip(&x) {
        assert!((e - xi).abs() < 1e-3);
    }
}

#[test]
fn ground_truth_respects_zero_weight_and_clt() {
    let two = MixtureModel::new(vec![
        Component {
            weight: 1.0,
            mean: vec![0.5, 0.5],
            variance: 0.04,
        },
        Component {
            weight: 0.0,
            mean: vec![-0.5, -0.5],
            variance: 0.04,
        },
    ])
    .unwrap();
    let draws = two.sample_ground_truth(5000, 8);
    let mean0 = draws.iter().map(|x| x[0]).sum::<f64>() / 5000.0;
    assert!((mean0 - 0.5).abs() < 4.0 * 0.2 / (5000f64).sqrt());
    assert!(draws.iter().all(|x| x[0] + x[1] > -0.5));
}

#[test]
fn single_gaussian_sampler_terminal_mean() {
    let s = NoiseSchedule::ddpm_default();
    let m = MixtureModel::new(vec![Component {
        weight: 1.0,
        mean: vec![0.4],
        variance: 0.09,
    }])
    .unwrap();
    let ts = timesteps::equidistant(&s, 32).unwrap();
    let model = MixtureEps::unconditional(&m, &s);
    let cfg = SamplerConfig {
        variant: SamplerVariant::Plain,
        ..SamplerConfig::default()
    };
    let out = Sampler::new(cfg, &s, &ts)
        .unwrap()
        .sample_batch(&model, &initial_noise(4, 4000, 1))
        .unwrap();
    let mean = out.iter().map(|x| x[0]).sum::<f64>() / out.len() as f64;
    assert!((mean - 0.4).abs() < 4.0 * 0.3 / (4000f64).sqrt(), "{mean}");
}

#[test]
fn bimodal_gamma_sampler_is_bimodal_and_converges() {
    let s = NoiseSchedule::ddpm_default();
    let m = MixtureModel::preset("bimodal-1d").unwrap();
    let n = 4000;
    let flat = |b: &[Vec<f64>]| b.iter().map(|v| v[0]).collect::<Vec<_>>();
    let gt = flat(&m.sample_ground_truth(n, 3));
    let model = MixtureEps::unconditional(&m, &s);
    let run = |steps: usize| {
        let ts = timesteps::equidistant(&s, steps).unwrap();
        let cfg = SamplerConfig {
            variant: SamplerVariant::Gamma,
            rng_seed: 21,
            ..SamplerConfig::default()
        };
        let out = Sampler::new(cfg, &s, &ts)
            .unwrap()
            .sample_batch(&model, &initial_noise(21, n, 1))
            .unwrap();
        flat(&out)
    };
    let eight = run(8);
    let right = eight.iter().filter(|&&x| x > 0.0).count() as f64 / n as f64;
    assert!((right - 0.7).abs() < 0.1, "mode weight {right}");
    let near_gap = eight.iter().filter(|x| x.abs() < 0.1).count();
    let near_modes = eight.iter().filter(|x| (x.abs() - 0.4).abs() < 0.1).count();
    assert!(near_modes > 4 * near_gap, "{near_modes} vs {near_gap}");
    // Eight steps leave a visible discretisation error; it shrinks with n.
    let w: Vec<f64> = [8, 16, 64]
        .map(|k| wasserstein_1d(&if k == 8 { eight.clone() } else { run(k) }, &gt).unwrap())
        .to_vec();
    assert!(w[0] < 0.2 && w[1] < w[0] && w[2] < w[1], "{w:?}");
}

#[test]
fn exact_noise_recovers_clean_sample() {
    let s = NoiseSchedule::ddpm_default();
    let x0 = [0.25, -0.75];
    let z = [0.4, 1.3];
    let xt = s.forward_diffuse(&x0, 700, &z).unwrap();
    let model = FnModel::new(2, move |_: &[f64], _| z.to_vec());
    let x_to = denoise_step(&model, &s, &xt, 700, 100).unwrap();
    let direct = s.forward_diffuse(&x0, 100, &z).unwrap();
    for (a, b) in x_to.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn tanh_linear_regime() {
    let xs: Vec<f64> = (-100..=100).map(|i| i as f64 / 1000.0).collect();
    let out = smooth_clip(&ChannelTensor::single(xs.clone()).unwrap());
    for (x, y) in xs.iter().zip(out.data()) {
        assert!((x - y).abs() <= x.abs().powi(3) / 3.0 + 1e-18);
        if *x != 0.0 {
            assert!(((y - x) / x).abs() < 0.004);
        }
    }
}

#[test]
fn exposure_correct_pulls_shifted_inputs_together() {
    let base = vec![0.1, -0.3, 0.2, 0.05, -0.15, 0.4];
    let t = |v: Vec<f64>| ChannelTensor::new(v, 2).unwrap();
    let ref_out = exposure_correct(&t(base.clone()), 0.5, 0.5);
    for c in [1.0, 5.0, 10.0] {
        let shifted: Vec<f64> = base.iter().map(|v| v + c).collect();
        let out = exposure_correct(&t(shifted), 0.5, 0.5);
        let gap_out = out
            .data()
            .iter()
            .zip(ref_out.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap_out < c, "shift {c}: {gap_out}");
        // Centring removes (a + b - ab) = 0.75 of the shift before tanh.
        let balanced = adasched::postprocess::color_balance(
            &t(base.iter().map(|v| v + c).collect()),
            0.5,
            0.5,
        );
        let balanced_ref = adasched::postprocess::color_balance(&t(base.clone()), 0.5, 0.5);
        let residual = balanced.data()[0] - balanced_ref.data()[0];
        assert!((residual - 0.25 * c).abs() < 1e-12);
    }
}

#[test]
fn overexposed_tensor_saturates_less_after_centring() {
    let mut rng = stream(6, Purpose::GroundTruth, 0);
    let data: Vec<f64> = (0..3000)
        .map(|_| 3.0 + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let x = ChannelTensor::new(data, 3).unwrap();
    let sat = |t: &ChannelTensor| t.data().iter().filter(|v| v.abs() > 0.99).count();
    let corrected = sat(&exposure_correct(&x, 0.5, 0.5));
    let clipped = sat(&smooth_clip(&x));
    let quantile = sat(&quantile_clip(&x, 0.995, 1.0).unwrap());
    assert!(
        corrected < clipped && corrected < quantile,
        "{corrected} {clipped} {quantile}"
    );
}

#[test]
fn quantile_clip_with_outliers() {
    let mut data: Vec<f64> = (0..990).map(|i| -1.0 + 2.0 * i as f64 / 989.0).collect();
    data.extend(std::iter::repeat_n(100.0, 10));
    let x = ChannelTensor::single(data.clone()).unwrap();
    let out = quantile_clip(&x, 0.99, 10.0).unwrap();
    // Reference linear-interpolation quantile of |x|.
    let mut abs: Vec<f64> = data.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let pos: f64 = 0.99 * 999.0;
    let (lo, frac) = (pos.floor() as usize, pos - pos.floor());
    let q = abs[lo] + frac * (abs[lo + 1] - abs[lo]);
    let s = q.clamp(1.0, 10.0);
    assert!(s > 1.0 && s < 10.0);
    for (i, v) in out.data().iter().take(990).enumerate() {
        assert!((v - data[i] / s).abs() < 1e-12);
    }
}

#[test]
fn shifted_gaussians_w1_is_mean_gap() {
    let mut rng = stream(7, Purpose::GroundTruth, 0);
    let n = 100_000;
    let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..n)
        .map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal))
        .collect();
    assert!((wasserstein_1d(&a, &b).unwrap() - 1.0).abs() < 0.02);
}

#[test]
fn sliced_w1_of_shift_matches_projection_average() {
    let mut rng = stream(8, Purpose::GroundTruth, 0);
    let n = 4000;
    let shift = [1.0, 0.0];
    let a: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect();
    let b: Vec<Vec<f64>> = a
        .iter()
        .map(|x| vec![x[0] + shift[0], x[1] + shift[1]])
        .collect();
    let dirs = adasched::metrics::projection_directions(2, 256, 5);
    let expected = dirs
        .iter()
        .map(|u| (u[0] * shift[0] + u[1] * shift[1]).abs())
        .sum::<f64>()
        / 256.0;
    let got = sliced_wasserstein(&a, &b, 256, 5).unwrap();
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    // And the average of |cos| over the circle is 2/pi.
    assert!((expected - 2.0 / std::f64::consts::PI).abs() < 0.05);
}

#[test]
fn moments_of_exact_draws() {
    let m = MixtureModel::preset("skewed-2d").unwrap();
    let n = 100_000;
    let draws = m.sample_ground_truth(n, 10);
    let e = moments_error(&draws, &m).unwrap();
    let sigma_max = m.covariance()[0].max(m.covariance()[3]).sqrt();
    assert!(e.mean_error < 4.0 * sigma_max / (n as f64).sqrt() * 2f64.sqrt());
}

#[test]
fn bimodal_cov_error_below_calibrated_threshold() {
    let m = MixtureModel::preset("bimodal-1d").unwrap();
    let errs: Vec<f64> = (0..20)
        .map(|i| {
            moments_error(&m.sample_ground_truth(10_000, 500 + i), &m)
                .unwrap()
                .cov_error
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / 20.0;
    let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
    let threshold = mean + 5.0 * std;
    let e = moments_error(&m.sample_ground_truth(10_000, 77), &m).unwrap();
    assert!(e.cov_error < threshold);
}
