//! Sample-quality metrics against an analytic mixture.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::oracle::MixtureModel;
use crate::seed::{stream, Purpose};

pub const DEFAULT_DIRECTIONS: usize = 64;
pub const MIN_DIRECTIONS: usize = 8;
pub const SATURATION_LEVEL: f64 = 0.99;

fn batch_dim(batch: &[Vec<f64>]) -> Result<usize> {
    let d = batch.first().ok_or(Error::Empty("sample batch"))?.len();
    for x in batch {
        check_dim(d, x.len())?;
    }
    Ok(d)
}

/// Empirical mean and (biased, `1/N`) covariance, row-major.
pub fn empirical_moments(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = batch_dim(samples)?;
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for x in samples {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    for x in samples {
        for i in 0..d {
            let di = x[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += di * (x[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n);
    Ok((mean, cov))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentsError {
    /// L2 distance between empirical and true means.
    pub mean_error: f64,
    /// Frobenius distance between empirical and true covariances.
    pub cov_error: f64,
}

pub fn moments_error(samples: &[Vec<f64>], model: &MixtureModel) -> Result<MomentsError> {
    let d = batch_dim(samples)?;
    check_dim(model.dim(), d)?;
    let (mean, cov) = empirical_moments(samples)?;
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    Ok(MomentsError {
        mean_error: dist(&mean, &model.mean()),
        cov_error: dist(&cov, &model.covariance()),
    })
}

/// Exact empirical W1 on the line: mean absolute gap between order
/// statistics. Inputs need not be sorted.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("sample batch"));
    }
    check_dim(a.len(), b.len())?;
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Random unit vectors in `dim` dimensions, deterministic in `seed`.
pub fn projection_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, Purpose::Projections, dim as u64);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

fn project(batch: &[Vec<f64>], u: &[f64]) -> Vec<f64> {
    batch
        .iter()
        .map(|x| x.iter().zip(u).map(|(a, b)| a * b).sum())
        .collect()
}

/// Average 1-D W1 over `directions` seeded random projections.
pub fn sliced_wasserstein(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    directions: usize,
    seed: u64,
) -> Result<f64> {
    let d = batch_dim(a)?;
    check_dim(d, batch_dim(b)?)?;
    if d < 2 {
        return Err(Error::invalid("sliced distance needs dimension >= 2"));
    }
    if directions < MIN_DIRECTIONS {
        return Err(Error::invalid(format!(
            "need at least {MIN_DIRECTIONS} directions, got {directions}"
        )));
    }
    let mut total = 0.0;
    for u in projection_directions(d, directions, seed) {
        total += wasserstein_1d(&project(a, &u), &project(b, &u))?;
    }
    Ok(total / directions as f64)
}

/// W1 for 1-D batches, sliced W1 otherwise.
pub fn distribution_distance(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    directions: usize,
    seed: u64,
) -> Result<f64> {
    if batch_dim(a)? == 1 {
        check_dim(1, batch_dim(b)?)?;
        let flat = |x: &[Vec<f64>]| x.iter().map(|v| v[0]).collect::<Vec<_>>();
        wasserstein_1d(&flat(a), &flat(b))
    } else {
        sliced_wasserstein(a, b, directions, seed)
    }
}

/// Share of all entries with magnitude above 0.99.
pub fn saturation_fraction(samples: &[Vec<f64>]) -> f64 {
    let (hit, total) = samples
        .iter()
        .flatten()
        .fold((0usize, 0usize), |(h, n), v| {
            (h + usize::from(v.abs() > SATURATION_LEVEL), n + 1)
        });
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Metrics for one sampling run. `wall_time_ms` is the only field that is
/// not a function of configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport<C: Serialize> {
    pub config: C,
    pub timesteps: Vec<usize>,
    pub step_count: usize,
    pub model_evaluations: usize,
    pub mean_error: f64,
    pub cov_error: f64,
    pub wasserstein1: f64,
    pub saturation_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

impl<C: Serialize> RunReport<C> {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("mean_error", self.mean_error),
            ("cov_error", self.cov_error),
            ("wasserstein1", self.wasserstein1),
            ("saturation_fraction", self.saturation_fraction),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::NonFinite(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    /// Pretty JSON without the wall-clock field.
    pub fn to_json_deterministic(&self) -> Result<String>
    where
        C: Clone,
    {
        let mut copy = self.clone();
        copy.wall_time_ms = None;
        serde_json::to_string_pretty(&copy).map_err(|e| Error::Config(e.to_string()))
    }
}
