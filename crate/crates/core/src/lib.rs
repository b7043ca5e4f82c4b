//! Adaptive timestep selection and few-step sampling for diffusion models,
//! exercised against an analytic Gaussian-mixture oracle.
//!
//! The pipeline runs noise schedule -> importance curve -> timestep
//! schedule -> sampler -> post-processing -> metrics. [`experiment`] wires
//! it into the `schedule`, `sample` and `compare` commands.

pub mod error;
pub mod experiment;
pub mod guidance;
pub mod importance;
pub mod metrics;
pub mod noise_schedule;
pub mod oracle;
pub mod postprocess;
pub mod sampler;
pub mod seed;
pub mod timesteps;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, TimestepRule};
pub use guidance::{GuidanceConfig, GuidanceMode};
pub use importance::ImportanceCurve;
pub use noise_schedule::{NoiseSchedule, ScheduleKind};
pub use oracle::{Component, MixtureEps, MixtureModel};
pub use postprocess::{ChannelTensor, ClipMethod, PostprocessConfig};
pub use sampler::{EpsModel, SampleTrajectory, Sampler, SamplerConfig, SamplerVariant};
pub use timesteps::{Provenance, TimestepSchedule};
