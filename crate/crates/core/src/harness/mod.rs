//! Experiment orchestration: nested calibration sets, multi-seed runs over
//! the comparison methods, metric tables, sample dumps and a run manifest.

mod config;
mod dump;
mod nested;
mod run;

pub use config::{ExperimentConfig, Method, TaskChoice, CONFIG_KEYS};
pub use dump::{dump_header, dump_posterior_samples, read_sample_dump, write_sample_dump, SampleRecord};
pub use nested::{build_nested_calibration, NestedCalibrationFamily};
pub use run::{
    build_world, evaluate_draws, evaluate_sampler, read_metrics, run_experiment, CellFailure, EvalOutcome, FileEntry, Manifest,
    RunArtifacts, World,
};

use crate::baseline::ConditionalDensityModel;
use crate::error::Result;
use crate::flow::FmcpeModel;
use crate::rng::RandomSource;

/// Anything that draws posterior samples in original θ coordinates.
pub trait PosteriorSampler {
    fn sample_posterior(&self, y: &[f64], n: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>>;
    fn param_dim(&self) -> usize;
}

impl PosteriorSampler for ConditionalDensityModel {
    fn sample_posterior(&self, y: &[f64], n: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
        self.sample(y, n, rng)
    }

    fn param_dim(&self) -> usize {
        ConditionalDensityModel::param_dim(self)
    }
}

impl PosteriorSampler for FmcpeModel {
    fn sample_posterior(&self, y: &[f64], n: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
        FmcpeModel::sample_posterior(self, y, n, rng)
    }

    fn param_dim(&self) -> usize {
        FmcpeModel::param_dim(self)
    }
}
